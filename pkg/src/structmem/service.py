"""HTTP retrieval service: SLLE retrieval plus database administration.

Retrieval runs read-only against an immutable snapshot grabbed per request;
admin writes (insert, swap) serialize through the handle's single writer, so
no response ever mixes two database versions.
"""

from __future__ import annotations

import base64
import threading
import time

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .core import AttributeSet, LandmarkMask, MemoryRecord, normalize
from .errors import (
    DimMismatchError,
    DuplicateIdError,
    KTooLargeError,
    StructMemError,
    ValidationFailedError,
)
from .slle import SlleConfig, slle_retrieve
from .store import DatabaseHandle, MemoryDatabase


def _sig9(x: float) -> float:
    """Round to 9 significant digits (float32-faithful round-trip)."""
    return float(f"{x:.9g}")


class RetrieveRequest(BaseModel):
    embedding: list[float]
    k: int | None = Field(default=None, ge=1)
    alpha: float | None = Field(default=None, ge=0.0, le=1.0)
    include_soft_mask: bool = False


class RecordIn(BaseModel):
    id: str
    embedding: list[float]
    category: str
    landmark_png_base64: str
    attributes: dict | None = None
    source: str | None = None


class SwapRequest(BaseModel):
    path: str


class ServiceStats:
    def __init__(self):
        self._lock = threading.Lock()
        self.retrieve_count = 0
        self.error_count = 0
        self._latencies_ms: list[float] = []

    def record(self, latency_ms: float, ok: bool):
        with self._lock:
            if ok:
                self.retrieve_count += 1
                self._latencies_ms.append(latency_ms)
                if len(self._latencies_ms) > 100_000:
                    self._latencies_ms = self._latencies_ms[-50_000:]
            else:
                self.error_count += 1

    def summary(self) -> dict:
        with self._lock:
            lat = sorted(self._latencies_ms)
            pct = lambda p: lat[min(len(lat) - 1, int(p * len(lat)))] if lat else None
            return {
                "retrieve_count": self.retrieve_count,
                "error_count": self.error_count,
                "latency_ms": {"p50": pct(0.50), "p90": pct(0.90), "p99": pct(0.99)},
            }


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(
    handle: DatabaseHandle,
    default_k: int = 4,
    default_alpha: float = 0.5,
    max_k: int | None = None,
) -> FastAPI:
    app = FastAPI(title="structmem retrieval service")
    stats = ServiceStats()
    app.state.handle = handle

    @app.post("/v1/retrieve")
    def retrieve(req: RetrieveRequest):
        started = time.perf_counter()
        db, version = handle.snapshot()
        if db is None:
            return _error(503, "no_database", "no database loaded")
        k = req.k if req.k is not None else default_k
        alpha = req.alpha if req.alpha is not None else default_alpha
        if max_k is not None and k > max_k:
            return _error(409, "k_too_large", f"k={k} exceeds configured max {max_k}")
        try:
            query = normalize(req.embedding)
            if query.dim != db.dim:
                raise DimMismatchError(f"embedding dim {query.dim} != database dim {db.dim}")
            cfg = SlleConfig(k=k, alpha=alpha)
            result = slle_retrieve(db, query, cfg)
        except KTooLargeError as exc:
            stats.record(0, ok=False)
            return _error(409, "k_too_large", str(exc))
        except StructMemError as exc:
            stats.record(0, ok=False)
            return _error(400, exc.code, str(exc))

        body = {
            "fused_embedding": [_sig9(x) for x in result.fused_embedding.vector],
            "weights": [_sig9(x) for x in result.weights],
            "neighbors": [
                {"id": n.id, "similarity": _sig9(n.similarity)} for n in result.neighbors
            ],
            "landmark_id": result.landmark_id,
            "objective": _sig9(result.objective),
            "db_version": version,
        }
        if req.include_soft_mask:
            body["landmark"] = base64.b64encode(
                result.fused_landmark.to_png_bytes()
            ).decode("ascii")
        stats.record((time.perf_counter() - started) * 1e3, ok=True)
        return body

    @app.post("/v1/records", status_code=201)
    def add_record(rec: RecordIn):
        db, _ = handle.snapshot()
        try:
            landmark = LandmarkMask.from_png_bytes(base64.b64decode(rec.landmark_png_base64))
            record = MemoryRecord(
                id=rec.id,
                embedding=normalize(rec.embedding),
                landmark=landmark,
                category=rec.category,
                attributes=AttributeSet.from_dict(rec.attributes) if rec.attributes else None,
                source=rec.source,
            )
            if db is not None and record.embedding.dim != db.dim:
                raise DimMismatchError(
                    f"embedding dim {record.embedding.dim} != database dim {db.dim}"
                )
            version = handle.insert(record)
        except DuplicateIdError as exc:
            return _error(409, "duplicate_id", str(exc))
        except StructMemError as exc:
            return _error(400, exc.code, str(exc))
        except (KeyError, ValueError) as exc:
            return _error(400, "validation", str(exc))
        return {"id": rec.id, "db_version": version}

    @app.get("/v1/records/{record_id}")
    def get_record(record_id: str):
        db, version = handle.snapshot()
        if db is None:
            return _error(503, "no_database", "no database loaded")
        rec = db.get(record_id)
        if rec is None:
            return _error(404, "not_found", f"no record {record_id!r}")
        return {
            "id": rec.id,
            "category": rec.category,
            "attributes": rec.attributes.to_dict() if rec.attributes else None,
            "source": rec.source,
            "embedding": [_sig9(x) for x in rec.embedding.vector],
            "landmark_png_base64": base64.b64encode(rec.landmark.to_png_bytes()).decode("ascii"),
            "db_version": version,
        }

    @app.post("/v1/db/swap")
    def swap(req: SwapRequest):
        import os

        if not os.path.isdir(req.path):
            return _error(404, "not_found", f"no database directory at {req.path}")
        try:
            new_db = MemoryDatabase.load(req.path)
            version = handle.swap(new_db)
        except (StructMemError, ValidationFailedError) as exc:
            code = exc.code if isinstance(exc, StructMemError) else "validation_failed"
            return _error(400, code, str(exc))
        return {"db_version": version}

    @app.get("/v1/health")
    def health():
        db, version = handle.snapshot()
        if db is None:
            return {"status": "degraded", "db_version": version, "dim": None, "count": 0}
        return {"status": "ok", "db_version": version, "dim": db.dim, "count": db.count}

    @app.get("/v1/stats")
    def get_stats():
        return stats.summary()

    return app
