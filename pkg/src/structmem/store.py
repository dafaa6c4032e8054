"""Embedding-landmark memory database: exact cosine KNN, bit-exact
directory persistence, and an atomically swappable serving handle."""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import AttributeSet, LandmarkMask, MemoryRecord, StructureEmbedding
from .errors import (
    ChecksumMismatchError,
    CorruptManifestError,
    DimMismatchError,
    DuplicateIdError,
    EmptyDatabaseError,
    KTooLargeError,
    ValidationFailedError,
)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Neighbor:
    id: str
    similarity: float
    rank: int  # 1-based


def cosine_similarity(a: StructureEmbedding, b: StructureEmbedding) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1]."""
    if a.dim != b.dim:
        raise DimMismatchError(f"dims {a.dim} vs {b.dim}")
    return float(np.clip(np.dot(a.vector, b.vector), -1.0, 1.0))


class MemoryDatabase:
    """Ordered record collection mirrored by a contiguous float32 index matrix.

    The index row for record i is its embedding cast to float32; similarity is
    computed in float64 from the float32-stored rows so persisted and
    in-memory databases rank identically.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise DimMismatchError("dim must be positive")
        self.dim = int(dim)
        self.records: list[MemoryRecord] = []
        self.index = np.empty((0, self.dim), dtype=np.float32)
        self.version = 1
        self._ids: set[str] = set()

    @classmethod
    def from_records(cls, records, dim: int | None = None) -> "MemoryDatabase":
        records = list(records)
        if dim is None:
            if not records:
                raise EmptyDatabaseError("cannot infer dim from zero records")
            dim = records[0].embedding.dim
        db = cls(dim)
        for rec in records:
            db.insert(rec)
        return db

    @property
    def count(self) -> int:
        return len(self.records)

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._ids

    def get(self, record_id: str) -> MemoryRecord | None:
        for rec in self.records:
            if rec.id == record_id:
                return rec
        return None

    def insert(self, record: MemoryRecord) -> str:
        if record.embedding.dim != self.dim:
            raise DimMismatchError(
                f"record dim {record.embedding.dim} != database dim {self.dim}"
            )
        if record.id in self._ids:
            raise DuplicateIdError(f"duplicate id {record.id!r}")
        row = record.embedding.vector.astype(np.float32).reshape(1, -1)
        self.index = np.vstack([self.index, row]) if self.count else row.copy()
        self.records.append(record)
        self._ids.add(record.id)
        self.version += 1
        return record.id

    def copy_with(self, record: MemoryRecord) -> "MemoryDatabase":
        """Return a new database with the record appended; self is untouched."""
        db = MemoryDatabase(self.dim)
        db.records = list(self.records)
        db._ids = set(self._ids)
        db.index = self.index
        db.version = self.version
        db.insert(record)
        return db

    def knn(self, query: StructureEmbedding, k: int) -> list[Neighbor]:
        """Exact top-k by cosine similarity (brute-force scan).

        Sorted by similarity descending; ties broken by ascending record id.
        """
        if self.count == 0:
            raise EmptyDatabaseError("database has no records")
        if query.dim != self.dim:
            raise DimMismatchError(f"query dim {query.dim} != database dim {self.dim}")
        if k < 1 or k > self.count:
            raise KTooLargeError(f"k={k} outside [1, {self.count}]")
        records = self.records
        sims = self.index.astype(np.float64) @ query.vector
        np.clip(sims, -1.0, 1.0, out=sims)
        ids = np.array([r.id for r in records])
        order = np.lexsort((ids, -sims))[:k]
        return [
            Neighbor(id=records[i].id, similarity=float(sims[i]), rank=rank)
            for rank, i in enumerate(order, start=1)
        ]

    # --- persistence --------------------------------------------------

    def save(self, path) -> None:
        """Write the directory format: manifest.json, embeddings.f32 (little-
        endian float32 row-major), records.jsonl, landmarks/ one PNG each."""
        root = Path(path)
        root.mkdir(parents=True, exist_ok=True)
        (root / "landmarks").mkdir(exist_ok=True)

        blob = np.ascontiguousarray(self.index, dtype="<f4").tobytes()
        (root / "embeddings.f32").write_bytes(blob)
        checksum = hashlib.sha256(blob).hexdigest()

        with open(root / "records.jsonl", "w") as fh:
            for i, rec in enumerate(self.records):
                landmark_name = f"landmarks/{i:06d}.png"
                rec.landmark.save_png(root / landmark_name)
                entry = {
                    "id": rec.id,
                    "category": rec.category,
                    "landmark": landmark_name,
                }
                if rec.attributes is not None:
                    entry["attributes"] = rec.attributes.to_dict()
                if rec.source is not None:
                    entry["source"] = rec.source
                fh.write(json.dumps(entry) + "\n")

        manifest = {
            "format_version": FORMAT_VERSION,
            "dim": self.dim,
            "count": self.count,
            "checksum": f"sha256:{checksum}",
        }
        (root / "manifest.json").write_text(json.dumps(manifest, indent=2))

    @classmethod
    def load(cls, path) -> "MemoryDatabase":
        root = Path(path)
        try:
            manifest = json.loads((root / "manifest.json").read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CorruptManifestError(f"cannot read manifest: {exc}") from exc
        for key in ("format_version", "dim", "count", "checksum"):
            if key not in manifest:
                raise CorruptManifestError(f"manifest missing {key!r}")
        if manifest["format_version"] != FORMAT_VERSION:
            raise CorruptManifestError(
                f"unsupported format_version {manifest['format_version']}"
            )
        dim, count = int(manifest["dim"]), int(manifest["count"])

        blob = (root / "embeddings.f32").read_bytes()
        checksum = "sha256:" + hashlib.sha256(blob).hexdigest()
        if checksum != manifest["checksum"]:
            raise ChecksumMismatchError("embeddings.f32 checksum mismatch")
        if len(blob) != count * dim * 4:
            raise ChecksumMismatchError("embeddings.f32 size mismatch")
        matrix = np.frombuffer(blob, dtype="<f4").reshape(count, dim).copy()

        db = cls(dim)
        with open(root / "records.jsonl") as fh:
            for i, line in enumerate(fh):
                entry = json.loads(line)
                attrs = entry.get("attributes")
                rec = MemoryRecord(
                    id=entry["id"],
                    # float32 storage is authoritative; no renormalization.
                    embedding=StructureEmbedding(matrix[i].astype(np.float64)),
                    landmark=LandmarkMask.load(root / entry["landmark"]),
                    category=entry["category"],
                    attributes=AttributeSet.from_dict(attrs) if attrs else None,
                    source=entry.get("source"),
                )
                db.insert(rec)
        if db.count != count:
            raise CorruptManifestError(
                f"records.jsonl has {db.count} entries, manifest says {count}"
            )
        db.index = matrix  # keep bit-identical rows
        db.version = 1
        return db


class DatabaseHandle:
    """Atomically swappable reference to an immutable database snapshot.

    Readers grab (db, version) in a single attribute read and never block;
    writers serialize through a lock and publish a fresh snapshot. Databases
    placed in a handle must not be mutated afterwards.
    """

    def __init__(self, db: MemoryDatabase | None = None, fixed_dim: int | None = None):
        self._lock = threading.Lock()
        self.fixed_dim = fixed_dim
        # serving version is the handle's own counter, independent of the
        # database's internal mutation counter
        self._state: tuple[MemoryDatabase | None, int] = (db, 1 if db is not None else 0)

    def snapshot(self) -> tuple[MemoryDatabase | None, int]:
        return self._state

    def swap(self, new_db: MemoryDatabase) -> int:
        if new_db.count < 1:
            raise ValidationFailedError("refusing to serve an empty database")
        if self.fixed_dim is not None and new_db.dim != self.fixed_dim:
            raise ValidationFailedError(
                f"database dim {new_db.dim} != configured dim {self.fixed_dim}"
            )
        with self._lock:
            _, version = self._state
            new_version = version + 1
            new_db.version = new_version
            self._state = (new_db, new_version)
        return new_version

    def insert(self, record: MemoryRecord) -> int:
        with self._lock:
            db, version = self._state
            if db is None:
                new_db = MemoryDatabase.from_records([record])
            else:
                new_db = db.copy_with(record)
            new_version = version + 1
            new_db.version = new_version
            self._state = (new_db, new_version)
        return new_version
