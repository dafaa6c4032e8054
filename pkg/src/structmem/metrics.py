"""Evaluation: contrastive (InfoNCE) loss with analytic gradient, mask IoU,
bounding-box alignment, and retrieval accuracy reports."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LandmarkMask, StructureEmbedding
from .errors import (
    CountMismatchError,
    DimMismatchError,
    EmptyDatabaseError,
    EmptyMaskError,
    NonPositiveTauError,
    ShapeMismatchError,
)

DEFAULT_TAU = 0.07
DEFAULT_IOU_THRESHOLD = 0.85


@dataclass(frozen=True)
class SimilarityMatrix:
    """values[i, j] = cosine similarity(query_i, key_j); square N x N."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ShapeMismatchError(f"similarity matrix must be square, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def similarity_matrix(
    queries: list[StructureEmbedding], keys: list[StructureEmbedding]
) -> SimilarityMatrix:
    if len(queries) != len(keys):
        raise CountMismatchError(f"{len(queries)} queries vs {len(keys)} keys")
    if not queries:
        raise CountMismatchError("need at least one pair")
    dims = {e.dim for e in queries} | {e.dim for e in keys}
    if len(dims) > 1:
        raise DimMismatchError(f"mixed dims {sorted(dims)}")
    q = np.stack([e.vector for e in queries])
    k = np.stack([e.vector for e in keys])
    return SimilarityMatrix(np.clip(q @ k.T, -1.0, 1.0))


def infonce_loss(sim: SimilarityMatrix, tau: float) -> tuple[float, np.ndarray]:
    """Row-wise softmax cross-entropy with diagonal positives.

    loss = -(1/N) * sum_i log softmax(s_i / tau)_i, computed with the
    max-shift trick. Returns (loss, gradient), where gradient[i, j] =
    d loss / d s_ij = (1/(N tau)) * (softmax(s_i / tau)_j - [j == i]).
    """
    if tau <= 0:
        raise NonPositiveTauError(f"tau must be positive, got {tau}")
    s = sim.values / tau
    n = sim.n
    shift = s - s.max(axis=1, keepdims=True)
    exp = np.exp(shift)
    z = exp.sum(axis=1, keepdims=True)
    log_softmax_diag = np.diag(shift) - np.log(z[:, 0])
    loss = -float(log_softmax_diag.mean())
    softmax = exp / z
    grad = (softmax - np.eye(n)) / (n * tau)
    return loss, grad


def positive_ranks(sim: SimilarityMatrix) -> np.ndarray:
    """1-based rank of each diagonal entry within its row (1 = best)."""
    v = sim.values
    diag = np.diag(v)
    return 1 + (v > diag[:, None]).sum(axis=1)


def mask_iou(a: LandmarkMask, b: LandmarkMask) -> float:
    """Intersection over union of two equally sized masks; 1.0 if both empty."""
    if a.bits.shape != b.bits.shape:
        raise ShapeMismatchError(f"mask shapes differ: {a.bits.shape} vs {b.bits.shape}")
    union = int(np.logical_or(a.bits, b.bits).sum())
    if union == 0:
        return 1.0
    inter = int(np.logical_and(a.bits, b.bits).sum())
    return inter / union


def _bbox_crop(mask: LandmarkMask) -> np.ndarray:
    rows = np.flatnonzero(mask.bits.any(axis=1))
    cols = np.flatnonzero(mask.bits.any(axis=0))
    if rows.size == 0:
        raise EmptyMaskError("cannot compute bounding box of an empty mask")
    return mask.bits[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]


def _nn_resize(bits: np.ndarray, height: int, width: int) -> np.ndarray:
    src_h, src_w = bits.shape
    rows = (np.arange(height) * src_h) // height
    cols = (np.arange(width) * src_w) // width
    return bits[np.ix_(rows, cols)]


def align_by_bbox(a: LandmarkMask, b: LandmarkMask) -> tuple[LandmarkMask, LandmarkMask]:
    """Crop both masks to their tight foreground boxes, then nearest-neighbor
    resize the smaller crop (by area) to the larger crop's dimensions."""
    ca, cb = _bbox_crop(a), _bbox_crop(b)
    if ca.shape == cb.shape:
        return LandmarkMask(ca), LandmarkMask(cb)
    if ca.size >= cb.size:
        cb = _nn_resize(cb, *ca.shape)
    else:
        ca = _nn_resize(ca, *cb.shape)
    return LandmarkMask(ca), LandmarkMask(cb)


def aligned_iou(a: LandmarkMask, b: LandmarkMask) -> float:
    aa, bb = align_by_bbox(a, b)
    return mask_iou(aa, bb)


@dataclass(frozen=True)
class RetrievalEvalReport:
    accuracy_at: dict  # k -> fraction of queries with any hit in the top k
    mean_iou: float  # mean over queries of the top-1 aligned IoU
    n_queries: int
    iou_threshold: float
    db_count: int

    @property
    def top1_accuracy(self) -> float:
        return self.accuracy_at.get(1, 0.0)

    @property
    def top5_accuracy(self) -> float:
        return self.accuracy_at.get(5, 0.0)

    def to_dict(self) -> dict:
        return {
            "scale": self.db_count,
            "n_queries": self.n_queries,
            "iou_threshold": self.iou_threshold,
            "accuracy_at": {str(k): v for k, v in self.accuracy_at.items()},
            "mean_iou": self.mean_iou,
        }


def eval_retrieval(
    db,
    queries: list[tuple[StructureEmbedding, LandmarkMask]],
    k_list=(1, 5),
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> RetrievalEvalReport:
    """Top-k retrieval accuracy under the aligned-IoU criterion.

    A query counts as a hit at k if ANY of its k retrieved landmarks has
    aligned IoU strictly greater than the threshold against the query's
    ground-truth landmark. mean_iou averages the top-1 aligned IoU.
    """
    if not queries:
        raise CountMismatchError("need at least one query")
    if db.count == 0:
        raise EmptyDatabaseError("database has no records")
    k_list = sorted(set(int(k) for k in k_list))
    k_max = min(max(k_list), db.count)
    by_id = {rec.id: rec for rec in db.records}

    hits = {k: 0 for k in k_list}
    iou_sum = 0.0
    for embedding, truth in queries:
        neighbors = db.knn(embedding, k_max)
        ious = [aligned_iou(by_id[n.id].landmark, truth) for n in neighbors]
        iou_sum += ious[0]
        for k in k_list:
            if any(v > iou_threshold for v in ious[: min(k, k_max)]):
                hits[k] += 1

    m = len(queries)
    return RetrievalEvalReport(
        accuracy_at={k: hits[k] / m for k in k_list},
        mean_iou=iou_sum / m,
        n_queries=m,
        iou_threshold=iou_threshold,
        db_count=db.count,
    )


def format_retrieval_table(reports: list[RetrievalEvalReport]) -> str:
    """Plain-text table with one row per database scale, mirroring the
    (scale, top-1, top-5, IoU) column layout."""
    lines = [
        f"{'Scale':>8}  {'Top-1 Acc.':>10}  {'Top-5 Acc.':>10}  {'IOU':>8}",
        "-" * 44,
    ]
    for rep in reports:
        lines.append(
            f"{rep.db_count:>8}  {rep.top1_accuracy:>10.3f}  "
            f"{rep.top5_accuracy:>10.3f}  {rep.mean_iou:>8.4f}"
        )
    return "\n".join(lines)
