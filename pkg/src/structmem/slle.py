"""Structure locally linear embedding: barycentric weight solving,
reconstruction, embedding fusion, and IoU-max landmark fusion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import LandmarkMask, StructureEmbedding, normalize
from .errors import (
    AllWeightsNonPositiveError,
    DegenerateFusionError,
    DimMismatchError,
    NumericalFailureError,
    ShapeMismatchError,
    ZeroVectorError,
)
from .metrics import mask_iou
from .store import MemoryDatabase, Neighbor


@dataclass(frozen=True)
class SlleConfig:
    k: int = 4
    alpha: float = 0.5
    reg_epsilon: float = 1e-3
    soft_mask_threshold: float = 0.5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.reg_epsilon <= 0:
            raise ValueError("reg_epsilon must be positive")
        if not 0.0 < self.soft_mask_threshold < 1.0:
            raise ValueError("soft_mask_threshold must lie in (0, 1)")


@dataclass(frozen=True)
class SlleResult:
    neighbors: tuple[Neighbor, ...]
    weights: np.ndarray
    reconstructed: np.ndarray  # weighted sum, intentionally not renormalized
    fused_embedding: StructureEmbedding
    fused_landmark: LandmarkMask
    landmark_index: int  # index into neighbors of the selected mask
    objective: float

    @property
    def neighbor_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.neighbors)

    @property
    def landmark_id(self) -> str:
        return self.neighbors[self.landmark_index].id


def solve_weights(
    query: StructureEmbedding,
    neighbors: list[StructureEmbedding],
    reg_epsilon: float = 1e-3,
) -> np.ndarray:
    """Solve the sum-to-one least-squares reconstruction weights.

    Minimizes ||query - sum_i w_i * neighbor_i||_2 subject to sum(w) = 1 via
    the local Gram system G_jk = (query - n_j) . (query - n_k), regularized
    as G + eps * tr(G)/K * I, then w = solve(G, 1) normalized to sum 1.
    Weights may be negative (affine, not convex, combination).
    """
    k = len(neighbors)
    if k < 1:
        raise ValueError("need at least one neighbor")
    for n in neighbors:
        if n.dim != query.dim:
            raise DimMismatchError(f"neighbor dim {n.dim} != query dim {query.dim}")
    basis = np.stack([n.vector for n in neighbors])
    diff = query.vector[None, :] - basis  # (K, D)
    gram = diff @ diff.T
    trace = float(np.trace(gram))
    reg = reg_epsilon * (trace / k) if trace > 0 else reg_epsilon
    try:
        w = np.linalg.solve(gram + reg * np.eye(k), np.ones(k))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"Gram solve failed: {exc}") from exc
    total = float(w.sum())
    if not np.all(np.isfinite(w)) or abs(total) < 1e-300:
        raise NumericalFailureError("weight solve produced non-finite or zero-sum weights")
    return w / total


def reconstruct(neighbors: list[StructureEmbedding], weights) -> np.ndarray:
    """Weighted sum of neighbor embeddings; not renormalized (intermediate)."""
    weights = np.asarray(weights, dtype=np.float64)
    if len(neighbors) != weights.shape[0]:
        raise DimMismatchError(
            f"{len(neighbors)} neighbors vs {weights.shape[0]} weights"
        )
    dims = {n.dim for n in neighbors}
    if len(dims) > 1:
        raise DimMismatchError(f"neighbors have mixed dims {sorted(dims)}")
    basis = np.stack([n.vector for n in neighbors])
    return weights @ basis


def fuse_embedding(
    query: StructureEmbedding, reconstructed, alpha: float
) -> StructureEmbedding:
    """Blend alpha * reconstructed + (1 - alpha) * query, renormalized."""
    reconstructed = np.asarray(reconstructed, dtype=np.float64).reshape(-1)
    if reconstructed.shape[0] != query.dim:
        raise DimMismatchError(
            f"reconstructed dim {reconstructed.shape[0]} != query dim {query.dim}"
        )
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    blend = alpha * reconstructed + (1.0 - alpha) * query.vector
    try:
        return normalize(blend)
    except ZeroVectorError as exc:
        raise DegenerateFusionError("fusion blend cancelled to zero") from exc


def fuse_landmark(
    landmarks: list[LandmarkMask], weights, threshold: float = 0.5
) -> tuple[LandmarkMask, int]:
    """Select the landmark whose mask best matches the weight-interpolated one.

    Soft mask = sum(max(w_i, 0) * mask_i) / sum(max(w_i, 0)), binarized at
    the threshold; the input mask with the highest IoU against the binarized
    interpolation is returned unchanged (ties go to the lowest index), so the
    output always keeps the sharp edges of a real template.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if len(landmarks) != weights.shape[0]:
        raise ShapeMismatchError(
            f"{len(landmarks)} landmarks vs {weights.shape[0]} weights"
        )
    shape = landmarks[0].bits.shape
    for m in landmarks[1:]:
        if m.bits.shape != shape:
            raise ShapeMismatchError(f"mask shapes differ: {shape} vs {m.bits.shape}")
    positive = np.maximum(weights, 0.0)
    total = float(positive.sum())
    if total <= 0.0:
        raise AllWeightsNonPositiveError("every fusion weight is <= 0")
    soft = np.zeros(shape, dtype=np.float64)
    for w, m in zip(positive, landmarks):
        if w > 0:
            soft += w * m.bits
    soft /= total
    binary = LandmarkMask(soft >= threshold)
    ious = [mask_iou(binary, m) for m in landmarks]
    best = int(np.argmax(ious))  # argmax takes the first maximum: lowest index
    return landmarks[best], best


def slle_retrieve(
    db: MemoryDatabase, query: StructureEmbedding, cfg: SlleConfig = SlleConfig()
) -> SlleResult:
    """Full pipeline: KNN -> weights -> reconstruction -> fused embedding and
    landmark, per the retrieval-projection procedure."""
    neighbors = db.knn(query, cfg.k)
    recs = [db.records[i] for i in _neighbor_indices(db, neighbors)]
    embeddings = [r.embedding for r in recs]
    weights = solve_weights(query, embeddings, cfg.reg_epsilon)
    recon = reconstruct(embeddings, weights)
    fused = fuse_embedding(query, recon, cfg.alpha)
    landmark, idx = fuse_landmark(
        [r.landmark for r in recs], weights, cfg.soft_mask_threshold
    )
    objective = float(np.linalg.norm(query.vector - recon))
    return SlleResult(
        neighbors=tuple(neighbors),
        weights=weights,
        reconstructed=recon,
        fused_embedding=fused,
        fused_landmark=landmark,
        landmark_index=idx,
        objective=objective,
    )


def _neighbor_indices(db: MemoryDatabase, neighbors: list[Neighbor]) -> list[int]:
    by_id = {rec.id: i for i, rec in enumerate(db.records)}
    return [by_id[n.id] for n in neighbors]
