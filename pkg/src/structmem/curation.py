"""Database curation: category balancing, cosine-metric DBSCAN noise
removal, and greedy density downsampling."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import MemoryRecord
from .errors import EmptyAfterCurationError
from .store import MemoryDatabase

NOISE = -1


@dataclass(frozen=True)
class CurationConfig:
    per_category_cap: int = 10_000
    dbscan_eps: float = 0.1
    dbscan_min_pts: int = 4
    downsample_radius: float = 0.0
    target_size: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.dbscan_eps < 2:
            raise ValueError("dbscan_eps must lie in (0, 2)")
        if self.dbscan_min_pts < 1:
            raise ValueError("dbscan_min_pts must be >= 1")
        if self.target_size < 1:
            raise ValueError("target_size must be >= 1")
        if self.per_category_cap < 1:
            raise ValueError("per_category_cap must be >= 1")
        if self.downsample_radius < 0:
            raise ValueError("downsample_radius must be >= 0")


@dataclass(frozen=True)
class ClusterLabeling:
    labels: np.ndarray  # -1 = noise, >= 0 = cluster id
    n_clusters: int

    @property
    def noise_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels == NOISE)


def category_balance(records: list[MemoryRecord], cap: int, seed: int = 0) -> list[MemoryRecord]:
    """Keep at most `cap` records per category, chosen uniformly at random
    under the seed; original record order is preserved in the output."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    rng = np.random.default_rng(seed)
    by_category: dict[str, list[int]] = {}
    for i, rec in enumerate(records):
        by_category.setdefault(rec.category, []).append(i)
    keep: set[int] = set()
    for category in sorted(by_category):
        indices = by_category[category]
        if len(indices) <= cap:
            keep.update(indices)
        else:
            keep.update(rng.choice(indices, size=cap, replace=False).tolist())
    return [records[i] for i in sorted(keep)]


def _cosine_neighbor_lists(matrix: np.ndarray, eps: float, block: int = 2048) -> list[np.ndarray]:
    """Indices within cosine distance eps of each row (self included),
    computed blockwise to bound memory."""
    n = matrix.shape[0]
    neighbors: list[np.ndarray] = []
    threshold = 1.0 - eps  # distance <= eps  <=>  similarity >= 1 - eps
    for start in range(0, n, block):
        sims = matrix[start : start + block] @ matrix.T
        for row in sims:
            neighbors.append(np.flatnonzero(row >= threshold))
    return neighbors


def dbscan(embeddings: np.ndarray, eps: float, min_pts: int) -> ClusterLabeling:
    """DBSCAN over unit-norm rows with distance 1 - cosine similarity.

    Core points have >= min_pts neighbors within eps (self included);
    clusters are grown by breadth-first density-reachable expansion seeded in
    index order, so labeling is deterministic: a border point joins the
    earliest-seeded cluster that reaches it.
    """
    matrix = np.ascontiguousarray(embeddings, dtype=np.float64)
    n = matrix.shape[0]
    if n == 0:
        return ClusterLabeling(labels=np.empty(0, dtype=np.int64), n_clusters=0)
    neighbors = _cosine_neighbor_lists(matrix, eps)
    is_core = np.array([len(nb) >= min_pts for nb in neighbors])

    labels = np.full(n, NOISE, dtype=np.int64)
    cluster = 0
    for seed in range(n):
        if labels[seed] != NOISE or not is_core[seed]:
            continue
        frontier = [seed]
        labels[seed] = cluster
        while frontier:
            point = frontier.pop()
            for nb in neighbors[point]:
                if labels[nb] == NOISE:
                    labels[nb] = cluster
                    if is_core[nb]:
                        frontier.append(int(nb))
        cluster += 1
    return ClusterLabeling(labels=labels, n_clusters=cluster)


def density_downsample(
    embeddings: np.ndarray, radius: float, target_size: int, seed: int = 0
) -> np.ndarray:
    """Greedy blue-noise thinning, then an optional random cap.

    Visits points in seeded-random order, keeping a point iff no already-kept
    point lies within cosine-distance `radius`. If more than target_size
    survive, uniformly subsamples down to target_size. Returns kept indices,
    ascending.
    """
    matrix = np.ascontiguousarray(embeddings, dtype=np.float64)
    n = matrix.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    threshold = 1.0 - radius
    if radius == 0:
        kept = [int(i) for i in order]  # zero radius excludes nothing
    else:
        kept = []
        kept_rows = np.empty_like(matrix)
        for i in order:
            if kept and np.any(kept_rows[: len(kept)] @ matrix[i] >= threshold):
                continue
            kept_rows[len(kept)] = matrix[i]
            kept.append(int(i))
    if len(kept) > target_size:
        kept = rng.choice(kept, size=target_size, replace=False).tolist()
    return np.array(sorted(kept), dtype=np.int64)


def build_database(
    records: list[MemoryRecord], cfg: CurationConfig
) -> tuple[MemoryDatabase, dict]:
    """Run balance -> DBSCAN noise drop -> density downsample and assemble a
    database. Returns (database, curation report)."""
    if not records:
        raise EmptyAfterCurationError("no input records")

    balanced = category_balance(records, cfg.per_category_cap, cfg.seed)

    matrix = np.stack([r.embedding.vector for r in balanced]) if balanced else np.empty((0, 1))
    labeling = dbscan(matrix, cfg.dbscan_eps, cfg.dbscan_min_pts)
    clustered = [r for r, lab in zip(balanced, labeling.labels) if lab != NOISE]

    if clustered:
        matrix = np.stack([r.embedding.vector for r in clustered])
        kept = density_downsample(matrix, cfg.downsample_radius, cfg.target_size, cfg.seed)
        final = [clustered[i] for i in kept]
    else:
        final = []

    if not final:
        raise EmptyAfterCurationError("curation eliminated every record")

    report = {
        "input_count": len(records),
        "after_balance": len(balanced),
        "after_dbscan": len(clustered),
        "after_downsample": len(final),
        "final_count": len(final),
        "n_clusters": labeling.n_clusters,
        "seed": cfg.seed,
        "config": asdict(cfg),
    }
    return MemoryDatabase.from_records(final), report
