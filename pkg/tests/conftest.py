import numpy as np
import pytest

from structmem import LandmarkMask, MemoryRecord, normalize


def unit_vectors(rng, n, dim):
    return [normalize(rng.standard_normal(dim)) for _ in range(n)]


def random_mask(rng, height=8, width=8):
    bits = rng.random((height, width)) < 0.5
    if not bits.any():
        bits[height // 2, width // 2] = True
    return LandmarkMask(bits)


def make_record(rec_id, embedding, landmark=None, category="Shirt"):
    if landmark is None:
        landmark = LandmarkMask(np.ones((4, 4), dtype=bool))
    return MemoryRecord(id=rec_id, embedding=embedding, landmark=landmark, category=category)


def clustered_unit_vectors(rng, n_clusters, per_cluster, dim, spread=0.01):
    """Well-separated spherical clusters; returns (vectors, cluster labels)."""
    centers = [normalize(rng.standard_normal(dim)) for _ in range(n_clusters)]
    vectors, labels = [], []
    for c, center in enumerate(centers):
        for _ in range(per_cluster):
            vectors.append(normalize(center.vector + spread * rng.standard_normal(dim)))
            labels.append(c)
    return vectors, np.array(labels)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
