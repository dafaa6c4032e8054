import numpy as np
import pytest

from structmem import (
    CurationConfig,
    build_database,
    category_balance,
    dbscan,
    density_downsample,
    normalize,
)
from structmem.errors import EmptyAfterCurationError
from tests.conftest import clustered_unit_vectors, make_record, unit_vectors


def oracle_dbscan(matrix, eps, min_pts):
    """Independent brute-force reference: neighbor counting, transitive
    closure over core points, border points assigned to the earliest-seeded
    reachable cluster (cluster order = min core index)."""
    n = matrix.shape[0]
    dist = 1.0 - matrix @ matrix.T
    adjacency = dist <= eps
    is_core = adjacency.sum(axis=1) >= min_pts

    # transitive closure restricted to core points
    core_link = adjacency & is_core[:, None] & is_core[None, :]
    reach = core_link.copy()
    for _ in range(n):
        updated = reach | (reach @ reach)
        if np.array_equal(updated, reach):
            break
        reach = updated

    labels = np.full(n, -1, dtype=np.int64)
    components = []
    seen = np.zeros(n, dtype=bool)
    for i in range(n):
        if is_core[i] and not seen[i]:
            members = np.flatnonzero(reach[i] | (np.arange(n) == i))
            members = members[is_core[members]]
            seen[members] = True
            components.append(members)
    components.sort(key=lambda m: m.min())
    for cid, members in enumerate(components):
        labels[members] = cid
    for i in range(n):
        if labels[i] == -1:
            core_neighbors = np.flatnonzero(adjacency[i] & is_core)
            if core_neighbors.size:
                labels[i] = labels[core_neighbors].min()
    return labels


class TestCategoryBalance:
    def _records(self, rng, sizes):
        records = []
        categories = ["T-shirt", "Hoodie", "Dress"]
        i = 0
        for cat, size in zip(categories, sizes):
            for _ in range(size):
                records.append(make_record(f"r{i:03d}", normalize(rng.standard_normal(4)), category=cat))
                i += 1
        return records

    def test_cap_arithmetic(self, rng):
        records = self._records(rng, (10, 5, 1))
        kept = category_balance(records, cap=5, seed=0)
        counts = {}
        for r in kept:
            counts[r.category] = counts.get(r.category, 0) + 1
        assert counts == {"T-shirt": 5, "Hoodie": 5, "Dress": 1}

    def test_large_cap_identity(self, rng):
        records = self._records(rng, (4, 3, 2))
        assert category_balance(records, cap=10, seed=1) == records

    def test_deterministic(self, rng):
        records = self._records(rng, (20, 20, 20))
        a = category_balance(records, cap=7, seed=42)
        b = category_balance(records, cap=7, seed=42)
        assert [r.id for r in a] == [r.id for r in b]

    def test_empty_input(self):
        assert category_balance([], cap=3) == []


class TestDbscan:
    def test_two_clusters_no_noise(self, rng):
        vectors, _ = clustered_unit_vectors(rng, 2, 10, 8, spread=0.005)
        matrix = np.stack([v.vector for v in vectors])
        labeling = dbscan(matrix, eps=0.05, min_pts=3)
        assert labeling.n_clusters == 2
        assert labeling.noise_indices.size == 0
        assert len(set(labeling.labels[:10])) == 1
        assert len(set(labeling.labels[10:])) == 1

    def test_isolated_point_is_noise(self, rng):
        vectors, _ = clustered_unit_vectors(rng, 1, 10, 8, spread=0.005)
        outlier = normalize(-vectors[0].vector)
        matrix = np.stack([v.vector for v in vectors + [outlier]])
        labeling = dbscan(matrix, eps=0.05, min_pts=2)
        assert labeling.labels[-1] == -1

    def test_min_pts_one_no_noise(self, rng):
        matrix = np.stack([v.vector for v in unit_vectors(rng, 20, 6)])
        labeling = dbscan(matrix, eps=0.01, min_pts=1)
        assert np.all(labeling.labels >= 0)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_brute_force_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 51))
        dim = int(rng.integers(2, 6))
        eps = float(rng.uniform(0.02, 0.6))
        min_pts = int(rng.integers(1, 6))
        matrix = np.stack([v.vector for v in unit_vectors(rng, n, dim)])
        got = dbscan(matrix, eps, min_pts).labels
        expected = oracle_dbscan(matrix, eps, min_pts)
        assert np.array_equal(got, expected)


class TestDensityDownsample:
    def test_duplicates_collapse(self):
        matrix = np.tile(normalize([1.0, 2.0]).vector, (5, 1))
        kept = density_downsample(matrix, radius=0.01, target_size=10, seed=0)
        assert kept.size == 1

    def test_separated_points_all_kept(self, rng):
        vectors, _ = clustered_unit_vectors(rng, 8, 1, 16, spread=0.0)
        matrix = np.stack([v.vector for v in vectors])
        kept = density_downsample(matrix, radius=0.001, target_size=100, seed=0)
        assert kept.size == 8

    def test_one_per_cluster(self, rng):
        vectors, labels = clustered_unit_vectors(rng, 10, 100, 16, spread=0.002)
        matrix = np.stack([v.vector for v in vectors])
        kept = density_downsample(matrix, radius=0.05, target_size=1000, seed=3)
        assert kept.size == 10
        assert len(set(labels[kept])) == 10
        # pairwise separation oracle
        sub = matrix[kept]
        dist = 1.0 - sub @ sub.T
        np.fill_diagonal(dist, np.inf)
        assert dist.min() >= 0.05

    def test_separation_property(self, rng):
        matrix = np.stack([v.vector for v in unit_vectors(rng, 200, 4)])
        radius = 0.02
        kept = density_downsample(matrix, radius, target_size=1000, seed=9)
        sub = matrix[kept]
        dist = 1.0 - sub @ sub.T
        np.fill_diagonal(dist, np.inf)
        assert dist.min() >= radius

    def test_deterministic(self, rng):
        matrix = np.stack([v.vector for v in unit_vectors(rng, 100, 4)])
        a = density_downsample(matrix, 0.05, 30, seed=5)
        b = density_downsample(matrix, 0.05, 30, seed=5)
        assert np.array_equal(a, b)


class TestBuildDatabase:
    def test_pass_through_config(self, rng):
        records = [
            make_record(f"r{i:02d}", e) for i, e in enumerate(unit_vectors(rng, 30, 6))
        ]
        cfg = CurationConfig(
            per_category_cap=10_000,
            dbscan_eps=1.99,
            dbscan_min_pts=1,
            downsample_radius=0.0,
            target_size=10_000,
            seed=0,
        )
        db, report = build_database(records, cfg)
        assert db.count == 30
        assert [r.id for r in db.records] == [r.id for r in records]
        assert report["input_count"] == 30
        assert report["final_count"] == 30

    def test_planted_outliers_dropped(self, rng):
        vectors, _ = clustered_unit_vectors(rng, 3, 30, 8, spread=0.005)
        records = [make_record(f"c{i:03d}", e) for i, e in enumerate(vectors)]
        outliers = [
            make_record(f"out{i}", normalize(rng.standard_normal(8)))
            for i in range(5)
        ]
        cfg = CurationConfig(
            per_category_cap=10_000,
            dbscan_eps=0.05,
            dbscan_min_pts=4,
            downsample_radius=0.0,
            target_size=10_000,
            seed=0,
        )
        db, report = build_database(records + outliers, cfg)
        ids = {r.id for r in db.records}
        assert not any(o.id in ids for o in outliers)
        assert report["after_balance"] - report["after_dbscan"] >= 5

    def test_target_size_cap(self, rng):
        records = [
            make_record(f"r{i:03d}", e) for i, e in enumerate(unit_vectors(rng, 500, 6))
        ]
        cfg = CurationConfig(
            dbscan_eps=1.99, dbscan_min_pts=1, downsample_radius=0.0, target_size=123, seed=0
        )
        db, _ = build_database(records, cfg)
        assert db.count == 123

    def test_empty_after_curation(self, rng):
        records = [make_record("solo", normalize(rng.standard_normal(4)))]
        cfg = CurationConfig(dbscan_eps=0.01, dbscan_min_pts=5)
        with pytest.raises(EmptyAfterCurationError):
            build_database(records, cfg)

    def test_monotone_subset_per_stage(self, rng):
        records = [
            make_record(f"r{i:03d}", e) for i, e in enumerate(unit_vectors(rng, 100, 4))
        ]
        cfg = CurationConfig(
            per_category_cap=80, dbscan_eps=0.5, dbscan_min_pts=2,
            downsample_radius=0.05, target_size=40, seed=0,
        )
        try:
            _, report = build_database(records, cfg)
        except EmptyAfterCurationError:
            return
        assert (
            report["input_count"]
            >= report["after_balance"]
            >= report["after_dbscan"]
            >= report["after_downsample"]
            == report["final_count"]
        )
