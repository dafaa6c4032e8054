"""scikit-learn style estimator wrappers so the algorithms compose with
pipelines and model-selection tooling."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import LandmarkMask, MemoryRecord, normalize
from .curation import dbscan
from .slle import fuse_embedding, reconstruct, solve_weights
from .store import MemoryDatabase


class SlleTransformer(TransformerMixin, BaseEstimator):
    """Project query embeddings onto the manifold spanned by a reference set.

    fit(X) stores the reference (standard) embeddings; transform(X) maps each
    row to its fused embedding: solve sum-to-one reconstruction weights over
    the n_neighbors cosine-nearest reference rows, blend the weighted
    reconstruction with the query by `alpha`, and renormalize.
    """

    def __init__(self, n_neighbors: int = 4, alpha: float = 0.5, reg_epsilon: float = 1e-3):
        self.n_neighbors = n_neighbors
        self.alpha = alpha
        self.reg_epsilon = reg_epsilon

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if X.shape[0] < self.n_neighbors:
            raise ValueError(
                f"need at least n_neighbors={self.n_neighbors} reference rows, got {X.shape[0]}"
            )
        embeddings = [normalize(row) for row in X]
        records = [
            MemoryRecord(
                id=f"{i:08d}",
                embedding=emb,
                landmark=LandmarkMask(np.ones((1, 1), dtype=bool)),
                category="reference",
            )
            for i, emb in enumerate(embeddings)
        ]
        self.database_ = MemoryDatabase.from_records(records)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "database_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, fitted with {self.n_features_in_}"
            )
        out = np.empty_like(X)
        by_id = {rec.id: rec for rec in self.database_.records}
        for i, row in enumerate(X):
            query = normalize(row)
            neighbors = self.database_.knn(query, self.n_neighbors)
            basis = [by_id[n.id].embedding for n in neighbors]
            w = solve_weights(query, basis, self.reg_epsilon)
            fused = fuse_embedding(query, reconstruct(basis, w), self.alpha)
            out[i] = fused.vector
        return out


class CosineDBSCAN(ClusterMixin, BaseEstimator):
    """DBSCAN over unit-normalized rows with distance 1 - cosine similarity.

    Labels follow the deterministic index-order expansion of
    :func:`structmem.curation.dbscan`; noise is -1.
    """

    def __init__(self, eps: float = 0.1, min_samples: int = 4):
        self.eps = eps
        self.min_samples = min_samples

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        matrix = np.stack([normalize(row).vector for row in X]) if X.shape[0] else X
        labeling = dbscan(matrix, self.eps, self.min_samples)
        self.labels_ = labeling.labels
        self.n_clusters_ = labeling.n_clusters
        self.n_features_in_ = X.shape[1]
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_
