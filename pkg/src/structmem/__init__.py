"""Structure-memory retrieval engine: embedding-landmark database, manifold
projection of query embeddings, curation, and evaluation metrics."""

from .core import (
    ATTRIBUTE_ORDER,
    VOCABULARIES,
    AttributeCodebook,
    AttributeSet,
    LandmarkMask,
    MemoryRecord,
    StructureEmbedding,
    concat_features,
    encode_attributes,
    normalize,
)
from .curation import ClusterLabeling, CurationConfig, build_database, category_balance, dbscan, density_downsample
from .estimators import CosineDBSCAN, SlleTransformer
from .metrics import (
    RetrievalEvalReport,
    SimilarityMatrix,
    align_by_bbox,
    aligned_iou,
    eval_retrieval,
    infonce_loss,
    mask_iou,
    similarity_matrix,
)
from .slle import SlleConfig, SlleResult, fuse_embedding, fuse_landmark, reconstruct, slle_retrieve, solve_weights
from .store import DatabaseHandle, MemoryDatabase, Neighbor, cosine_similarity
from .attention import concat_kv_attention, dual_cross_attention, scaled_dot_attention

__all__ = [
    "ATTRIBUTE_ORDER",
    "VOCABULARIES",
    "AttributeCodebook",
    "AttributeSet",
    "ClusterLabeling",
    "CosineDBSCAN",
    "CurationConfig",
    "DatabaseHandle",
    "LandmarkMask",
    "MemoryDatabase",
    "MemoryRecord",
    "Neighbor",
    "RetrievalEvalReport",
    "SimilarityMatrix",
    "SlleConfig",
    "SlleResult",
    "SlleTransformer",
    "StructureEmbedding",
    "align_by_bbox",
    "aligned_iou",
    "build_database",
    "category_balance",
    "concat_features",
    "concat_kv_attention",
    "cosine_similarity",
    "dbscan",
    "density_downsample",
    "dual_cross_attention",
    "encode_attributes",
    "eval_retrieval",
    "fuse_embedding",
    "fuse_landmark",
    "infonce_loss",
    "mask_iou",
    "normalize",
    "reconstruct",
    "scaled_dot_attention",
    "similarity_matrix",
    "slle_retrieve",
    "solve_weights",
]

__version__ = "0.1.0"
