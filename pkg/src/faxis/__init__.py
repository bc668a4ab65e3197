"""Factor-partitioned embeddings with signed multi-axis retrieval."""

from .core import (
    AxisSchema,
    PartitionedEmbedding,
    QueryWeights,
    axis_cosine,
    concat,
    l2_normalize,
    split,
    weighted_similarity,
)
from .errors import FaxisError
from .index import Index, ItemRecord, RetrievalResult, build_index, query, rank_of
from .evaluation import (
    EvalReport,
    FlipCategory,
    QuerySet,
    metric_ceiling,
    precision_at_k,
    preference_flip_report,
    report_render,
)
from .train import (
    AlignmentMatrix,
    PooledFeature,
    ProjectionHead,
    TrainConfig,
    TrainExample,
    distill_loss,
    finite_difference_check,
    infonce_loss,
    orthogonality_penalty,
    project,
    sample_batch,
    supcon_loss,
    train_axis,
)

__version__ = "0.1.0"

__all__ = [
    "AxisSchema",
    "PartitionedEmbedding",
    "QueryWeights",
    "axis_cosine",
    "concat",
    "l2_normalize",
    "split",
    "weighted_similarity",
    "FaxisError",
    "Index",
    "ItemRecord",
    "RetrievalResult",
    "build_index",
    "query",
    "rank_of",
    "EvalReport",
    "FlipCategory",
    "QuerySet",
    "metric_ceiling",
    "precision_at_k",
    "preference_flip_report",
    "report_render",
    "AlignmentMatrix",
    "PooledFeature",
    "ProjectionHead",
    "TrainConfig",
    "TrainExample",
    "distill_loss",
    "finite_difference_check",
    "infonce_loss",
    "orthogonality_penalty",
    "project",
    "sample_batch",
    "supcon_loss",
    "train_axis",
    "__version__",
]
