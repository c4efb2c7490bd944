"""Public API surface for the mrfrec item-item recommender."""

from .models import (
    BlockPlan,
    ConfigError,
    DataError,
    EvalSplit,
    GramMatrix,
    Interaction,
    InteractionMatrix,
    MalformedRowError,
    MetricReport,
    MetricRow,
    MrfError,
    NumericalError,
    PreprocessStats,
    RankedList,
    SingularBlockError,
    SparsityPattern,
    TrainConfig,
    WeightMatrix,
)
from .ingest import (
    filter_by_activity,
    from_interactions,
    item_popularity,
    load_interactions,
    split_strong_generalization,
    submatrix_users,
    user_vectors,
)
from .preprocess import (
    compute_stats,
    gram,
    transform,
)
from .dense_solver import (
    objective,
    solve_dense,
    solve_dense_mean_constrained,
)
from .sparse_solver import (
    build_pattern,
    plan_blocks,
    solve_block,
    solve_sparse,
)
from .scoring import (
    score_all,
    score_batch,
    top_n,
)
from .metrics import (
    evaluate,
    format_report,
    ndcg_at_k,
    recall_at_k,
    write_report,
)
from .training import (
    TrainingReport,
    TrainingResult,
    train,
)
from .model_file import (
    ModelFile,
    load_model,
    read_header,
    save_model,
)

__all__ = [
    "BlockPlan",
    "ConfigError",
    "DataError",
    "EvalSplit",
    "GramMatrix",
    "Interaction",
    "InteractionMatrix",
    "MalformedRowError",
    "MetricReport",
    "MetricRow",
    "MrfError",
    "NumericalError",
    "PreprocessStats",
    "RankedList",
    "SingularBlockError",
    "SparsityPattern",
    "TrainConfig",
    "WeightMatrix",
    "filter_by_activity",
    "from_interactions",
    "item_popularity",
    "load_interactions",
    "split_strong_generalization",
    "submatrix_users",
    "user_vectors",
    "compute_stats",
    "gram",
    "transform",
    "objective",
    "solve_dense",
    "solve_dense_mean_constrained",
    "build_pattern",
    "plan_blocks",
    "solve_block",
    "solve_sparse",
    "score_all",
    "score_batch",
    "top_n",
    "evaluate",
    "format_report",
    "ndcg_at_k",
    "recall_at_k",
    "write_report",
    "TrainingReport",
    "TrainingResult",
    "train",
    "ModelFile",
    "load_model",
    "read_header",
    "save_model",
]
