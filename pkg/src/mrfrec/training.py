"""Training pipeline: preprocess, solve, and report per-phase timings."""

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, Optional, Union

from .dense_solver import solve_dense, solve_dense_mean_constrained
from .ingest import item_popularity
from .models import InteractionMatrix, MrfError, PreprocessStats, TrainConfig, WeightMatrix
from .parallel import limit_threads
from .preprocess import compute_stats, gram, transform
from .sparse_solver import block_cost_estimate, build_pattern, pattern_components, plan_blocks, solve_sparse

_log = logging.getLogger(__name__)


@dataclass
class TrainingReport:
    solver: str
    n_users: int
    n_items: int
    n_interactions: int
    timings: Dict[str, float] = field(default_factory=dict)
    n_seeds: Optional[int] = None
    block_histogram: Optional[Dict[str, int]] = None
    cost_estimate: Optional[float] = None
    pattern_nnz: Optional[int] = None
    pattern_threshold: Optional[float] = None
    capped_columns: Optional[int] = None
    pattern_components: Optional[int] = None
    weight_nnz: int = 0
    weight_density: float = 0.0
    dense_width: float = 0.0
    config: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")


@dataclass
class TrainingResult:
    weights: WeightMatrix
    stats: PreprocessStats
    report: TrainingReport


@contextmanager
def _timed(report: TrainingReport, phase: str) -> Iterator[None]:
    start = time.perf_counter()
    try:
        yield
    except MrfError as exc:
        if exc.phase is None:
            exc.phase = "preprocess" if phase == "preprocess" else "solve"
        raise
    finally:
        report.timings[phase] = time.perf_counter() - start
        _log.info("%s took %.3fs", phase, report.timings[phase])


def train(mat: InteractionMatrix, config: TrainConfig) -> TrainingResult:
    """Fit a weight matrix on ``mat`` with the configured solver."""
    config.validate()
    report = TrainingReport(
        solver=config.solver,
        n_users=mat.n_users,
        n_items=mat.n_items,
        n_interactions=mat.nnz,
        config=config.to_dict(),
    )

    with limit_threads(config.threads):
        with _timed(report, "preprocess"):
            stats = compute_stats(mat, config.alpha)
            S = gram(transform(mat, stats, center=config.center), config.lam)

        if config.solver == "sparse":
            popularity = item_popularity(mat)
            with _timed(report, "pattern"):
                pattern = build_pattern(S, config.target_density, config.cap)
                plan = plan_blocks(pattern, config.r, popularity)
            with _timed(report, "solve"):
                weights = solve_sparse(
                    S, pattern, config.r, popularity,
                    item_ids=mat.item_index,
                    alpha=config.alpha,
                    center=config.center,
                    n_jobs=config.threads,
                    plan=plan,
                )
            report.n_seeds = plan.n_seeds
            report.block_histogram = plan.histogram()
            report.cost_estimate = block_cost_estimate(plan, config.omega)
            report.pattern_nnz = pattern.nnz
            report.pattern_threshold = pattern.threshold
            report.capped_columns = pattern.capped_columns
            report.pattern_components = pattern_components(pattern)
        else:
            with _timed(report, "solve"):
                if config.solver == "dense-mean-constrained":
                    weights = solve_dense_mean_constrained(
                        S, stats.mu / stats.s,
                        item_ids=mat.item_index,
                        alpha=config.alpha,
                        center=config.center,
                    )
                else:
                    weights = solve_dense(S, item_ids=mat.item_index, alpha=config.alpha, center=config.center)
            report.n_seeds = 1
            report.cost_estimate = float(mat.n_items) ** config.omega

    report.weight_nnz = weights.nnz
    report.weight_density = weights.nnz / float(mat.n_items ** 2)
    report.dense_width = weights.nnz / float(mat.n_items)
    return TrainingResult(weights=weights, stats=stats, report=report)


__all__ = ["TrainingReport", "TrainingResult", "train"]
