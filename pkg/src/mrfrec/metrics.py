"""Ranking metrics and strong-generalization evaluation."""

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from .ingest import user_vectors
from .models import DataError, EvalSplit, InteractionMatrix, MetricReport, MetricRow, PreprocessStats, RankedList, WeightMatrix
from .scoring import score_batch, top_n

_log = logging.getLogger(__name__)

METRICS = ("ndcg", "recall")
DEFAULT_KS = (20, 50, 100)


def _check_relevant(relevant: Iterable[int]) -> set:
    relevant = set(int(i) for i in relevant)
    if not relevant:
        raise DataError("Relevant item set is empty.")
    return relevant


def recall_at_k(ranked: RankedList, relevant: Iterable[int], k: int) -> float:
    """Hits among the top k, normalized by min(k, |relevant|)."""
    relevant = _check_relevant(relevant)
    hits = sum(1 for item in ranked.items[:k] if int(item) in relevant)
    return hits / min(k, len(relevant))


def ndcg_at_k(ranked: RankedList, relevant: Iterable[int], k: int) -> float:
    """Binary-relevance DCG with 1/log2(p+1) discounts over the ideal DCG."""
    relevant = _check_relevant(relevant)
    top = ranked.items[:k]
    gains = np.array([1.0 if int(item) in relevant else 0.0 for item in top])
    discounts = 1.0 / np.log2(np.arange(2, len(top) + 2))
    dcg = float(np.sum(gains * discounts))
    idcg = float(np.sum(1.0 / np.log2(np.arange(2, min(k, len(relevant)) + 2))))
    return dcg / idcg


_METRIC_FUNCS = {"ndcg": ndcg_at_k, "recall": recall_at_k}


def _aggregate(values: Sequence[float]):
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / np.sqrt(len(values))) if len(values) > 1 else 0.0
    return mean, stderr


def evaluate(
    B: WeightMatrix,
    split: EvalSplit,
    mat: InteractionMatrix,
    stats: PreprocessStats,
    ks: Sequence[int] = DEFAULT_KS,
    partition: str = "test",
    batch_size: int = 1000,
) -> MetricReport:
    """Score each held-out user from fold-in items and rank unseen items against held-out ones.

    Items of ``mat`` unknown to the model are ignored; users left without known
    held-out items are skipped.
    """
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] < 1:
        raise DataError(f"Cutoffs must be positive, got {ks}")

    positions = B.item_ids.get_indexer(mat.item_index)
    known = positions >= 0
    if not known.any():
        raise DataError("Model and data share no items.")
    if not known.all():
        _log.warning("%d of %d data items are unknown to the model and ignored", int((~known).sum()), mat.n_items)

    users = split.users(partition)
    fold_in: Dict[int, np.ndarray] = {}
    held_out: Dict[int, np.ndarray] = {}
    skipped = 0
    for user in users:
        user = int(user)
        if user not in split.held_out or len(split.held_out[user]) == 0:
            raise DataError(f"User {mat.user_index[user]} has an empty held-out set.")
        targets = positions[split.held_out[user]]
        targets = targets[targets >= 0]
        if len(targets) == 0:
            skipped += 1
            continue
        fold_in[user] = split.fold_in[user]
        held_out[user] = targets
    if skipped:
        _log.warning("%d users have no held-out items known to the model and are skipped", skipped)
    if not held_out:
        raise DataError(f"No {partition} users can be evaluated.")

    per_metric: Dict[str, Dict[int, List[float]]] = {name: {k: [] for k in ks} for name in METRICS}
    evaluated = list(fold_in)
    depth = max(ks)
    for start in range(0, len(evaluated), batch_size):
        chunk = evaluated[start:start + batch_size]
        X = user_vectors(mat, {u: fold_in[u] for u in chunk}, positions, B.m)
        scores = score_batch(B, X, stats)
        for row, user in enumerate(chunk):
            seen = X.indices[X.indptr[row]:X.indptr[row + 1]]
            ranked = top_n(scores[row], exclude=seen, n=depth)
            relevant = held_out[user]
            for name, func in _METRIC_FUNCS.items():
                for k in ks:
                    per_metric[name][k].append(func(ranked, relevant, k))

    rows = []
    for name in METRICS:
        for k in ks:
            mean, stderr = _aggregate(per_metric[name][k])
            rows.append(MetricRow(metric=name, k=k, mean=mean, stderr=stderr, n_users=len(evaluated)))

    config = dict(B.metadata())
    config.update({"ks": ks, "partition": partition, "seed": split.seed})
    report = MetricReport(rows=rows, n_users=len(evaluated), config=config)
    for row in rows:
        _log.info("%s@%d = %.4f (+/- %.4f) over %d users", row.metric, row.k, row.mean, row.stderr, row.n_users)
    return report


def format_report(report: MetricReport) -> str:
    """Human-readable table."""
    frame = report.to_frame()
    frame["name"] = frame["metric"] + "@" + frame["k"].astype(str)
    return frame[["name", "mean", "stderr", "n_users"]].to_string(index=False, float_format=lambda v: f"{v:.4f}")


def write_report(report: MetricReport, path: Union[str, Path]) -> None:
    """Flat CSV with columns metric,k,mean,stderr,n_users; byte-stable for equal inputs."""
    frame = report.to_frame().sort_values(["metric", "k"], kind="mergesort")
    frame.to_csv(path, index=False, float_format="%.10f", lineterminator="\n")


__all__ = [
    "DEFAULT_KS",
    "METRICS",
    "evaluate",
    "format_report",
    "ndcg_at_k",
    "recall_at_k",
    "write_report",
]
