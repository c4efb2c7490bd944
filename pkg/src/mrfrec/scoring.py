"""Per-user scores and top-N lists from a weight matrix."""

import logging
from typing import Dict, Iterable, Optional, Union

import numpy as np
import scipy.sparse as sp

from .models import DataError, PreprocessStats, RankedList, WeightMatrix

_log = logging.getLogger(__name__)

UserVector = Union[Dict[int, float], np.ndarray, sp.spmatrix]


def _as_row(x: UserVector, m: int) -> sp.csr_matrix:
    if isinstance(x, dict):
        items = np.fromiter(x.keys(), dtype=np.int64, count=len(x))
        values = np.fromiter(x.values(), dtype=np.float64, count=len(x))
        if len(items) and (items.min() < 0 or items.max() >= m):
            raise DataError(f"User vector references items outside [0, {m}).")
        return sp.csr_matrix((values, (np.zeros(len(items), dtype=np.int64), items)), shape=(1, m))
    row = sp.csr_matrix(x)
    if row.shape != (1, m):
        raise DataError(f"User vector has shape {row.shape}, expected (1, {m}).")
    return row


def _right_multiply(B: WeightMatrix, dense_rows: np.ndarray) -> np.ndarray:
    if B.is_sparse:
        return np.asarray((B.B.T @ dense_rows.T).T)
    return dense_rows @ B.B


def score_batch(B: WeightMatrix, X: sp.spmatrix, stats: PreprocessStats, center: Optional[bool] = None) -> np.ndarray:
    """Scores for many users at once: (X' B) * s + center * mu, with X' formed implicitly."""
    center = B.center if center is None else center
    if stats.m != B.m:
        raise DataError(f"Statistics cover {stats.m} items but the weights cover {B.m}.")
    if X.shape[1] != B.m:
        raise DataError(f"User rows cover {X.shape[1]} items but the weights cover {B.m}.")

    Z = sp.csr_matrix(X) @ sp.diags(1.0 / stats.s)
    raw = Z @ B.B
    raw = raw.toarray() if sp.issparse(raw) else np.asarray(raw)
    if center:
        shift = _right_multiply(B, (stats.mu / stats.s)[np.newaxis, :])
        raw = raw - shift
    scores = raw * stats.s[np.newaxis, :]
    if center:
        scores = scores + stats.mu[np.newaxis, :]
    return scores


def score_all(B: WeightMatrix, x: UserVector, stats: PreprocessStats, center: Optional[bool] = None) -> np.ndarray:
    """Scores for one user; ``x`` holds observed values keyed by item index."""
    return score_batch(B, _as_row(x, B.m), stats, center)[0]


def top_n(scores: np.ndarray, exclude: Iterable[int] = (), n: int = 100) -> RankedList:
    """The n highest scores outside ``exclude``; ties go to the lower item index."""
    if n < 1:
        raise DataError(f"n must be >= 1, got {n}")
    scores = np.asarray(scores, dtype=np.float64)
    excluded = frozenset(int(i) for i in exclude)
    candidates = np.ones(len(scores), dtype=bool)
    if excluded:
        candidates[np.fromiter(excluded, dtype=np.int64)] = False
    idx = np.flatnonzero(candidates)
    order = np.lexsort((idx, -scores[idx]))[:n]
    chosen = idx[order]
    return RankedList(items=chosen, scores=scores[chosen], excluded=excluded)


__all__ = ["UserVector", "score_all", "score_batch", "top_n"]
