"""Thresholded sparsity pattern and block-wise approximate estimation of the weight matrix.

Each seed item i contributes one block: its dependents D(i) (i plus the round(r |N(i)|)
neighbors with the largest |covariance|) and conditioners C(i) (the rest of N(i)).
Inverting S restricted to D(i) u C(i) yields estimates for all columns in D(i) at once.
Entries estimated by several blocks are averaged.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .dense_solver import invert_spd
from .models import (
    BlockPlan,
    ConfigError,
    GramMatrix,
    NumericalError,
    SingularBlockError,
    SparsityPattern,
    WeightMatrix,
)
from .parallel import parallel_map

_log = logging.getLogger(__name__)

DEFAULT_CAP = 1000
SINGULAR_BOOST = 10.0


def _round_half_away(value: float) -> int:
    return int(math.floor(value + 0.5)) if value >= 0 else -int(math.floor(-value + 0.5))


def build_pattern(S: GramMatrix, target_density: float, cap: int = DEFAULT_CAP) -> SparsityPattern:
    """Keep off-diagonal entries with |S| at or above the (1 - target_density) quantile,
    then at most ``cap`` per column (largest |S| first, lower index on ties).
    """
    if not 0.0 < target_density <= 1.0:
        raise ConfigError(f"target_density must lie in (0, 1], got {target_density}")
    if cap < 1:
        raise ConfigError(f"cap must be >= 1, got {cap}")

    m = S.m
    magnitude = np.abs(S.S)
    off_diagonal = ~np.eye(m, dtype=bool)
    if m > 1:
        threshold = float(np.quantile(magnitude[off_diagonal], 1.0 - target_density, method="higher"))
    else:
        threshold = float("inf")

    keep = (magnitude >= threshold) & (magnitude > 0) & off_diagonal
    if not keep.any():
        _log.warning("sparsity pattern is empty: all off-diagonal entries of S are zero or below threshold")

    neighbors: List[np.ndarray] = []
    strengths: List[np.ndarray] = []
    capped = 0
    for i in range(m):
        js = np.flatnonzero(keep[:, i])
        if len(js) > cap:
            order = np.lexsort((js, -magnitude[js, i]))[:cap]
            js = np.sort(js[order])
            capped += 1
        neighbors.append(js)
        strengths.append(magnitude[js, i])

    pattern = SparsityPattern(
        m=m,
        neighbors=neighbors,
        strengths=strengths,
        target_density=float(target_density),
        cap=int(cap),
        threshold=threshold,
        capped_columns=capped,
    )
    _log.info(
        "pattern: threshold=%.4g, %d entries (density %.4g), %d columns capped at %d",
        threshold, pattern.nnz, pattern.nnz / max(m * (m - 1), 1), capped, cap,
    )
    return pattern


def pattern_components(pattern: SparsityPattern) -> int:
    """Number of connected components of the symmetrized pattern."""
    A = pattern.to_sparse()
    n_components, _ = connected_components(A + A.T, directed=False)
    return int(n_components)


def plan_blocks(pattern: SparsityPattern, r: float, popularity: Optional[np.ndarray] = None) -> BlockPlan:
    """Pick seeds from a work list ordered by neighbor count (popularity, then index, on ties).

    Every processed seed removes its dependents from the list; the loop ends when the
    list is empty. r = 0 makes every item a seed with D(i) = {i}.
    """
    if not 0.0 <= r <= 1.0:
        raise ConfigError(f"r must lie in [0, 1], got {r}")

    m = pattern.m
    popularity = np.zeros(m, dtype=np.int64) if popularity is None else np.asarray(popularity)
    degree = pattern.degree()
    order = np.lexsort((np.arange(m), -popularity, -degree))
    in_list = np.ones(m, dtype=bool)

    seeds: List[int] = []
    dependents: List[np.ndarray] = []
    conditioners: List[np.ndarray] = []
    removed: List[np.ndarray] = []
    neighbor_counts: List[int] = []

    head = 0
    while True:
        while head < m and not in_list[order[head]]:
            head += 1
        if head == m:
            break
        i = int(order[head])

        nbrs = pattern.neighbors[i]
        m_i = _round_half_away(r * len(nbrs))
        rank = np.lexsort((nbrs, -popularity[nbrs], -pattern.strengths[i]))
        D = np.sort(np.append(nbrs[rank[:m_i]], i)).astype(np.int64)
        C = np.sort(nbrs[rank[m_i:]]).astype(np.int64)

        seeds.append(i)
        dependents.append(D)
        conditioners.append(C)
        removed.append(D[in_list[D]])
        neighbor_counts.append(len(nbrs))
        in_list[D] = False

    _log.info("plan: %d seeds for %d items at r=%s", len(seeds), m, r)
    return BlockPlan(
        seeds=seeds,
        dependents=dependents,
        conditioners=conditioners,
        removed=removed,
        neighbor_counts=neighbor_counts,
        r=float(r),
    )


def block_cost_estimate(plan: BlockPlan, omega: float = 3.0) -> float:
    """Sum over seeds of (1 + |N(i)|) ** omega."""
    return float(sum((1.0 + count) ** omega for count in plan.neighbor_counts))


@dataclass(frozen=True)
class BlockEstimate:
    seed: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray


def solve_block(S: GramMatrix, D: np.ndarray, C: np.ndarray, seed: Optional[int] = None) -> BlockEstimate:
    """Estimates B_ji = -Csub_ji / Csub_ii for every i in D and j in (D u C) minus {i}.

    A singular submatrix is retried once with 10 * lam / n added to its diagonal.
    """
    D = np.asarray(D, dtype=np.int64)
    C = np.asarray(C, dtype=np.int64)
    if len(D) == 0:
        raise ConfigError("Block needs at least one dependent item.")
    if np.intersect1d(D, C).size:
        raise ConfigError("Dependents and conditioners of a block must be disjoint.")
    seed = int(D[0]) if seed is None else int(seed)

    K = np.union1d(D, C)
    sub = S.S[np.ix_(K, K)]
    try:
        precision = invert_spd(sub)
    except NumericalError as exc:
        boost = SINGULAR_BOOST * S.lam / S.n
        if boost <= 0:
            raise SingularBlockError(seed, str(exc)) from exc
        _log.warning("block seeded at item %d is singular; retrying with diagonal boost %.3g", seed, boost)
        try:
            precision = invert_spd(sub + boost * np.eye(len(K)))
        except NumericalError as retry_exc:
            raise SingularBlockError(seed, str(retry_exc)) from retry_exc

    pos = np.searchsorted(K, D)
    estimates = -precision[:, pos] / precision[pos, pos][np.newaxis, :]
    rows = np.repeat(K[:, np.newaxis], len(D), axis=1)
    cols = np.repeat(D[np.newaxis, :], len(K), axis=0)
    off = rows != cols
    return BlockEstimate(seed=seed, rows=rows[off], cols=cols[off], values=estimates[off])


class EstimateAccumulator:
    """Running (sum, count) per entry (j, i); finalized entries are sum / count."""

    def __init__(self, m: int):
        self.m = m
        self._rows: List[np.ndarray] = []
        self._cols: List[np.ndarray] = []
        self._values: List[np.ndarray] = []

    def add(self, estimate: BlockEstimate) -> None:
        self._rows.append(estimate.rows)
        self._cols.append(estimate.cols)
        self._values.append(estimate.values)

    def merge(self, other: "EstimateAccumulator") -> "EstimateAccumulator":
        if other.m != self.m:
            raise ConfigError("Cannot merge accumulators over different item counts.")
        self._rows.extend(other._rows)
        self._cols.extend(other._cols)
        self._values.extend(other._values)
        return self

    def finalize(self) -> sp.csc_matrix:
        if not self._rows:
            return sp.csc_matrix((self.m, self.m))
        rows = np.concatenate(self._rows)
        cols = np.concatenate(self._cols)
        values = np.concatenate(self._values)

        keys, inverse = np.unique(cols * self.m + rows, return_inverse=True)
        sums = np.bincount(inverse, weights=values)
        counts = np.bincount(inverse)
        B = sp.csc_matrix((sums / counts, (keys % self.m, keys // self.m)), shape=(self.m, self.m))
        B.eliminate_zeros()
        _log.debug("accumulator: %d entries, %d with multiple estimates", len(keys), int((counts > 1).sum()))
        return B


def solve_sparse(
    S: GramMatrix,
    pattern: SparsityPattern,
    r: float,
    popularity: Optional[np.ndarray] = None,
    item_ids: Optional[pd.Index] = None,
    alpha: float = 0.0,
    center: bool = False,
    n_jobs: int = 1,
    plan: Optional[BlockPlan] = None,
) -> WeightMatrix:
    """Approximate B from per-seed block inversions, averaging repeated estimates."""
    if plan is None:
        plan = plan_blocks(pattern, r, popularity)

    def _solve(k: int) -> BlockEstimate:
        return solve_block(S, plan.dependents[k], plan.conditioners[k], seed=plan.seeds[k])

    accumulator = EstimateAccumulator(S.m)
    for estimate in parallel_map(_solve, range(plan.n_seeds), n_jobs=n_jobs):
        accumulator.add(estimate)
    B = accumulator.finalize()

    _log.info("sparse solve: %d seeds, %d nonzero weights", plan.n_seeds, B.nnz)
    return WeightMatrix(
        B=B,
        item_ids=item_ids if item_ids is not None else pd.Index(np.arange(S.m), name="item"),
        solver="sparse",
        lam=S.lam,
        alpha=alpha,
        center=center,
        r=float(r),
        density=pattern.target_density,
        cap=pattern.cap,
    )


__all__ = [
    "BlockEstimate",
    "EstimateAccumulator",
    "block_cost_estimate",
    "build_pattern",
    "pattern_components",
    "plan_blocks",
    "solve_block",
    "solve_sparse",
]
