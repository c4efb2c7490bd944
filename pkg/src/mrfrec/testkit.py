"""Independent oracles and synthetic data generators for the test suite.

The oracles use plain dense normal equations solved by LU, so they share no code
path with the Cholesky-based solvers they check.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .ingest import build_matrix
from .models import ConfigError, InteractionMatrix, NumericalError


@dataclass(frozen=True)
class SyntheticSpec:
    n_users: int
    n_items: int
    density: float
    blocks: Optional[Sequence[int]] = None
    seed: int = 0
    # probability of an extra interaction outside the user's block
    leak: float = 0.0

    def block_sizes(self) -> Sequence[int]:
        if self.blocks is None:
            return [self.n_items]
        if any(size <= 0 for size in self.blocks):
            raise ConfigError(f"Block sizes must be positive, got {list(self.blocks)}")
        if sum(self.blocks) != self.n_items:
            raise ConfigError(f"Block sizes sum to {sum(self.blocks)}, expected {self.n_items}")
        return list(self.blocks)


def ridge_column_oracle(X: np.ndarray, i: int, lam: float) -> np.ndarray:
    """argmin_b ||X_i - X_{-i} b||^2 + lam ||b||^2, embedded with b_i = 0."""
    X = np.asarray(X, dtype=np.float64)
    m = X.shape[1]
    others = np.delete(np.arange(m), i)
    A = X[:, others]
    lhs = A.T @ A + lam * np.eye(m - 1)
    rhs = A.T @ X[:, i]
    try:
        b = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Normal equations for column {i} are singular at lambda={lam}") from exc
    out = np.zeros(m)
    out[others] = b
    return out


def _to_matrix(rows: np.ndarray, cols: np.ndarray) -> InteractionMatrix:
    frame = pd.DataFrame({
        "user": [f"u{u:06d}" for u in rows],
        "item": [f"i{j:05d}" for j in cols],
        "value": np.ones(len(rows)),
    })
    return build_matrix(frame)


def make_block_diagonal(spec: SyntheticSpec) -> InteractionMatrix:
    """Users interact only inside one randomly assigned item block.

    No user touches two blocks, so the uncentered Gram matrix is exactly zero across
    blocks (global column centering would reintroduce cross-block terms). Every user
    gets at least one item, every item at least one user and every block at least
    one user. Items are ordered block by block. With ``leak`` > 0 the block
    guarantee no longer holds.
    """
    sizes = spec.block_sizes()
    rng = np.random.default_rng(spec.seed)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    if spec.n_users < len(sizes):
        raise ConfigError(f"{len(sizes)} blocks need at least as many users, got {spec.n_users}")
    # one user per block first, the rest uniformly
    assignment = rng.permutation(np.concatenate([
        np.arange(len(sizes)),
        rng.integers(len(sizes), size=spec.n_users - len(sizes)),
    ]))

    rows, cols = [], []
    for user, block in enumerate(assignment):
        items = starts[block] + np.flatnonzero(rng.random(sizes[block]) < spec.density)
        if len(items) == 0:
            items = np.array([starts[block] + rng.integers(sizes[block])])
        if spec.leak > 0:
            extra = np.flatnonzero(rng.random(spec.n_items) < spec.leak)
            items = np.union1d(items, extra)
        rows.extend([user] * len(items))
        cols.extend(items.tolist())

    # cover items nobody picked with a user from their own block
    covered = np.zeros(spec.n_items, dtype=bool)
    covered[cols] = True
    for item in np.flatnonzero(~covered):
        block = int(np.searchsorted(starts, item, side="right") - 1)
        members = np.flatnonzero(assignment == block)
        user = int(rng.choice(members))
        rows.append(user)
        cols.append(int(item))

    return _to_matrix(np.asarray(rows), np.asarray(cols))


def make_random(spec: SyntheticSpec) -> InteractionMatrix:
    """Bernoulli(density) binary matrix; a single block of all items."""
    return make_block_diagonal(SyntheticSpec(
        n_users=spec.n_users,
        n_items=spec.n_items,
        density=spec.density,
        blocks=None,
        seed=spec.seed,
        leak=spec.leak,
    ))


def random_dense(n_users: int, n_items: int, density: float, seed: int) -> np.ndarray:
    """Dense random binary matrix for oracle comparisons."""
    rng = np.random.default_rng(seed)
    return (rng.random((n_users, n_items)) < density).astype(np.float64)


__all__ = [
    "SyntheticSpec",
    "make_block_diagonal",
    "make_random",
    "random_dense",
    "ridge_column_oracle",
]
