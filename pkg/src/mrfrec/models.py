"""Shared data models and domain exceptions for mrfrec."""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp


class MrfError(Exception):
    """Base exception for mrfrec domain errors."""

    # pipeline step that raised, when known
    phase: Optional[str] = None


class ConfigError(MrfError):
    """Configuration value or parameter outside its allowed range."""


class DataError(MrfError):
    """Input data is unreadable, empty, or inconsistent."""


class MalformedRowError(DataError):
    """A row of a delimited interaction file could not be parsed."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class NumericalError(MrfError):
    """Factorization or inversion failed."""


class SingularBlockError(NumericalError):
    """The covariance submatrix of a block could not be inverted."""

    def __init__(self, seed: int, message: str):
        super().__init__(f"block seeded at item {seed}: {message}")
        self.seed = seed


SOLVERS = ("dense", "dense-mean-constrained", "sparse")


@dataclass(frozen=True)
class Interaction:
    user_id: str
    item_id: str
    value: float = 1.0


@dataclass(frozen=True)
class InteractionMatrix:
    """Users x items interaction strengths with ID <-> index maps.

    ``matrix`` is CSR, rows follow ``user_index`` and columns ``item_index``.
    """

    matrix: sp.csr_matrix
    user_index: pd.Index
    item_index: pd.Index

    @property
    def n_users(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_items(self) -> int:
        return self.matrix.shape[1]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def user_items(self, user: int) -> np.ndarray:
        start, end = self.matrix.indptr[user], self.matrix.indptr[user + 1]
        return self.matrix.indices[start:end]


@dataclass(frozen=True)
class EvalSplit:
    """Strong-generalization split: disjoint user sets plus per-user item partitions."""

    train_users: np.ndarray
    validation_users: np.ndarray
    test_users: np.ndarray
    fold_in: Dict[int, np.ndarray]
    held_out: Dict[int, np.ndarray]
    seed: int

    def users(self, partition: str) -> np.ndarray:
        if partition == "validation":
            return self.validation_users
        if partition == "test":
            return self.test_users
        if partition == "train":
            return self.train_users
        raise ConfigError(f"Unknown partition: {partition}")


@dataclass(frozen=True)
class PreprocessStats:
    mu: np.ndarray
    std: np.ndarray
    alpha: float
    s: np.ndarray

    @property
    def m(self) -> int:
        return len(self.mu)

    @classmethod
    def identity(cls, m: int) -> "PreprocessStats":
        """Stats that make every transform a no-op (mu=0, s=1)."""
        return cls(mu=np.zeros(m), std=np.ones(m), alpha=0.0, s=np.ones(m))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mu": self.mu.tolist(),
            "std": self.std.tolist(),
            "alpha": float(self.alpha),
            "s": self.s.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PreprocessStats":
        return cls(
            mu=np.asarray(data["mu"], dtype=np.float64),
            std=np.asarray(data["std"], dtype=np.float64),
            alpha=float(data["alpha"]),
            s=np.asarray(data["s"], dtype=np.float64),
        )


@dataclass(frozen=True)
class GramMatrix:
    """Regularized Gram matrix S = (X'^T X' + lam I) / n."""

    S: np.ndarray
    lam: float
    n: int

    @property
    def m(self) -> int:
        return self.S.shape[0]

    def unregularized(self) -> np.ndarray:
        """X'^T X' recovered from S."""
        G = self.S * self.n
        G[np.diag_indices_from(G)] -= self.lam
        return G

    def scaled(self, factor: float) -> "GramMatrix":
        return GramMatrix(S=self.S * factor, lam=self.lam, n=self.n)


@dataclass
class WeightMatrix:
    """Item-item coefficients; column i holds the regression of item i on the others."""

    B: Union[np.ndarray, sp.csc_matrix]
    item_ids: pd.Index
    solver: str
    lam: float
    alpha: float
    center: bool
    r: Optional[float] = None
    density: Optional[float] = None
    cap: Optional[int] = None

    @property
    def m(self) -> int:
        return self.B.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.B)

    @property
    def nnz(self) -> int:
        if self.is_sparse:
            return int(self.B.nnz)
        return int(np.count_nonzero(self.B))

    def toarray(self) -> np.ndarray:
        return self.B.toarray() if self.is_sparse else np.asarray(self.B)

    def metadata(self) -> Dict[str, Any]:
        return {
            "solver": self.solver,
            "lambda": float(self.lam),
            "alpha": float(self.alpha),
            "center": bool(self.center),
            "r": self.r,
            "density": self.density,
            "cap": self.cap,
        }


@dataclass(frozen=True)
class SparsityPattern:
    """Column-oriented candidate edges: ``neighbors[i]`` lists N(i) sorted ascending.

    ``strengths[i][k]`` is |S[neighbors[i][k], i]|.
    """

    m: int
    neighbors: List[np.ndarray]
    strengths: List[np.ndarray]
    target_density: float
    cap: int
    threshold: float
    capped_columns: int = 0

    def degree(self) -> np.ndarray:
        return np.array([len(nbrs) for nbrs in self.neighbors], dtype=np.int64)

    @property
    def nnz(self) -> int:
        return int(self.degree().sum())

    def to_sparse(self) -> sp.csc_matrix:
        """Boolean m x m matrix A with A[j, i] set for j in N(i)."""
        rows = np.concatenate(self.neighbors) if self.neighbors else np.empty(0, dtype=np.int64)
        cols = np.repeat(np.arange(self.m), self.degree())
        data = np.ones(len(rows), dtype=bool)
        return sp.csc_matrix((data, (rows, cols)), shape=(self.m, self.m))


@dataclass(frozen=True)
class BlockPlan:
    """Seeds in processing order with their dependents D(i) and conditioners C(i).

    ``removed[k]`` holds the items that left the work list when seed k was processed;
    these sets partition the item universe while the D sets may overlap.
    """

    seeds: List[int]
    dependents: List[np.ndarray]
    conditioners: List[np.ndarray]
    removed: List[np.ndarray]
    neighbor_counts: List[int]
    r: float

    @property
    def n_seeds(self) -> int:
        return len(self.seeds)

    def m_i(self, k: int) -> int:
        return len(self.dependents[k]) - 1

    def block_sizes(self) -> np.ndarray:
        return np.array(
            [len(d) + len(c) for d, c in zip(self.dependents, self.conditioners)],
            dtype=np.int64,
        )

    def histogram(self) -> Dict[str, int]:
        sizes, counts = np.unique(self.block_sizes(), return_counts=True)
        return {str(int(size)): int(count) for size, count in zip(sizes, counts)}


@dataclass(frozen=True)
class RankedList:
    items: np.ndarray
    scores: np.ndarray
    excluded: FrozenSet[int] = frozenset()

    def __len__(self) -> int:
        return len(self.items)

    def pairs(self) -> List[tuple]:
        return [(int(i), float(s)) for i, s in zip(self.items, self.scores)]


@dataclass(frozen=True)
class MetricRow:
    metric: str
    k: int
    mean: float
    stderr: float
    n_users: int


@dataclass
class MetricReport:
    rows: List[MetricRow]
    n_users: int
    config: Dict[str, Any] = field(default_factory=dict)

    def get(self, metric: str, k: int) -> MetricRow:
        for row in self.rows:
            if row.metric == metric and row.k == k:
                return row
        raise KeyError(f"{metric}@{k}")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(row) for row in self.rows], columns=["metric", "k", "mean", "stderr", "n_users"])


@dataclass
class TrainConfig:
    lam: float = 500.0
    alpha: float = 0.75
    center: bool = True
    solver: str = "dense"
    target_density: float = 0.005
    cap: int = 1000
    r: float = 0.5
    seed: int = 98765
    threads: int = 1
    omega: float = 3.0

    def validate(self) -> "TrainConfig":
        if not self.lam >= 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {', '.join(SOLVERS)}, got {self.solver!r}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        # Sparse-only fields are ignored by the dense solvers but still range-checked.
        if not 0.0 < self.target_density <= 1.0:
            raise ConfigError(f"target_density must lie in (0, 1], got {self.target_density}")
        if self.cap < 1:
            raise ConfigError(f"cap must be >= 1, got {self.cap}")
        if not 0.0 <= self.r <= 1.0:
            raise ConfigError(f"r must lie in [0, 1], got {self.r}")
        if self.omega <= 0:
            raise ConfigError(f"omega must be > 0, got {self.omega}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["lambda"] = data.pop("lam")
        return data


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
    "SOLVERS",
    "SingularBlockError",
    "SparsityPattern",
    "TrainConfig",
    "WeightMatrix",
]
