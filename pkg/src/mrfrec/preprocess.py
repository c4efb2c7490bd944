"""Per-item scaling statistics, centering/scaling transform and the regularized Gram matrix."""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.sparse as sp

from .models import ConfigError, DataError, GramMatrix, InteractionMatrix, PreprocessStats

_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TransformedMatrix:
    """Implicit X' = Z - 1 * offset^T, with Z = X / s kept sparse.

    ``offset`` is mu / s when centering and zero otherwise.
    """

    scaled: sp.csr_matrix
    offset: np.ndarray
    centered: bool

    @property
    def shape(self):
        return self.scaled.shape

    def toarray(self) -> np.ndarray:
        dense = self.scaled.toarray()
        if self.centered:
            dense -= self.offset[np.newaxis, :]
        return dense


def compute_stats(mat: InteractionMatrix, alpha: float) -> PreprocessStats:
    """Population mean and standard deviation per item, with s_i = std_i ** alpha.

    Constant columns get std = 0 exactly and s = 1.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    n, m = mat.matrix.shape
    if n == 0 or m == 0:
        raise DataError("Cannot compute statistics of an empty matrix.")

    X = mat.matrix
    mu = np.asarray(X.mean(axis=0)).ravel()
    second = np.asarray(X.multiply(X).mean(axis=0)).ravel()
    var = np.maximum(second - mu * mu, 0.0)
    std = np.sqrt(var)

    # Cancellation can leave a tiny positive variance on constant columns.
    constant = np.asarray(X.max(axis=0).todense()).ravel() == np.asarray(X.min(axis=0).todense()).ravel()
    std[constant] = 0.0

    s = np.power(std, alpha)
    s[std == 0] = 1.0
    _log.debug("stats: alpha=%s, %d constant items", alpha, int(constant.sum()))
    return PreprocessStats(mu=mu, std=std, alpha=float(alpha), s=s)


def transform(mat: InteractionMatrix, stats: PreprocessStats, center: bool = True) -> TransformedMatrix:
    """X'_ui = (X_ui - center * mu_i) / s_i, kept implicit so X stays sparse."""
    if stats.m != mat.n_items:
        raise DataError(f"Statistics cover {stats.m} items but the matrix has {mat.n_items}.")
    scaled = (mat.matrix @ sp.diags(1.0 / stats.s)).tocsr()
    offset = stats.mu / stats.s if center else np.zeros(stats.m)
    return TransformedMatrix(scaled=scaled, offset=offset, centered=bool(center))


def gram(matT: Union[TransformedMatrix, np.ndarray, sp.spmatrix], lam: float) -> GramMatrix:
    """S = (X'^T X' + lam I) / n, symmetrized.

    For a TransformedMatrix the centering enters as the rank-one correction
    Z^T Z - n * offset offset^T, so X' is never densified.
    """
    if not lam >= 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")

    n = matT.shape[0]
    if n == 0:
        raise DataError("Cannot build a Gram matrix from zero users.")

    if isinstance(matT, TransformedMatrix):
        G = (matT.scaled.T @ matT.scaled).toarray()
        if matT.centered:
            G -= n * np.outer(matT.offset, matT.offset)
    elif sp.issparse(matT):
        G = (matT.T @ matT).toarray()
    else:
        X = np.asarray(matT, dtype=np.float64)
        G = X.T @ X

    S = G / n
    S[np.diag_indices_from(S)] += lam / n
    S = (S + S.T) / 2.0
    _log.info("gram: %d x %d from %d users, lambda=%s", S.shape[0], S.shape[1], n, lam)
    return GramMatrix(S=S, lam=float(lam), n=int(n))


__all__ = [
    "TransformedMatrix",
    "compute_stats",
    "gram",
    "transform",
]
