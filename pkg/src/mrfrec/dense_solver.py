"""Closed-form estimation of the full item-item weight matrix from the regularized Gram matrix."""

import logging
from typing import Optional, Union

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigvalsh

from .models import DataError, GramMatrix, NumericalError, WeightMatrix

_log = logging.getLogger(__name__)


def _smallest_eigenvalue(S: np.ndarray) -> float:
    try:
        return float(eigvalsh(S, subset_by_index=[0, 0])[0])
    except (LinAlgError, ValueError):
        return float("nan")


def invert_spd(S: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via Cholesky.

    Raises NumericalError naming the smallest eigenvalue when S is not PD.
    """
    if not np.all(np.isfinite(S)):
        raise NumericalError("Gram matrix contains non-finite entries.")
    try:
        factor = cho_factor(S, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise NumericalError(
            f"Gram matrix is not positive definite ({exc}); smallest eigenvalue "
            f"{_smallest_eigenvalue(S):.3e}. Increase lambda."
        ) from exc
    C = cho_solve(factor, np.eye(S.shape[0]), check_finite=False)
    if not np.all(np.isfinite(C)):
        raise NumericalError("Inverse of the Gram matrix is not finite; S is ill-conditioned.")
    return C


def _weights_from_precision(C: np.ndarray) -> np.ndarray:
    """B_ji = -C_ji / C_ii with a literal zero diagonal."""
    B = -C / np.diag(C)[np.newaxis, :]
    B[np.diag_indices_from(B)] = 0.0
    # normalize negative zeros
    B += 0.0
    return B


def _default_ids(m: int) -> pd.Index:
    return pd.Index(np.arange(m), name="item")


def solve_dense(
    S: GramMatrix,
    item_ids: Optional[pd.Index] = None,
    alpha: float = 0.0,
    center: bool = False,
) -> WeightMatrix:
    """B = I - C * dMat(1 / diag(C)) with C = S^-1."""
    C = invert_spd(S.S)
    B = _weights_from_precision(C)
    _log.info("dense solve: %d items, lambda=%s", S.m, S.lam)
    return WeightMatrix(
        B=B,
        item_ids=item_ids if item_ids is not None else _default_ids(S.m),
        solver="dense",
        lam=S.lam,
        alpha=alpha,
        center=center,
    )


def solve_dense_mean_constrained(
    S: GramMatrix,
    mu: np.ndarray,
    item_ids: Optional[pd.Index] = None,
    alpha: float = 0.0,
    center: bool = False,
) -> WeightMatrix:
    """Closed form under the extra constraint mu^T B = mu^T.

    With this constraint the fit is unchanged by centering the columns of X.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (S.m,):
        raise DataError(f"Mean vector has shape {mu.shape}, expected ({S.m},).")
    if not np.any(mu):
        raise NumericalError("Mean vector is zero; the mean constraint is undefined.")

    C = invert_spd(S.S)
    Cmu = C @ mu
    denom = float(mu @ Cmu)
    if not np.isfinite(denom) or abs(denom) <= np.finfo(float).eps * float(np.abs(mu) @ np.abs(Cmu)):
        raise NumericalError(f"mu^T C mu = {denom:.3e}; mean vector lies in a degenerate direction.")

    # (I - C mu mu^T / mu^T C mu) C, formed without the m x m projector
    M = C - np.outer(Cmu, Cmu) / denom
    diag = np.diag(M)
    if np.any(diag <= np.finfo(float).eps * np.abs(np.diag(C))):
        raise NumericalError("Mean-constrained precision has a vanishing diagonal entry.")

    B = np.eye(S.m) - M / diag[np.newaxis, :]
    B[np.diag_indices_from(B)] = 0.0
    B += 0.0
    _log.info("mean-constrained dense solve: %d items, lambda=%s", S.m, S.lam)
    return WeightMatrix(
        B=B,
        item_ids=item_ids if item_ids is not None else _default_ids(S.m),
        solver="dense-mean-constrained",
        lam=S.lam,
        alpha=alpha,
        center=center,
    )


def objective(S_raw: Union[GramMatrix, np.ndarray], B: Union[WeightMatrix, np.ndarray], lam: float) -> float:
    """||X - XB||_F^2 + lam ||B||_F^2 from Gram identities; used for verification.

    ``S_raw`` is X^T X without ridge; a GramMatrix is converted back to it.
    """
    G = S_raw.unregularized() if isinstance(S_raw, GramMatrix) else np.asarray(S_raw, dtype=np.float64)
    Bd = B.toarray() if isinstance(B, WeightMatrix) else np.asarray(B, dtype=np.float64)
    if G.shape != Bd.shape or G.shape[0] != G.shape[1]:
        raise DataError(f"Shape mismatch: Gram {G.shape} vs weights {Bd.shape}.")
    R = np.eye(G.shape[0]) - Bd
    return float(np.trace(R.T @ G @ R) + lam * np.sum(Bd * Bd))


__all__ = [
    "invert_spd",
    "objective",
    "solve_dense",
    "solve_dense_mean_constrained",
]
