"""LASSO by cyclic coordinate descent, plus pseudoinverse initialization.

The objective follows the completion pipeline's scaling exactly:

    min_beta  ||X beta - y||_2^2 + lambda2 * ||beta||_1

with no 1/2 and no 1/m factor. Under this scaling the per-coordinate
soft-threshold level is lambda2 / 2 and full shrinkage (beta = 0) occurs
exactly when lambda2 >= 2 * ||X^T y||_inf. Most libraries scale the data
term differently, so lambda2 values are not interchangeable with theirs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverError
from .matrices import MaskedMatrix

# Singular values below this fraction of the largest are treated as zero
# when forming the pseudoinverse.
PINV_RCOND = 1e-10


@dataclass(frozen=True)
class LassoConfig:
    lambda2: float = 0.1
    tol: float = 1e-7
    max_sweeps: int = 1000
    support_tol: float = 1e-8

    def __post_init__(self):
        if self.lambda2 < 0:
            raise ValueError("lambda2 must be nonnegative")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")
        if self.support_tol <= 0:
            raise ValueError("support_tol must be positive")


@dataclass(frozen=True)
class SparseWeights:
    """Regression weights with an explicit numerical support.

    The support is exactly ``{i : |beta[i]| > support_tol}`` and is always
    recomputable from `beta`. `converged` is False when the solver ran out
    of sweeps before the coordinate changes dropped below tolerance.
    """

    beta: np.ndarray
    support_tol: float = 1e-8
    converged: bool = True
    n_sweeps: int = 0

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))

    @property
    def support(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(np.abs(self.beta) > self.support_tol)]


def soft_threshold(v: float, t: float) -> float:
    return float(np.sign(v) * max(abs(v) - t, 0.0))


def lasso_objective(x: np.ndarray, y: np.ndarray, beta: np.ndarray, lambda2: float) -> float:
    r = x @ beta - y
    return float(r @ r + lambda2 * np.abs(beta).sum())


def pseudoinverse_init(xhat: MaskedMatrix, y: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares weights of the zero-filled masked matrix.

    Computed via SVD; singular values below ``PINV_RCOND`` times the largest
    are treated as zero. Serves as the warm start beta_1 for the recovery
    loops.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (xhat.m,):
        raise ValueError(f"y length {y.shape} does not match {xhat.m} rows")
    try:
        return np.linalg.pinv(xhat.values, rcond=PINV_RCOND) @ y
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"SVD failed in pseudoinverse: {exc}") from exc


def lasso_cd(
    x: np.ndarray,
    y: np.ndarray,
    cfg: LassoConfig,
    warm_start: np.ndarray | None = None,
) -> SparseWeights:
    """Cyclic coordinate descent for the l1-penalized least squares above.

    Each coordinate is minimized exactly via
    ``beta_j <- soft(x_j^T r_j, lambda2/2) / ||x_j||^2`` with r_j the
    residual excluding coordinate j. After a first full sweep the solver
    cycles over the nonzero coordinates only, returning to a full sweep to
    verify convergence (max absolute coordinate change < cfg.tol over a
    full sweep). Zero-norm columns keep beta fixed at 0. The objective is
    non-increasing across sweeps and never exceeds its value at the warm
    start (or at the zero vector when none is given).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"design matrix must be 2-D, got shape {x.shape}")
    m, n = x.shape
    if y.shape != (m,):
        raise ValueError(f"y length {y.shape} does not match {m} rows")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in lasso input")

    if warm_start is not None:
        beta = np.asarray(warm_start, dtype=float).copy()
        if beta.shape != (n,):
            raise ValueError(f"warm_start length {beta.shape} does not match {n}")
        if not np.isfinite(beta).all():
            raise ValueError("non-finite values in warm_start")
    else:
        beta = np.zeros(n)

    col_sq = np.einsum("ij,ij->j", x, x)
    solvable = col_sq > 0.0
    beta[~solvable] = 0.0
    all_indices = np.flatnonzero(solvable)

    thresh = cfg.lambda2 / 2.0
    residual = y - x @ beta
    objective = float(residual @ residual + cfg.lambda2 * np.abs(beta).sum())
    slack = 1e-10 * max(1.0, abs(objective))

    converged = False
    sweeps = 0
    full_pass = True
    while sweeps < cfg.max_sweeps:
        if full_pass:
            residual = y - x @ beta  # refresh, kills incremental drift
            indices = all_indices
        else:
            indices = all_indices[beta[all_indices] != 0.0]
            if indices.size == 0:
                full_pass = True
                continue

        max_change = 0.0
        for j in indices:
            old = beta[j]
            if old != 0.0:
                residual += x[:, j] * old
            rho = x[:, j] @ residual
            new = soft_threshold(rho, thresh) / col_sq[j]
            if new != 0.0:
                residual -= x[:, j] * new
            beta[j] = new
            change = abs(new - old)
            if change > max_change:
                max_change = change
        sweeps += 1

        new_objective = float(residual @ residual + cfg.lambda2 * np.abs(beta).sum())
        assert new_objective <= objective + slack, (
            f"lasso objective increased on sweep {sweeps}: "
            f"{objective} -> {new_objective}"
        )
        objective = new_objective

        if full_pass:
            if max_change < cfg.tol:
                converged = True
                break
            full_pass = False
        elif max_change < cfg.tol:
            full_pass = True  # verify against every coordinate

    return SparseWeights(
        beta, support_tol=cfg.support_tol, converged=converged, n_sweeps=sweeps
    )


def extract_support(w: SparseWeights) -> list[int]:
    """Indices with |beta| above the support tolerance, sorted ascending."""
    return w.support
