"""Matrix completion: cheap mean imputation and the nuclear-norm solver.

The completion subproblem is

    min_X  ||P_E(X - Xhat)||_F^2 + lambda1 * ||X||_*

solved by proximal gradient with singular-value soft-thresholding. The data
term carries no 1/2 factor, so the prox threshold per step is
``step_size * lambda1 / 2``; with step_size = 1 each gradient step resets the
observed entries to their observed values before shrinking (soft-impute form).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.sparse.linalg import svds

from .errors import SolverDivergenceError, SolverError
from .matrices import MaskedMatrix, project_observed

# Below this min-dimension a full SVD is exact and cheap; above it, a
# configured max_rank switches to truncated decompositions.
FULL_SVD_LIMIT = 500


@dataclass(frozen=True)
class CompletionConfig:
    """Knobs for the nuclear-norm completion solver.

    step_size must lie in (0, 1]: the observed-entry least-squares gradient
    is 1-Lipschitz per entry under this objective scaling, so 1.0 is the
    documented safe default with guaranteed descent.
    """

    lambda1: float = 0.1
    step_size: float = 1.0
    max_inner_iters: int = 500
    inner_tol: float = 1e-6
    max_rank: int | None = None

    def __post_init__(self):
        if self.lambda1 < 0:
            raise ValueError("lambda1 must be nonnegative")
        if not 0.0 < self.step_size <= 1.0:
            raise ValueError("step_size must lie in (0, 1]")
        if self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be at least 1")
        if self.inner_tol <= 0:
            raise ValueError("inner_tol must be positive")
        if self.max_rank is not None and self.max_rank < 1:
            raise ValueError("max_rank must be positive when given")


def mean_impute(xhat: MaskedMatrix) -> np.ndarray:
    """Fill unobserved entries with their column's observed mean.

    Columns with no observed entries are filled with 0.
    """
    counts = xhat.mask.sum(axis=0)
    sums = xhat.values.sum(axis=0)  # unobserved entries are stored as 0
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return np.where(xhat.mask, xhat.values, means[None, :])


def _shrink_svd(x: np.ndarray, tau: float, max_rank: int | None):
    """SVT core; returns the shrunken matrix and its singular values."""
    m, n = x.shape
    use_truncated = (
        max_rank is not None
        and min(m, n) >= FULL_SVD_LIMIT
        and max_rank < min(m, n) - 1
    )
    try:
        if use_truncated:
            u, s, vt = svds(x, k=max_rank)
            order = np.argsort(s)[::-1]
            u, s, vt = u[:, order], s[order], vt[order]
        else:
            u, s, vt = np.linalg.svd(x, full_matrices=False)
            if max_rank is not None and max_rank < s.size:
                u, s, vt = u[:, :max_rank], s[:max_rank], vt[:max_rank]
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"SVD failed during soft-thresholding: {exc}") from exc
    shrunk = np.maximum(s - tau, 0.0)
    return (u * shrunk) @ vt, shrunk


def svd_soft_threshold(
    x: np.ndarray, tau: float, max_rank: int | None = None
) -> np.ndarray:
    """Proximal operator of ``tau * ||.||_*``: soft-threshold singular values.

    Returns U diag(max(sigma_i - tau, 0)) Vt. With `max_rank`, large inputs
    (min dimension >= ``FULL_SVD_LIMIT``) use a truncated decomposition and
    the output rank is capped at `max_rank`.
    """
    x = np.asarray(x, dtype=float)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    out, _ = _shrink_svd(x, tau, max_rank)
    return out


def nuclear_objective(x: np.ndarray, xhat: MaskedMatrix, lambda1: float) -> float:
    """||P_E(x - xhat)||_F^2 + lambda1 * ||x||_*."""
    residual = project_observed(x - xhat.values, xhat.mask)
    data_term = float(np.sum(residual * residual))
    if lambda1 == 0.0:
        return data_term
    sigma = np.linalg.svd(x, compute_uv=False)
    return data_term + lambda1 * float(sigma.sum())


def complete_nuclear(
    xhat: MaskedMatrix,
    cfg: CompletionConfig,
    warm_start: np.ndarray | None = None,
    callback: Callable[[int, np.ndarray, float], None] | None = None,
) -> np.ndarray:
    """Nuclear-norm-regularized completion by proximal gradient.

    Iterates ``X <- svt(X - step * P_E(X - Xhat), step * lambda1 / 2)``
    starting from `warm_start` (or the mean-imputed matrix), stopping once
    the relative Frobenius change drops below ``cfg.inner_tol`` or
    ``cfg.max_inner_iters`` is hit. The objective is non-increasing across
    iterations; the returned matrix never scores worse than the start.

    `callback`, when given, is invoked as ``callback(k, X_k, objective_k)``
    after every iteration.
    """
    if warm_start is not None:
        x = np.asarray(warm_start, dtype=float).copy()
        if x.shape != xhat.shape:
            raise ValueError(
                f"warm_start shape {x.shape} != matrix shape {xhat.shape}"
            )
    else:
        x = mean_impute(xhat)

    tau = cfg.step_size * cfg.lambda1 / 2.0
    objective = nuclear_objective(x, xhat, cfg.lambda1)
    # Round-off slack for the descent check, scaled for large problems.
    slack = 1e-10 * max(1.0, abs(objective))

    for k in range(cfg.max_inner_iters):
        grad_step = x - cfg.step_size * project_observed(x - xhat.values, xhat.mask)
        if cfg.lambda1 == 0.0:
            x_new = grad_step
            new_objective = nuclear_objective(x_new, xhat, 0.0)
        else:
            x_new, sigma = _shrink_svd(grad_step, tau, cfg.max_rank)
            residual = project_observed(x_new - xhat.values, xhat.mask)
            new_objective = float(np.sum(residual * residual))
            new_objective += cfg.lambda1 * float(sigma.sum())

        if not np.isfinite(x_new).all():
            raise SolverDivergenceError(
                f"non-finite completion iterate at inner iteration {k}; "
                "check step_size and input scaling"
            )
        assert new_objective <= objective + slack, (
            f"completion objective increased at iteration {k}: "
            f"{objective} -> {new_objective}"
        )

        denom = max(np.linalg.norm(x), 1e-12)
        change = np.linalg.norm(x_new - x) / denom
        x, objective = x_new, new_objective
        if callback is not None:
            callback(k, x, objective)
        if change < cfg.inner_tol:
            break
    return x
