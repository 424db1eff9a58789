"""End-to-end recovery: alternating completion/LASSO with support confinement.

Both algorithms share the same two-phase skeleton:

  phase 1  alternate nuclear-norm completion and LASSO on the full masked
           matrix until the weight vector stabilizes (threshold `epsilon`),
           then keep the support S of the weights;
  phase 2  confine the masked matrix to the kept columns and repeat the
           alternation at the tighter threshold `alpha`, then re-embed the
           confined weights into length n with zeros elsewhere.

The covariance-screened variant widens S between the phases: it normalizes
the phase-1 completed matrix, forms the empirical covariance, and adds every
column whose correlation with a support column exceeds `gamma`. Extra
correlated columns do not enter the final support directly; they give the
phase-2 completion more structure to work with.

Each phase-1/phase-2 outer iteration advances the completion solver by a
capped number of warm-started proximal steps and then re-fits the LASSO, so
the weight-change stopping rule measures joint progress of both solvers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .completion import CompletionConfig, complete_nuclear
from .errors import PipelineError
from .lasso import LassoConfig, SparseWeights, lasso_cd, pseudoinverse_init
from .matrices import CovarianceMatrix, MaskedMatrix, empirical_covariance, normalize_columns


@dataclass(frozen=True)
class PipelineConfig:
    """Both recovery algorithms' parameters.

    `alpha` defaults to epsilon/100 and must satisfy alpha <= epsilon/10
    (phase 2 is the precise phase). `gamma` is the covariance sifting
    threshold used only by the screened variant. `signed_correlation`
    restores the literal "correlation larger than gamma" reading instead of
    the default absolute-value comparison; `center_columns` subtracts column
    means before normalization so the sifting matrix becomes a true
    correlation matrix. `phase2_lambda2` overrides the LASSO weight during
    phase 2 (by default the phase-1 value is reused).
    """

    epsilon: float = 1e-3
    alpha: float | None = None
    gamma: float = 0.5
    completion_cfg: CompletionConfig = field(default_factory=CompletionConfig)
    lasso_cfg: LassoConfig = field(default_factory=LassoConfig)
    max_outer_iters: int = 50
    center_columns: bool = False
    signed_correlation: bool = False
    phase2_lambda2: float | None = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.alpha is not None:
            if self.alpha <= 0:
                raise ValueError("alpha must be positive")
            if self.alpha > self.epsilon / 10.0:
                raise ValueError("alpha must be at most epsilon/10")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be at least 1")

    @property
    def alpha_effective(self) -> float:
        return self.alpha if self.alpha is not None else self.epsilon / 100.0


@dataclass(frozen=True)
class AlternateResult:
    completed: np.ndarray
    weights: SparseWeights
    iterations: int
    converged: bool
    beta_delta: float


@dataclass(frozen=True)
class RecoveryResult:
    """Output of either recovery algorithm.

    `beta` is the length-n re-embedded weight vector; it is exactly zero off
    `support_augmented`, and `support_phase1` is always a subset of
    `support_augmented` (they coincide for the unscreened algorithm).
    Phase wall times are reported separately; covariance construction and
    sifting count toward phase 2.
    """

    beta: SparseWeights
    support_phase1: list[int]
    support_augmented: list[int]
    completed_confined: np.ndarray
    outer_iters_phase1: int
    outer_iters_phase2: int
    wall_time: float
    wall_time_phase1: float
    wall_time_phase2: float
    converged: bool


def alternate_minimize(
    xhat: MaskedMatrix,
    y: np.ndarray,
    cfg: PipelineConfig,
    stop_tol: float,
) -> AlternateResult:
    """Alternate capped completion steps with LASSO refits until beta settles.

    Starts from beta_1 = pseudoinverse of the zero-filled matrix applied to
    y. Always performs at least one iteration; stops once the Euclidean
    change between consecutive weight vectors is at most `stop_tol` (pass
    epsilon for phase 1, alpha for phase 2) or `cfg.max_outer_iters` is
    reached, in which case the last iterate is returned with
    ``converged=False``.
    """
    if stop_tol <= 0:
        raise ValueError("stop_tol must be positive")
    y = np.asarray(y, dtype=float)

    beta = pseudoinverse_init(xhat, y)
    completed: np.ndarray | None = None
    converged = False
    iterations = 0
    delta = float("inf")
    for _ in range(cfg.max_outer_iters):
        completed = complete_nuclear(xhat, cfg.completion_cfg, warm_start=completed)
        weights = lasso_cd(completed, y, cfg.lasso_cfg, warm_start=beta)
        delta = float(np.linalg.norm(weights.beta - beta))
        beta = weights.beta
        iterations += 1
        if delta <= stop_tol:
            converged = True
            break
    return AlternateResult(completed, weights, iterations, converged, delta)


def confine_columns(xhat: MaskedMatrix, s: list[int]) -> MaskedMatrix:
    """Slice the masked matrix down to the selected columns.

    Column order is ascending by original index; the original indices are
    retained on the result's `col_index`.
    """
    if len(s) == 0:
        raise PipelineError("empty support: nothing to confine to")
    idx = np.asarray(sorted(int(i) for i in s), dtype=int)
    if idx[0] < 0 or idx[-1] >= xhat.n:
        raise ValueError(f"support indices out of range for {xhat.n} columns")
    return MaskedMatrix(xhat.values[:, idx], xhat.mask[:, idx], col_index=idx)


def augment_support(
    s: list[int],
    c: CovarianceMatrix,
    gamma: float,
    degenerate_flags: np.ndarray | None = None,
    signed: bool = False,
) -> list[int]:
    """Add columns correlated with the support above gamma, sorted ascending.

    A column j joins the augmented set when some i in `s` has
    |c[i, j]| > gamma (or c[i, j] > gamma with ``signed=True``) and j is not
    flagged degenerate. Correlations are clipped to magnitude 1 before the
    comparison so float round-off on normalized data can never defeat a
    gamma >= 1 threshold.
    """
    entries = c.entries
    base = sorted(int(i) for i in s)
    if any(i < 0 or i >= c.n for i in base):
        raise ValueError(f"support indices out of range for {c.n} features")
    if not base:
        return []
    rows = entries[base, :]
    score = np.clip(rows, -1.0, 1.0) if signed else np.abs(np.clip(rows, -1.0, 1.0))
    correlated = (score > gamma).any(axis=0)
    if degenerate_flags is not None:
        correlated &= ~np.asarray(degenerate_flags, dtype=bool)
    augmented = set(base) | set(np.flatnonzero(correlated).tolist())
    return sorted(int(i) for i in augmented)


def embed_beta(beta_confined: np.ndarray, s_hat: list[int], n: int) -> np.ndarray:
    """Scatter confined weights back to length n, zero everywhere else."""
    beta_confined = np.asarray(beta_confined, dtype=float)
    idx = np.asarray(sorted(int(i) for i in s_hat), dtype=int)
    if beta_confined.shape != (idx.size,):
        raise ValueError(
            f"confined weights length {beta_confined.shape} != support size {idx.size}"
        )
    if idx.size and (idx[0] < 0 or idx[-1] >= n):
        raise ValueError(f"support indices out of range for length {n}")
    out = np.zeros(n)
    out[idx] = beta_confined
    return out


def _phase2_config(cfg: PipelineConfig) -> PipelineConfig:
    if cfg.phase2_lambda2 is None:
        return cfg
    return replace(cfg, lasso_cfg=replace(cfg.lasso_cfg, lambda2=cfg.phase2_lambda2))


def _finish(
    xhat: MaskedMatrix,
    y: np.ndarray,
    cfg: PipelineConfig,
    phase1: AlternateResult,
    support: list[int],
    augmented: list[int],
    t_start: float,
    t_phase2: float,
) -> RecoveryResult:
    confined = confine_columns(xhat, augmented)
    phase2 = alternate_minimize(confined, y, _phase2_config(cfg), cfg.alpha_effective)
    beta_full = embed_beta(phase2.weights.beta, augmented, xhat.n)
    weights = SparseWeights(
        beta_full,
        support_tol=cfg.lasso_cfg.support_tol,
        converged=phase1.converged and phase2.converged,
        n_sweeps=phase2.weights.n_sweeps,
    )
    t_end = time.perf_counter()
    return RecoveryResult(
        beta=weights,
        support_phase1=support,
        support_augmented=augmented,
        completed_confined=phase2.completed,
        outer_iters_phase1=phase1.iterations,
        outer_iters_phase2=phase2.iterations,
        wall_time=t_end - t_start,
        wall_time_phase1=t_phase2 - t_start,
        wall_time_phase2=t_end - t_phase2,
        converged=phase1.converged and phase2.converged,
    )


def four_step_recovery(
    xhat: MaskedMatrix, y: np.ndarray, cfg: PipelineConfig
) -> RecoveryResult:
    """Two-phase recovery without covariance screening.

    Phase 1 on the full matrix at threshold epsilon, support extraction,
    column confinement, phase 2 at threshold alpha, zero re-embedding.
    """
    t_start = time.perf_counter()
    phase1 = alternate_minimize(xhat, y, cfg, cfg.epsilon)
    support = phase1.weights.support
    if not support:
        raise PipelineError("no features selected; lower lambda2")
    t_phase2 = time.perf_counter()
    return _finish(xhat, y, cfg, phase1, support, support, t_start, t_phase2)


def modified_four_step_recovery(
    xhat: MaskedMatrix, y: np.ndarray, cfg: PipelineConfig
) -> RecoveryResult:
    """Two-phase recovery with covariance-screened support augmentation.

    Identical to :func:`four_step_recovery` through phase 1; before
    confinement, the phase-1 completed matrix is column-normalized, its
    empirical covariance formed, and every column correlated above
    cfg.gamma with a support column is added. The covariance is built from
    the completed matrix (not the raw masked one): completed entries are the
    best available estimate of the unobserved data.
    """
    t_start = time.perf_counter()
    phase1 = alternate_minimize(xhat, y, cfg, cfg.epsilon)
    support = phase1.weights.support
    if not support:
        raise PipelineError("no features selected; lower lambda2")
    t_phase2 = time.perf_counter()
    normalized, degenerate = normalize_columns(
        phase1.completed, center=cfg.center_columns
    )
    covariance = empirical_covariance(normalized)
    augmented = augment_support(
        support, covariance, cfg.gamma, degenerate, signed=cfg.signed_correlation
    )
    return _finish(xhat, y, cfg, phase1, support, augmented, t_start, t_phase2)
