"""The penalized mixture fitter.

One iteration is: soft assignment, exact penalized weight maximization,
one gradient-corrected mean/covariance step per component, then a
monotonicity guard that interpolates back toward the previous iterate
until the penalized objective does not decrease. The guard is what turns
the single gradient correction into a generalized-EM scheme with a
monotone accepted trace.

The weight step maximizes the penalized surrogate
``sum_k (N_k / n + lambda_n * lambda_wt) log pi_k`` over the simplex in
closed form, so with a positive weight barrier every weight stays at or
above ``lam / (1 + K lam)`` with ``lam = lambda_n * lambda_wt``, exactly.

The mean/covariance proposals subtract the oracle-certified penalty
gradient, preconditioned by the current covariance:

    mu'    = xbar  - lambda_n * Sigma G_mu
    Sigma' = S     - lambda_n * Sigma G_Sigma Sigma

which is an ascent direction on the penalized surrogate at the
unpenalized maximizer; the guard verifies ascent a posteriori.
"""

from __future__ import annotations

import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .affinity import MixtureParams, PenaltyConfig, mixture_log_density_matrix, objective, separation
from .barrier_grad import grad_barrier
from .errors import BarrierDomain, ContractError, DegenerateCovariance, InvalidInit
from .gaussmath import GaussianComponent, SpdMatrix, log_sum_exp_rows

__all__ = [
    "DEGENERACY_DET_THRESHOLD",
    "Responsibilities",
    "FitterConfig",
    "FitResult",
    "default_lambda",
    "e_step",
    "weight_step",
    "component_step",
    "fit",
    "min_det",
]

# A fit whose smallest covariance determinant ends at or below this value
# counts as degenerate (collapsed).
DEGENERACY_DET_THRESHOLD = 1e-6

# Positivity floor for weights; inert unless a component's soft mass is
# exactly zero, which the simplex type would otherwise reject.
_WEIGHT_EPS = 1e-300


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ContractError(message)


@dataclass(frozen=True, eq=False)
class Responsibilities:
    """Soft assignment matrix with per-component column masses."""

    matrix: NDArray[np.float64]
    column_mass: NDArray[np.float64]
    uniform_rows: int = 0

    def __post_init__(self) -> None:
        r = np.asarray(self.matrix, dtype=float)
        mass = np.asarray(self.column_mass, dtype=float)
        _require(r.ndim == 2, "responsibilities must be an (n, K) matrix")
        _require(mass.shape == (r.shape[1],), "column mass length must be K")
        _require(bool(np.all((r >= 0.0) & (r <= 1.0))),
                 "responsibilities must lie in [0, 1]")
        n = r.shape[0]
        _require(bool(np.max(np.abs(r.sum(axis=1) - 1.0)) <= 1e-10),
                 "responsibility rows must sum to 1")
        _require(abs(float(mass.sum()) - n) <= 1e-8 * max(1.0, n),
                 "column masses must sum to n")

    @property
    def n_points(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_components(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class FitterConfig:
    max_iters: int = 500
    convergence_tol: float = 1e-8
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    backtrack_factor: float = 0.5
    backtrack_max_steps: int = 30
    monotonicity_tol: float = 1e-10

    def __post_init__(self) -> None:
        _require(self.max_iters >= 1, "max_iters must be positive")
        _require(self.convergence_tol > 0.0, "convergence_tol must be positive")
        _require(0.0 < self.backtrack_factor < 1.0,
                 "backtrack_factor must lie in (0, 1)")
        _require(self.backtrack_max_steps >= 1,
                 "backtrack_max_steps must be positive")
        _require(self.monotonicity_tol >= 0.0,
                 "monotonicity_tol must be nonnegative")


@dataclass(frozen=True, eq=False)
class FitResult:
    """Terminal parameters plus the per-iteration objective trace."""

    params: MixtureParams
    objective_trace: tuple[float, ...]
    iterations: int
    converged: bool
    degenerate: bool
    wall_time: float
    backtrack_events: int

    def __post_init__(self) -> None:
        _require(self.iterations == len(self.objective_trace) - 1,
                 "iterations must equal trace length minus one")


def default_lambda(n: int) -> float:
    """Default vanishing penalty schedule ``sqrt(log n / n)``."""
    _require(n >= 2, "the default schedule needs n >= 2")
    return math.sqrt(math.log(n) / n)


def min_det(theta: MixtureParams) -> float:
    return min(c.cov.det() for c in theta.components)


def e_step(data: ArrayLike, theta: MixtureParams) -> Responsibilities:
    """Responsibilities ``r_ik`` evaluated in log space.

    A row whose mixture density underflows to zero for every component is
    assigned the uniform ``1/K`` fallback and counted.
    """
    lp = mixture_log_density_matrix(data, theta)
    lse = log_sum_exp_rows(lp)
    bad = ~np.isfinite(lse)
    with np.errstate(invalid="ignore"):
        r = np.exp(lp - lse[:, None])
    if np.any(bad):
        r[bad] = 1.0 / theta.n_components
    return Responsibilities(matrix=r, column_mass=r.sum(axis=0),
                            uniform_rows=int(np.count_nonzero(bad)))


def weight_step(resp: Responsibilities, cfg: FitterConfig) -> NDArray[np.float64]:
    """Exact maximizer of the penalized weight surrogate on the simplex:
    ``pi_k = (N_k / n + lam) / (1 + K lam)`` with
    ``lam = lambda_n * lambda_wt``."""
    lam = cfg.penalty.lambda_n * cfg.penalty.lambda_wt
    n = resp.n_points
    k = resp.n_components
    weights = (resp.column_mass / n + lam) / (1.0 + k * lam)
    if bool(np.any(weights <= 0.0)):
        weights = np.maximum(weights, _WEIGHT_EPS)
        weights = weights / weights.sum()
    return weights


def component_step(data: ArrayLike, resp: Responsibilities,
                   theta: MixtureParams, k: int,
                   cfg: FitterConfig) -> GaussianComponent:
    """One penalized M-step for component ``k``.

    With zero soft mass the component is left untouched (the weight
    barrier revives it on later iterations). Otherwise the weighted
    statistics get one preconditioned gradient correction, and the
    covariance proposal is symmetrized, ridged by the configured jitter,
    and refactored.
    """
    x = np.asarray(data, dtype=float)
    nk = float(resp.column_mass[k])
    if nk <= 0.0:
        return theta.components[k]
    r = resp.matrix[:, k]
    xbar = (r @ x) / nk
    centered = x - xbar
    scatter = (centered * r[:, None]).T @ centered / nk
    pen = cfg.penalty
    lam = pen.lambda_n
    if lam > 0.0 and (theta.n_components > 1 or pen.lambda_sc > 0.0):
        grad = grad_barrier(theta, k, pen)
        sigma_t = theta.components[k].cov.dense()
        mean = xbar - lam * (sigma_t @ grad.wrt_mean)
        scatter = scatter - lam * (sigma_t @ grad.wrt_cov @ sigma_t)
    else:
        mean = xbar
    cov = SpdMatrix.from_dense(scatter, jitter=pen.jitter)
    return GaussianComponent(mean, cov)


def _objective_or_neginf(data: np.ndarray, theta: MixtureParams,
                         pen: PenaltyConfig) -> float:
    try:
        return objective(data, theta, pen)
    except (BarrierDomain, DegenerateCovariance):
        return -math.inf


def _interpolate(old: MixtureParams, new: MixtureParams,
                 alpha: float) -> MixtureParams:
    """Convex combination ``(1 - alpha) old + alpha new``.

    Covariances are combined densely and refactored (convex combinations
    of SPD matrices stay SPD); weights are renormalized only if rounding
    pushed their sum off the simplex tolerance, preserving the exact
    weight floor in the common case.
    """
    weights = (1.0 - alpha) * old.weights + alpha * new.weights
    total = float(weights.sum())
    if abs(total - 1.0) > 1e-12:
        weights = weights / total
    comps = []
    for c_old, c_new in zip(old.components, new.components):
        mean = (1.0 - alpha) * c_old.mean + alpha * c_new.mean
        dense = (1.0 - alpha) * c_old.cov.dense() + alpha * c_new.cov.dense()
        comps.append(GaussianComponent(mean, SpdMatrix.from_dense(dense)))
    return MixtureParams(weights=weights, components=tuple(comps))


def fit(data: ArrayLike, init: MixtureParams,
        cfg: FitterConfig | None = None,
        on_iterate: Callable[[MixtureParams], None] | None = None) -> FitResult:
    """Run the penalized fitter from ``init`` until convergence.

    Requires a separated initializer (``separation(init) > 0`` and all
    weights positive), otherwise :class:`InvalidInit` is raised.
    Degeneracy (a covariance that cannot be refactored) ends the run with
    ``degenerate=True`` rather than raising. ``on_iterate`` is invoked
    with every accepted iterate, which is how per-iteration invariants
    (weight floor, separation) are observed from outside.
    """
    if cfg is None:
        cfg = FitterConfig()
    x = np.asarray(data, dtype=float)
    _require(x.ndim == 2, "data must be an (n, d) matrix")
    _require(x.shape[1] == init.dim, "data dimension must match the init")
    _require(x.shape[0] >= 1, "data must be nonempty")
    if bool(np.any(init.weights <= 0.0)):
        raise InvalidInit("initial weights must be strictly positive")
    if separation(init) <= 0.0:
        raise InvalidInit("initializer must have positive separation")

    start = time.perf_counter()
    pen = cfg.penalty
    theta = init
    current = objective(x, theta, pen)
    trace = [current]
    backtracks = 0
    converged = False
    degenerate = False

    for _ in range(cfg.max_iters):
        resp = e_step(x, theta)
        weights = weight_step(resp, cfg)
        try:
            comps = tuple(component_step(x, resp, theta, k, cfg)
                          for k in range(theta.n_components))
        except DegenerateCovariance:
            degenerate = True
            break
        proposal = MixtureParams(weights=weights, components=comps)
        prop_obj = _objective_or_neginf(x, proposal, pen)
        if prop_obj < current - cfg.monotonicity_tol:
            backtracks += 1
            alpha = 1.0
            accepted = False
            for _step in range(cfg.backtrack_max_steps):
                alpha *= cfg.backtrack_factor
                candidate = _interpolate(theta, proposal, alpha)
                cand_obj = _objective_or_neginf(x, candidate, pen)
                if cand_obj >= current - cfg.monotonicity_tol:
                    proposal, prop_obj = candidate, cand_obj
                    accepted = True
                    break
            if not accepted:
                proposal, prop_obj = theta, current
        previous = current
        theta, current = proposal, prop_obj
        trace.append(current)
        if separation(theta) <= 0.0:
            raise BarrierDomain("separation lost at an accepted iterate")
        if on_iterate is not None:
            on_iterate(theta)
        if abs(current - previous) <= cfg.convergence_tol * (1.0 + abs(previous)):
            converged = True
            break

    degenerate = degenerate or min_det(theta) <= DEGENERACY_DET_THRESHOLD
    return FitResult(params=theta,
                     objective_trace=tuple(trace),
                     iterations=len(trace) - 1,
                     converged=converged,
                     degenerate=degenerate,
                     wall_time=time.perf_counter() - start,
                     backtrack_events=backtracks)
