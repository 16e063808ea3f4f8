"""Plain EM baseline with restarts and a degeneracy detector.

The update logic here is written out independently of the penalized
fitter on purpose: the two only share the Gaussian primitives, so the
zero-penalty equivalence check between them actually exercises two code
paths. The sole covariance safeguard is a fixed ``1e-12 * I`` ridge; a
component whose scatter still fails to factor, or whose determinant drops
to the detector threshold, halts the run with ``degenerate=True``.
"""

from __future__ import annotations

import time
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from .affinity import MixtureParams, mean_log_likelihood, mixture_log_density_matrix
from .errors import ContractError, DegenerateCovariance
from .fitter import FitResult, min_det
from .gaussmath import GaussianComponent, SpdMatrix, log_sum_exp_rows
from .simgen import init_random

__all__ = ["EmConfig", "em_fit", "em_fit_restarts"]

_COV_SAFEGUARD = 1e-12
_WEIGHT_EPS = 1e-300


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ContractError(message)


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 500
    convergence_tol: float = 1e-8
    restarts: int = 1
    degeneracy_det_threshold: float = 1e-6

    def __post_init__(self) -> None:
        _require(self.max_iters >= 1, "max_iters must be positive")
        _require(self.convergence_tol > 0.0, "convergence_tol must be positive")
        _require(self.restarts >= 1, "restarts must be positive")
        _require(self.degeneracy_det_threshold > 0.0,
                 "degeneracy threshold must be positive")


def em_fit(data: ArrayLike, init: MixtureParams,
           cfg: EmConfig | None = None,
           on_iterate: Callable[[MixtureParams], None] | None = None) -> FitResult:
    """Standard EM from a given initializer.

    The objective trace is the unpenalized mean log-likelihood. Halts on
    convergence, the iteration cap, or degeneracy; on a factorization
    failure the final pre-collapse iterate is reported.
    """
    if cfg is None:
        cfg = EmConfig()
    x = np.asarray(data, dtype=float)
    _require(x.ndim == 2, "data must be an (n, d) matrix")
    _require(x.shape[1] == init.dim, "data dimension must match the init")
    n = x.shape[0]
    k = init.n_components
    eye = np.eye(init.dim)

    start = time.perf_counter()
    theta = init
    current = mean_log_likelihood(x, theta)
    trace = [current]
    converged = False
    degenerate = False

    for _ in range(cfg.max_iters):
        lp = mixture_log_density_matrix(x, theta)
        lse = log_sum_exp_rows(lp)
        bad = ~np.isfinite(lse)
        with np.errstate(invalid="ignore"):
            resp = np.exp(lp - lse[:, None])
        if np.any(bad):
            resp[bad] = 1.0 / k
        mass = resp.sum(axis=0)

        weights = mass / n
        if bool(np.any(weights <= 0.0)):
            weights = np.maximum(weights, _WEIGHT_EPS)
            weights = weights / weights.sum()

        comps = []
        collapsed = False
        for j in range(k):
            if mass[j] <= 0.0:
                comps.append(theta.components[j])
                continue
            r = resp[:, j]
            xbar = (r @ x) / mass[j]
            centered = x - xbar
            scatter = (centered * r[:, None]).T @ centered / mass[j]
            scatter = scatter + _COV_SAFEGUARD * eye
            try:
                cov = SpdMatrix.from_dense(scatter, jitter=0.0, escalate=False)
            except DegenerateCovariance:
                collapsed = True
                break
            comps.append(GaussianComponent(xbar, cov))
        if collapsed:
            degenerate = True
            break

        previous = current
        theta = MixtureParams(weights=weights, components=tuple(comps))
        current = mean_log_likelihood(x, theta)
        trace.append(current)
        if on_iterate is not None:
            on_iterate(theta)
        if min_det(theta) <= cfg.degeneracy_det_threshold:
            degenerate = True
            break
        if abs(current - previous) <= cfg.convergence_tol * (1.0 + abs(previous)):
            converged = True
            break

    degenerate = degenerate or min_det(theta) <= cfg.degeneracy_det_threshold
    return FitResult(params=theta,
                     objective_trace=tuple(trace),
                     iterations=len(trace) - 1,
                     converged=converged,
                     degenerate=degenerate,
                     wall_time=time.perf_counter() - start,
                     backtrack_events=0)


def em_fit_restarts(data: ArrayLike, k: int, cfg: EmConfig,
                    rng: np.random.Generator,
                    first_init: MixtureParams | None = None) -> FitResult:
    """EM with random restarts, returning the best non-degenerate result.

    Initializations are drawn sequentially from ``rng`` (after the
    optional ``first_init``), so a run with more restarts reuses the same
    leading initializers: the best log-likelihood can only improve. If
    every restart degenerates, the best degenerate result is returned,
    still flagged.
    """
    x = np.asarray(data, dtype=float)
    best: FitResult | None = None
    best_clean: FitResult | None = None
    for r in range(cfg.restarts):
        if r == 0 and first_init is not None:
            init = first_init
        else:
            init = init_random(x, k, "kmeanspp_like", rng)
        result = em_fit(x, init, cfg)
        score = result.objective_trace[-1]
        if best is None or score > best.objective_trace[-1]:
            best = result
        if not result.degenerate and (
                best_clean is None or score > best_clean.objective_trace[-1]):
            best_clean = result
    assert best is not None
    return best_clean if best_clean is not None else best
