"""Analytic gradients of the separation barrier, with a finite-difference
oracle.

The gradients are derived directly from the closed form

    log A = (1/4) log|S_a| + (1/4) log|S_b| - (1/2) log|M| - (1/8) d' M^-1 d

with ``M = (S_a + S_b) / 2`` and ``d = mu_a - mu_b``:

    grad_mu    log A = -(1/4) M^-1 d
    grad_Sigma log A = (1/4) S_a^-1 - (1/4) M^-1 + (1/16) M^-1 d d' M^-1

and the barrier gradient follows by the chain rule,
``grad(-log(1 - A)) = A / (1 - A) * grad(log A)``. Covariance derivatives
use the free-entry convention (entries of the symmetric matrix treated as
independent coordinates); the finite-difference check perturbs symmetric
coordinate pairs accordingly. The oracle in :func:`fd_check` is the
arbiter: the fitter consumes only gradients that pass it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .affinity import MixtureParams, PenaltyConfig, _pair_terms, penalty, separation
from .errors import BarrierDomain, ContractError, DegenerateCovariance
from .gaussmath import GaussianComponent, SpdMatrix

__all__ = [
    "PairGeometry",
    "BarrierGradient",
    "pair_geometry",
    "grad_log_affinity",
    "grad_barrier",
    "fd_check",
    "randomized_check",
]


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ContractError(message)


@dataclass(frozen=True, eq=False)
class PairGeometry:
    """Shared geometry of one component pair."""

    m: SpdMatrix
    delta: NDArray[np.float64]
    m_inverse_delta: NDArray[np.float64]
    affinity: float
    log_affinity: float

    def __post_init__(self) -> None:
        _require(self.m.dim == self.delta.shape[0],
                 "pair geometry dimensions disagree")
        _require(0.0 <= self.affinity < 1.0, "pair affinity must be in [0, 1)")


def pair_geometry(a: GaussianComponent, b: GaussianComponent) -> PairGeometry:
    m, delta, m_inv_delta, log_a = _pair_terms(a, b)
    if log_a >= 0.0:
        raise BarrierDomain("pair affinity reached 1: geometry undefined")
    return PairGeometry(m=m, delta=delta, m_inverse_delta=m_inv_delta,
                        affinity=math.exp(log_a), log_affinity=log_a)


@dataclass(frozen=True, eq=False)
class BarrierGradient:
    """Gradient with respect to one component's mean and covariance."""

    wrt_mean: NDArray[np.float64]
    wrt_cov: NDArray[np.float64]

    def __post_init__(self) -> None:
        mean = np.array(self.wrt_mean, dtype=float).reshape(-1)
        cov = np.array(self.wrt_cov, dtype=float)
        _require(cov.ndim == 2 and cov.shape == (mean.size, mean.size),
                 "gradient shapes disagree")
        scale = max(1.0, float(np.max(np.abs(cov))))
        _require(bool(np.max(np.abs(cov - cov.T)) <= 1e-12 * scale),
                 "covariance gradient must be symmetric")
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "wrt_mean", mean)
        object.__setattr__(self, "wrt_cov", cov)


def _pair_grad_log_affinity(a: GaussianComponent, b: GaussianComponent):
    """(grad_mu log A, grad_Sigma log A, log A) for the first argument."""
    geo = pair_geometry(a, b)
    g_mean = -0.25 * geo.m_inverse_delta
    m_inv = geo.m.inverse()
    a_inv = a.cov.inverse()
    g_cov = (0.25 * a_inv - 0.25 * m_inv
             + np.outer(geo.m_inverse_delta, geo.m_inverse_delta) / 16.0)
    g_cov = 0.5 * (g_cov + g_cov.T)
    return g_mean, g_cov, geo.log_affinity


def grad_log_affinity(a: GaussianComponent, b: GaussianComponent) -> BarrierGradient:
    """Gradient of ``log A(a, b)`` with respect to ``a``'s parameters."""
    g_mean, g_cov, _ = _pair_grad_log_affinity(a, b)
    return BarrierGradient(wrt_mean=g_mean, wrt_cov=g_cov)


def _barrier_weight(log_a: float) -> float:
    """``A / (1 - A)`` from ``log A``, accurate near coincidence."""
    gap = -math.expm1(log_a)
    if gap <= 0.0:
        raise BarrierDomain("pair affinity reached 1: barrier weight diverges")
    return math.exp(log_a) / gap


def _sorted_sum(contributions: list[np.ndarray], shape) -> np.ndarray:
    """Sum contributions in a canonical per-entry order.

    Sorting along the contribution axis makes the result independent of
    the order of the terms, so gradients are exactly invariant under any
    relabeling of the other components.
    """
    if not contributions:
        return np.zeros(shape)
    stacked = np.stack(contributions)
    stacked.sort(axis=0)
    return stacked.sum(axis=0)


def grad_barrier(theta: MixtureParams, k: int,
                 cfg: PenaltyConfig) -> BarrierGradient:
    """Gradient of the penalty with respect to component ``k``.

    Accumulates ``A/(1-A) * grad(log A)`` over every pair involving ``k``
    and adds the scale regularizer gradient ``lambda_sc * (2 alpha mu_k,
    2 beta Sigma_k)``. The weight barrier does not depend on component
    parameters and contributes nothing here.
    """
    _require(0 <= k < theta.n_components, "component index out of range")
    comp = theta.components[k]
    d = theta.dim
    mean_parts: list[np.ndarray] = []
    cov_parts: list[np.ndarray] = []
    for j, other in enumerate(theta.components):
        if j == k:
            continue
        g_mean, g_cov, log_a = _pair_grad_log_affinity(comp, other)
        w = _barrier_weight(log_a)
        mean_parts.append(w * g_mean)
        cov_parts.append(w * g_cov)
    g_mean = _sorted_sum(mean_parts, (d,))
    g_cov = _sorted_sum(cov_parts, (d, d))
    if cfg.lambda_sc > 0.0:
        g_mean = g_mean + cfg.lambda_sc * 2.0 * cfg.alpha * comp.mean
        g_cov = g_cov + cfg.lambda_sc * 2.0 * cfg.beta * comp.cov.dense()
    g_cov = 0.5 * (g_cov + g_cov.T)
    return BarrierGradient(wrt_mean=g_mean, wrt_cov=g_cov)


def _with_component(theta: MixtureParams, k: int,
                    comp: GaussianComponent) -> MixtureParams:
    comps = list(theta.components)
    comps[k] = comp
    return MixtureParams(weights=theta.weights, components=tuple(comps))


def _rel_err(fd: float, analytic: float) -> float:
    return abs(fd - analytic) / max(1.0, abs(fd), abs(analytic))


def fd_check(theta: MixtureParams, cfg: PenaltyConfig, step: float = 1e-5,
             _grad_fn=grad_barrier) -> float:
    """Max relative discrepancy between analytic and central-difference
    penalty gradients.

    Every mean coordinate is perturbed by ``+-step``; every covariance
    coordinate is perturbed symmetrically (``E_ij + E_ji`` off the
    diagonal, ``E_ii`` on it) on the dense matrix, which is then
    refactored without jitter. A perturbation that exits the SPD cone
    shrinks the step tenfold and retries the whole sweep once.
    """
    _require(0.0 < step <= 1e-3, "step must lie in (0, 1e-3]")
    _require(separation(theta) > 10.0 * step,
             "separation margin too small for the requested step")
    try:
        return _fd_sweep(theta, cfg, step, _grad_fn)
    except DegenerateCovariance:
        return _fd_sweep(theta, cfg, 0.1 * step, _grad_fn)


def _fd_sweep(theta: MixtureParams, cfg: PenaltyConfig, step: float,
              _grad_fn) -> float:
    worst = 0.0
    for k, comp in enumerate(theta.components):
        grad = _grad_fn(theta, k, cfg)
        d = comp.dim
        for c in range(d):
            mean_plus = comp.mean.copy()
            mean_plus[c] += step
            mean_minus = comp.mean.copy()
            mean_minus[c] -= step
            f_plus = penalty(_with_component(theta, k, GaussianComponent(mean_plus, comp.cov)), cfg)
            f_minus = penalty(_with_component(theta, k, GaussianComponent(mean_minus, comp.cov)), cfg)
            fd = (f_plus - f_minus) / (2.0 * step)
            worst = max(worst, _rel_err(fd, float(grad.wrt_mean[c])))
        dense = comp.cov.dense()
        for i in range(d):
            for j in range(i, d):
                direction = np.zeros((d, d))
                direction[i, j] += 1.0
                direction[j, i] += 1.0
                if i == j:
                    direction[i, i] = 1.0
                cov_plus = SpdMatrix.from_dense(dense + step * direction,
                                                jitter=0.0, escalate=False)
                cov_minus = SpdMatrix.from_dense(dense - step * direction,
                                                 jitter=0.0, escalate=False)
                f_plus = penalty(_with_component(theta, k, GaussianComponent(comp.mean, cov_plus)), cfg)
                f_minus = penalty(_with_component(theta, k, GaussianComponent(comp.mean, cov_minus)), cfg)
                fd = (f_plus - f_minus) / (2.0 * step)
                analytic = float(np.sum(grad.wrt_cov * direction))
                worst = max(worst, _rel_err(fd, analytic))
    return worst


def randomized_check(cases: int, seed: int, step: float = 1e-5,
                     dims: tuple[int, ...] = (1, 2, 3, 5),
                     n_components: tuple[int, ...] = (2, 3, 4)) -> float:
    """Max :func:`fd_check` error over randomized mixture configurations.

    Configurations cycle through the dimension and component-count grids;
    means are resampled until the separation margin admits the step.
    """
    _require(cases >= 1, "cases must be positive")
    rng = np.random.default_rng(seed)
    cfg = PenaltyConfig(lambda_n=0.1, lambda_wt=0.7, lambda_sc=0.3,
                        alpha=0.8, beta=0.6)
    worst = 0.0
    for case in range(cases):
        d = dims[case % len(dims)]
        k = n_components[(case // len(dims)) % len(n_components)]
        theta = _random_mixture(rng, d, k, min_separation=20.0 * step)
        worst = max(worst, fd_check(theta, cfg, step=step))
    return worst


def _random_mixture(rng: np.random.Generator, d: int, k: int,
                    min_separation: float) -> MixtureParams:
    for _ in range(200):
        means = rng.normal(0.0, 3.0, size=(k, d))
        comps = []
        for i in range(k):
            w = rng.normal(size=(d, d))
            cov = SpdMatrix.from_dense(w @ w.T / d + 0.5 * np.eye(d))
            comps.append(GaussianComponent(means[i], cov))
        raw = rng.random(k) + 0.2
        weights = raw / raw.sum()
        theta = MixtureParams(weights=weights, components=tuple(comps))
        if separation(theta) > min_separation:
            return theta
    raise ContractError("could not draw a sufficiently separated mixture")
