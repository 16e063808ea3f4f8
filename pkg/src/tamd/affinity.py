"""Hellinger affinity, separation, and the transcendental penalty.

The pairwise Hellinger affinity between Gaussian components has the closed
form

    A = |S_i|^(1/4) |S_j|^(1/4) / |M|^(1/2) * exp(-(1/8) delta' M^-1 delta)

with ``M = (S_i + S_j) / 2`` and ``delta = mu_i - mu_j``. Everything here
is computed in log space: the barrier term ``-log(1 - A)`` is evaluated as
``-log(-expm1(log A))``, which stays accurate when components nearly
coincide (where ``1 - A`` underflows long before ``log A`` does) and only
diverges at exact coincidence.

Penalty and objective sums are accumulated with order-independent
summation, so both are invariant under component relabeling, exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import BarrierDomain, ContractError
from .gaussmath import (
    GaussianComponent,
    SpdMatrix,
    log_density_batch,
    log_sum_exp_rows,
)

__all__ = [
    "MixtureParams",
    "PenaltyConfig",
    "PenaltyTerms",
    "hellinger_affinity",
    "log_hellinger_affinity",
    "separation",
    "penalty",
    "penalty_terms",
    "mixture_log_density_matrix",
    "mean_log_likelihood",
    "objective",
]

_WEIGHT_SUM_TOL = 1e-12


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ContractError(message)


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Full mixture parameter vector: simplex weights plus K components."""

    weights: NDArray[np.float64]
    components: tuple[GaussianComponent, ...]

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float).reshape(-1)
        comps = tuple(self.components)
        _require(len(comps) >= 1, "mixture needs at least one component")
        _require(w.shape[0] == len(comps),
                 "weights and components must have equal length")
        _require(bool(np.all(w > 0.0)), "weights must be strictly positive")
        _require(abs(float(np.sum(w)) - 1.0) <= _WEIGHT_SUM_TOL,
                 "weights must sum to 1")
        d = comps[0].dim
        _require(all(c.dim == d for c in comps),
                 "components must share one dimension")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def means(self) -> NDArray[np.float64]:
        return np.stack([c.mean for c in self.components])


@dataclass(frozen=True)
class PenaltyConfig:
    """All penalty knobs.

    ``lambda_n`` is the overall schedule value multiplying the whole
    penalty in the objective; ``lambda_wt`` and ``lambda_sc`` weight the
    weight barrier and the scale regularizer inside the penalty;
    ``alpha`` / ``beta`` are the scale regularizer's coefficients on
    ``|mu|^2`` and ``|Sigma|_F^2``; ``jitter`` is the stabilization ridge
    added when covariance proposals are refactored.
    """

    lambda_n: float = 0.0
    lambda_wt: float = 1.0
    lambda_sc: float = 0.0
    alpha: float = 1.0
    beta: float = 1.0
    jitter: float = 1e-6

    def __post_init__(self) -> None:
        for name in ("lambda_n", "lambda_wt", "lambda_sc", "alpha", "beta"):
            _require(getattr(self, name) >= 0.0, f"{name} must be nonnegative")
        _require(self.jitter > 0.0, "jitter must be positive")


def _pair_terms(a: GaussianComponent, b: GaussianComponent):
    """Shared pair geometry: (M factored, delta, M^-1 delta, log affinity)."""
    if a.dim != b.dim:
        raise ContractError("components must share one dimension")
    m = SpdMatrix.from_dense(0.5 * (a.cov.dense() + b.cov.dense()),
                             jitter=0.0, escalate=False)
    delta = a.mean - b.mean
    m_inv_delta = m.solve(delta)
    quad = float(delta @ m_inv_delta)
    log_a = (0.25 * a.cov.log_det() + 0.25 * b.cov.log_det()
             - 0.5 * m.log_det() - 0.125 * quad)
    return m, delta, m_inv_delta, log_a


def log_hellinger_affinity(a: GaussianComponent, b: GaussianComponent) -> float:
    """Log of the closed-form Gaussian Hellinger affinity."""
    return _pair_terms(a, b)[3]


def hellinger_affinity(a: GaussianComponent, b: GaussianComponent) -> float:
    """Closed-form Gaussian Hellinger affinity, clamped into [0, 1]."""
    return min(1.0, math.exp(log_hellinger_affinity(a, b)))


def _pair_log_affinities(theta: MixtureParams) -> list[float]:
    comps = theta.components
    k = len(comps)
    return [log_hellinger_affinity(comps[i], comps[j])
            for i in range(k) for j in range(i + 1, k)]


def separation(theta: MixtureParams) -> float:
    """Minimum over component pairs of ``1 - affinity``.

    For a single component there are no pairs; by convention the
    separation is 1.0 (nothing can coalesce).
    """
    if theta.n_components < 2:
        return 1.0
    gaps = [_affinity_gap(la) for la in _pair_log_affinities(theta)]
    return min(1.0, min(gaps))


def _affinity_gap(log_a: float) -> float:
    """``1 - A`` from ``log A``, accurate near coincidence."""
    if log_a >= 0.0:
        return 0.0
    return -math.expm1(log_a)


def _barrier_term(log_a: float) -> float:
    """``-log(1 - A)`` from ``log A``; diverges only at exact coincidence."""
    gap = _affinity_gap(log_a)
    if gap <= 0.0:
        raise BarrierDomain("pairwise affinity reached 1: barrier diverges")
    return -math.log(gap)


@dataclass(frozen=True)
class PenaltyTerms:
    """The three addends of the penalty, already weighted.

    ``separation`` is the pairwise barrier sum, ``weight`` is
    ``lambda_wt * (-sum log pi_k)`` and ``scale`` is
    ``lambda_sc * sum(alpha |mu_k|^2 + beta |Sigma_k|_F^2)``.
    """

    separation: float
    weight: float
    scale: float

    @property
    def total(self) -> float:
        return math.fsum((self.separation, self.weight, self.scale))


def penalty_terms(theta: MixtureParams, cfg: PenaltyConfig) -> PenaltyTerms:
    """Evaluate the penalty, returning its three addends individually."""
    sep = math.fsum(_barrier_term(la) for la in _pair_log_affinities(theta))
    if bool(np.any(theta.weights <= 0.0)):
        raise BarrierDomain("a mixture weight reached 0: barrier diverges")
    wt = -math.fsum(math.log(w) for w in theta.weights.tolist())
    sc = math.fsum(
        cfg.alpha * float(c.mean @ c.mean) + cfg.beta * c.cov.frobenius_sq()
        for c in theta.components)
    return PenaltyTerms(separation=sep,
                        weight=cfg.lambda_wt * wt,
                        scale=cfg.lambda_sc * sc)


def penalty(theta: MixtureParams, cfg: PenaltyConfig) -> float:
    """Total penalty ``B_sep + lambda_wt * B_wt + lambda_sc * B_sc``."""
    return penalty_terms(theta, cfg).total


def mixture_log_density_matrix(data: ArrayLike,
                               theta: MixtureParams) -> NDArray[np.float64]:
    """Matrix of ``log(pi_k) + log N(x_i; mu_k, Sigma_k)``, shape (n, K)."""
    x = np.asarray(data, dtype=float)
    _require(x.ndim == 2, "data must be an (n, d) matrix")
    _require(x.shape[1] == theta.dim, "data dimension must match the mixture")
    cols = [math.log(float(w)) + log_density_batch(x, c)
            for w, c in zip(theta.weights, theta.components)]
    return np.column_stack(cols)


def mean_log_likelihood(data: ArrayLike, theta: MixtureParams) -> float:
    """Mean per-point mixture log-density."""
    lp = mixture_log_density_matrix(data, theta)
    return float(np.mean(log_sum_exp_rows(lp)))


def objective(data: ArrayLike, theta: MixtureParams, cfg: PenaltyConfig) -> float:
    """Penalized objective: mean log-likelihood minus ``lambda_n`` times
    the penalty."""
    return mean_log_likelihood(data, theta) - cfg.lambda_n * penalty(theta, cfg)
