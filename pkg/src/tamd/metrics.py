"""Evaluation metrics: degeneracy success, label-matched parameter errors,
Monte Carlo Hellinger distance, adjusted Rand index, held-out likelihood.

Mixtures are identifiable only up to relabeling, so parameter errors are
computed after an exact minimum-cost bipartite matching between estimated
and true components (squared Euclidean distance between means). Hard
cluster labels are maximum a posteriori assignments under the fitted
model. The Hellinger distance uses balanced-mixture importance sampling,
``H^2 = 1 - E_m[sqrt(p q) / m]`` with ``m = (p + q) / 2``, whose integrand
is bounded by 2 regardless of how little the two densities overlap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import linear_sum_assignment

from .affinity import MixtureParams, mean_log_likelihood, mixture_log_density_matrix
from .errors import ContractError
from .fitter import DEGENERACY_DET_THRESHOLD, FitResult, e_step, min_det
from .gaussmath import log_sum_exp_rows
from .simgen import LabeledSample

__all__ = [
    "MetricsReport",
    "HellingerEstimate",
    "match_labels",
    "parameter_errors",
    "hellinger_mc",
    "adjusted_rand_index",
    "heldout_loglik",
    "map_labels",
    "classification_accuracy",
    "evaluate_fit",
]


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ContractError(message)


@dataclass(frozen=True, eq=False)
class MetricsReport:
    """One flat row of evaluation results for a single fit."""

    success: bool
    mean_mse: float
    cov_frobenius_error: float
    hellinger_to_truth: float
    ari: float
    heldout_loglik: float
    matching: tuple[int, ...]

    def __post_init__(self) -> None:
        _require(0.0 <= self.hellinger_to_truth <= 1.0,
                 "hellinger distance must lie in [0, 1]")
        _require(sorted(self.matching) == list(range(len(self.matching))),
                 "matching must be a permutation")

    def to_flat_dict(self) -> dict:
        return {
            "success": self.success,
            "mean_mse": self.mean_mse,
            "cov_frobenius_error": self.cov_frobenius_error,
            "hellinger_to_truth": self.hellinger_to_truth,
            "ari": self.ari,
            "heldout_loglik": self.heldout_loglik,
        }


def match_labels(est: MixtureParams, truth: MixtureParams) -> tuple[int, ...]:
    """Minimum-total-cost assignment of estimated to true components.

    Entry ``k`` of the result is the estimated component paired with true
    component ``k``; cost is squared Euclidean distance between means,
    solved exactly. Ties are resolved deterministically by the solver.
    """
    if est.n_components != truth.n_components:
        raise ContractError("matching needs equal component counts")
    if est.dim != truth.dim:
        raise ContractError("matching needs equal dimensions")
    diff = est.means()[:, None, :] - truth.means()[None, :, :]
    cost = np.sum(diff * diff, axis=2)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(est.n_components, dtype=int)
    perm[cols] = rows
    return tuple(int(i) for i in perm)


def parameter_errors(est: MixtureParams, truth: MixtureParams,
                     matching: tuple[int, ...] | None = None) -> tuple[float, float]:
    """Label-matched ``(mean MSE, mean Frobenius covariance error)``."""
    if matching is None:
        matching = match_labels(est, truth)
    k = truth.n_components
    mse = 0.0
    cov_err = 0.0
    for true_idx in range(k):
        est_comp = est.components[matching[true_idx]]
        true_comp = truth.components[true_idx]
        mse += float(np.sum((est_comp.mean - true_comp.mean) ** 2))
        cov_err += float(np.linalg.norm(est_comp.cov.dense()
                                        - true_comp.cov.dense(), "fro"))
    return mse / k, cov_err / k


class HellingerEstimate(NamedTuple):
    value: float
    std_error: float


def _sample_mixture(params: MixtureParams, draws: int,
                    rng: np.random.Generator) -> NDArray[np.float64]:
    idx = rng.choice(params.n_components, size=draws, p=params.weights)
    noise = rng.standard_normal((draws, params.dim))
    out = np.empty((draws, params.dim))
    for j, comp in enumerate(params.components):
        mask = idx == j
        if np.any(mask):
            out[mask] = comp.mean + noise[mask] @ comp.cov.lower.T
    return out


def hellinger_mc(p: MixtureParams, q: MixtureParams, draws: int,
                 rng: np.random.Generator) -> HellingerEstimate:
    """Monte Carlo Hellinger distance between two mixtures.

    Samples from the balanced mixture ``(p + q) / 2`` and averages
    ``sqrt(p q) / m``. Returns ``H = sqrt(max(0, H^2))`` with a
    delta-method standard error.
    """
    _require(draws >= 2, "need at least two draws")
    _require(p.dim == q.dim, "mixtures must share one dimension")
    balanced = MixtureParams(
        weights=np.concatenate([0.5 * p.weights, 0.5 * q.weights]),
        components=p.components + q.components)
    x = _sample_mixture(balanced, draws, rng)
    log_p = log_sum_exp_rows(mixture_log_density_matrix(x, p))
    log_q = log_sum_exp_rows(mixture_log_density_matrix(x, q))
    log_m = log_sum_exp_rows(np.column_stack([log_p, log_q])) - math.log(2.0)
    integrand = np.exp(0.5 * (log_p + log_q) - log_m)
    h_sq = 1.0 - float(np.mean(integrand))
    se_h_sq = float(np.std(integrand, ddof=1)) / math.sqrt(draws)
    h = math.sqrt(max(0.0, h_sq))
    if h > 1e-12:
        se_h = se_h_sq / (2.0 * h)
    else:
        se_h = math.sqrt(se_h_sq)
    return HellingerEstimate(value=min(1.0, h), std_error=se_h)


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-corrected pair-counting agreement of two partitions.

    Points labeled ``-1`` in either input (contaminants) are excluded.
    Two identical trivial partitions score 1 by convention.
    """
    a = np.asarray(labels_a, dtype=int).reshape(-1)
    b = np.asarray(labels_b, dtype=int).reshape(-1)
    _require(a.shape == b.shape, "label vectors must have equal length")
    keep = (a >= 0) & (b >= 0)
    a, b = a[keep], b[keep]
    n = a.shape[0]
    if n < 2:
        raise ContractError("ARI needs at least two retained points")
    _, a_codes = np.unique(a, return_inverse=True)
    _, b_codes = np.unique(b, return_inverse=True)
    table = np.zeros((a_codes.max() + 1, b_codes.max() + 1))
    np.add.at(table, (a_codes, b_codes), 1.0)

    def comb2(v):
        return v * (v - 1.0) / 2.0

    index = float(np.sum(comb2(table)))
    sum_a = float(np.sum(comb2(table.sum(axis=1))))
    sum_b = float(np.sum(comb2(table.sum(axis=0))))
    expected = sum_a * sum_b / comb2(n)
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0 if index == expected else 0.0
    return (index - expected) / (max_index - expected)


def heldout_loglik(test_data, est: MixtureParams) -> float:
    """Mean per-point mixture log-density on held-out data."""
    return mean_log_likelihood(test_data, est)


def map_labels(data, est: MixtureParams) -> NDArray[np.int64]:
    """Maximum a posteriori component assignment under the fitted model."""
    resp = e_step(data, est)
    return resp.matrix.argmax(axis=1).astype(np.int64)


def classification_accuracy(true_labels, pred_labels,
                            matching: tuple[int, ...]) -> float:
    """Fraction of non-contaminant points whose predicted component,
    mapped through the label matching, equals the true component."""
    a = np.asarray(true_labels, dtype=int).reshape(-1)
    b = np.asarray(pred_labels, dtype=int).reshape(-1)
    keep = (a >= 0) & (b >= 0)
    a, b = a[keep], b[keep]
    _require(a.size > 0, "accuracy needs at least one retained point")
    mapped = np.asarray(matching, dtype=int)[a]
    return float(np.mean(mapped == b))


def evaluate_fit(result: FitResult, sample: LabeledSample,
                 heldout, rng: np.random.Generator,
                 hellinger_draws: int = 10_000) -> MetricsReport:
    """Assemble the full metric row for one fitted model."""
    est = result.params
    truth = sample.truth
    success = min_det(est) > DEGENERACY_DET_THRESHOLD
    matching = match_labels(est, truth)
    mean_mse, cov_err = parameter_errors(est, truth, matching)
    hellinger = hellinger_mc(est, truth, hellinger_draws, rng).value
    predicted = map_labels(sample.data, est)
    ari = adjusted_rand_index(sample.labels, predicted)
    return MetricsReport(success=success,
                         mean_mse=mean_mse,
                         cov_frobenius_error=cov_err,
                         hellinger_to_truth=hellinger,
                         ari=ari,
                         heldout_loglik=heldout_loglik(heldout, est),
                         matching=matching)
