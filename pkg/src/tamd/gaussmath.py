"""Numerically stable multivariate Gaussian primitives.

Covariances live in Cholesky form throughout the package: every downstream
formula needs log-determinants, quadratic forms, and solves, never an
explicit inverse. Dense symmetric matrices appear only at module
boundaries, where they are symmetrized and factored once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import solve_triangular

from .errors import ContractError, DegenerateCovariance

__all__ = [
    "LOG_2PI",
    "SpdMatrix",
    "GaussianComponent",
    "cholesky",
    "log_density",
    "log_density_batch",
    "log_sum_exp",
    "log_sum_exp_rows",
]

LOG_2PI = math.log(2.0 * math.pi)

# Recovery policy for barely-indefinite inputs: grow the jitter tenfold per
# attempt, capped at a fraction of the mean diagonal scale so that a
# genuinely indefinite matrix fails instead of being silently rewritten.
_JITTER_GROWTH = 10.0
_JITTER_CAP_FRACTION = 1e-2
_JITTER_BASE_FRACTION = 1e-12


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ContractError(message)


def _locked(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SpdMatrix:
    """Symmetric positive-definite matrix stored as its lower Cholesky factor.

    The stored invariant is ``sigma = lower @ lower.T`` with a strictly
    positive diagonal on ``lower``, so the log-determinant is
    ``2 * sum(log(diag(lower)))`` and quadratic forms reduce to one
    triangular solve.
    """

    lower: NDArray[np.float64]

    def __post_init__(self) -> None:
        lower = np.array(self.lower, dtype=float)
        _require(lower.ndim == 2 and lower.shape[0] == lower.shape[1],
                 "Cholesky factor must be a square matrix")
        _require(bool(np.all(np.isfinite(lower))), "Cholesky factor must be finite")
        _require(bool(np.all(np.triu(lower, 1) == 0.0)),
                 "Cholesky factor must be lower triangular")
        _require(bool(np.all(np.diag(lower) > 0.0)),
                 "Cholesky factor diagonal must be strictly positive")
        object.__setattr__(self, "lower", _locked(lower))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @classmethod
    def from_dense(cls, dense: ArrayLike, jitter: float = 0.0,
                   escalate: bool = True) -> "SpdMatrix":
        """Factor a dense symmetric matrix, adding ``jitter * I`` first.

        The input is symmetrized via ``(a + a.T) / 2`` before factoring.
        On failure and with ``escalate=True`` the jitter grows tenfold per
        attempt up to ``1e-2 * trace / d``; if the cap is exceeded a
        :class:`DegenerateCovariance` carrying the offending matrix is
        raised. ``escalate=False`` fails on the first unsuccessful attempt,
        which is what verification code perturbing matrices near the SPD
        boundary needs.
        """
        a = np.asarray(dense, dtype=float)
        _require(a.ndim == 2 and a.shape[0] == a.shape[1],
                 "dense input must be a square matrix")
        _require(bool(np.all(np.isfinite(a))), "dense input must be finite")
        _require(jitter >= 0.0, "jitter must be nonnegative")
        sym = 0.5 * (a + a.T)
        d = sym.shape[0]
        scale = float(np.trace(sym)) / d
        cap = _JITTER_CAP_FRACTION * max(scale, 1e-6)
        eye = np.eye(d)
        j = float(jitter)
        while True:
            try:
                lower = np.linalg.cholesky(sym + j * eye if j > 0.0 else sym)
            except np.linalg.LinAlgError:
                if not escalate:
                    raise DegenerateCovariance(
                        f"matrix not positive definite (jitter {j:g})",
                        matrix=a) from None
                j_next = _JITTER_GROWTH * max(j, _JITTER_BASE_FRACTION * max(scale, 1.0))
                if j_next > cap:
                    raise DegenerateCovariance(
                        f"matrix not positive definite after jitter escalation "
                        f"to {j:g} (cap {cap:g})", matrix=a) from None
                j = j_next
                continue
            return cls(lower)

    @classmethod
    def identity(cls, dim: int, scale: float = 1.0) -> "SpdMatrix":
        _require(dim >= 1, "dim must be positive")
        _require(scale > 0.0, "scale must be positive")
        return cls(math.sqrt(scale) * np.eye(dim))

    def dense(self) -> NDArray[np.float64]:
        """Reconstruct the dense matrix ``lower @ lower.T``."""
        return self.lower @ self.lower.T

    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))

    def det(self) -> float:
        return math.exp(self.log_det())

    def whiten(self, rhs: ArrayLike) -> NDArray[np.float64]:
        """Solve ``lower @ z = rhs``; quadratic forms are ``z @ z``."""
        return solve_triangular(self.lower, np.asarray(rhs, dtype=float),
                                lower=True)

    def solve(self, rhs: ArrayLike) -> NDArray[np.float64]:
        """Solve ``sigma @ x = rhs`` via two triangular solves."""
        z = self.whiten(rhs)
        return solve_triangular(self.lower.T, z, lower=False)

    def inverse(self) -> NDArray[np.float64]:
        inv = self.solve(np.eye(self.dim))
        return 0.5 * (inv + inv.T)

    def trace(self) -> float:
        return float(np.sum(self.lower * self.lower))

    def frobenius_sq(self) -> float:
        """Squared Frobenius norm of the reconstructed dense matrix."""
        dense = self.dense()
        return float(np.sum(dense * dense))


def cholesky(dense: ArrayLike, jitter: float = 0.0) -> SpdMatrix:
    """Factor ``dense + jitter * I`` with geometric jitter escalation."""
    return SpdMatrix.from_dense(dense, jitter=jitter, escalate=True)


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """A single Gaussian component ``(mean, covariance)``."""

    mean: NDArray[np.float64]
    cov: SpdMatrix

    def __post_init__(self) -> None:
        mean = np.array(self.mean, dtype=float).reshape(-1)
        _require(bool(np.all(np.isfinite(mean))), "mean must be finite")
        _require(mean.shape[0] == self.cov.dim,
                 "mean length must equal covariance dimension")
        object.__setattr__(self, "mean", _locked(mean))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def log_density(x: ArrayLike, comp: GaussianComponent) -> float:
    """Gaussian log-density at a single point, via triangular solves."""
    xv = np.asarray(x, dtype=float).reshape(-1)
    if xv.shape[0] != comp.dim:
        raise ContractError(
            f"point has dimension {xv.shape[0]}, component has {comp.dim}")
    z = comp.cov.whiten(xv - comp.mean)
    return -0.5 * (comp.dim * LOG_2PI + comp.cov.log_det() + float(z @ z))


def log_density_batch(data: ArrayLike, comp: GaussianComponent) -> NDArray[np.float64]:
    """Gaussian log-density for every row of an ``(n, d)`` matrix."""
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[1] != comp.dim:
        raise ContractError(
            f"data must have shape (n, {comp.dim}), got {x.shape}")
    z = comp.cov.whiten((x - comp.mean).T)
    quad = np.sum(z * z, axis=0)
    return -0.5 * (comp.dim * LOG_2PI + comp.cov.log_det() + quad)


def log_sum_exp(values: ArrayLike) -> float:
    """``log(sum(exp(values)))`` via the max-shift identity.

    Exact for a singleton and for all-equal inputs. The shifted
    exponentials are accumulated with :func:`math.fsum`, so the result does
    not depend on the order of the inputs.
    """
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise ContractError("log_sum_exp of an empty vector")
    m = float(np.max(v))
    if not math.isfinite(m):
        return m
    return m + math.log(math.fsum(math.exp(t - m) for t in v.tolist()))


def log_sum_exp_rows(matrix: ArrayLike) -> NDArray[np.float64]:
    """Row-wise ``log(sum(exp(...)))`` for an ``(n, k)`` matrix.

    The shifted exponentials of each row are summed in ascending order, so
    the output is invariant under any permutation of the columns. Rows
    whose maximum is ``-inf`` yield ``-inf``.
    """
    lp = np.asarray(matrix, dtype=float)
    _require(lp.ndim == 2 and lp.shape[1] >= 1, "matrix must be 2-d and nonempty")
    m = lp.max(axis=1)
    out = np.full(lp.shape[0], -np.inf)
    finite = np.isfinite(m)
    if np.any(finite):
        z = np.exp(lp[finite] - m[finite, None])
        z.sort(axis=1)
        out[finite] = m[finite] + np.log(z.sum(axis=1))
    out[np.isposinf(m)] = np.inf
    return out
