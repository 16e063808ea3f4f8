"""Shared oracle helpers for the test suite.

These deliberately avoid the library's own code paths: quadrature
integrates the density formulas directly, and the simple constructions
below build covariances without going through the package's factorization
helpers wherever that matters for independence.
"""

import math

import numpy as np
from scipy import integrate

from tamd import GaussianComponent, MixtureParams, SpdMatrix


def gauss_pdf_1d(x, mean, var):
    return math.exp(-0.5 * (x - mean) ** 2 / var) / math.sqrt(2 * math.pi * var)


def gauss_pdf_2d(x, y, mean, cov):
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    inv = np.array([[cov[1, 1], -cov[0, 1]], [-cov[1, 0], cov[0, 0]]]) / det
    dx = np.array([x - mean[0], y - mean[1]])
    quad = float(dx @ inv @ dx)
    return math.exp(-0.5 * quad) / (2 * math.pi * math.sqrt(det))


def quad_affinity_1d(mean_a, var_a, mean_b, var_b):
    """Numeric integral of sqrt(f_a * f_b) over the real line."""
    sd = math.sqrt(max(var_a, var_b))
    lo = min(mean_a, mean_b) - 15 * sd
    hi = max(mean_a, mean_b) + 15 * sd
    value, _ = integrate.quad(
        lambda x: math.sqrt(gauss_pdf_1d(x, mean_a, var_a)
                            * gauss_pdf_1d(x, mean_b, var_b)),
        lo, hi, epsabs=1e-12, epsrel=1e-10, limit=200)
    return value


def quad_affinity_2d(mean_a, cov_a, mean_b, cov_b):
    """Numeric double integral of sqrt(f_a * f_b)."""
    mean_a = np.asarray(mean_a, float)
    mean_b = np.asarray(mean_b, float)
    cov_a = np.asarray(cov_a, float)
    cov_b = np.asarray(cov_b, float)
    spread = 12.0 * math.sqrt(max(np.max(np.linalg.eigvalsh(cov_a)),
                                  np.max(np.linalg.eigvalsh(cov_b))))
    lo = np.minimum(mean_a, mean_b) - spread
    hi = np.maximum(mean_a, mean_b) + spread
    value, _ = integrate.dblquad(
        lambda y, x: math.sqrt(gauss_pdf_2d(x, y, mean_a, cov_a)
                               * gauss_pdf_2d(x, y, mean_b, cov_b)),
        lo[0], hi[0], lo[1], hi[1], epsabs=1e-9, epsrel=1e-8)
    return value


def random_spd(rng, d, ridge=0.5):
    w = rng.normal(size=(d, d))
    return w @ w.T / d + ridge * np.eye(d)


def component(mean, cov_dense):
    return GaussianComponent(np.asarray(mean, float),
                             SpdMatrix.from_dense(np.asarray(cov_dense, float)))


def random_mixture(rng, d, k, mean_scale=3.0):
    comps = tuple(component(rng.normal(0, mean_scale, size=d),
                            random_spd(rng, d))
                  for _ in range(k))
    raw = rng.random(k) + 0.2
    return MixtureParams(weights=raw / raw.sum(), components=comps)


def permute_mixture(theta, perm):
    return MixtureParams(weights=theta.weights[list(perm)],
                         components=tuple(theta.components[i] for i in perm))
