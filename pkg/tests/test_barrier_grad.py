import math

import numpy as np
import pytest

from tamd import (
    BarrierDomain,
    ContractError,
    GaussianComponent,
    MixtureParams,
    PenaltyConfig,
    SpdMatrix,
    fd_check,
    grad_barrier,
    grad_log_affinity,
    log_hellinger_affinity,
    pair_geometry,
    randomized_check,
)

from helpers import component, permute_mixture, random_mixture, random_spd


def iso(mean, var=1.0):
    mean = np.atleast_1d(np.asarray(mean, float))
    return GaussianComponent(mean, SpdMatrix.identity(mean.size, scale=var))


def fd_log_affinity_mean(a, b, coord, step=1e-6):
    """Independent central-difference oracle on log A."""
    def shifted(sign):
        mean = a.mean.copy()
        mean[coord] += sign * step
        return GaussianComponent(mean, a.cov)
    return (log_hellinger_affinity(shifted(+1), b)
            - log_hellinger_affinity(shifted(-1), b)) / (2 * step)


class TestGradLogAffinity:
    def test_zero_mean_gradient_at_coincident_means(self):
        a = iso([1.0, 2.0], var=1.5)
        b = GaussianComponent([1.0, 2.0],
                              SpdMatrix.from_dense(random_spd(
                                  np.random.default_rng(0), 2)))
        grad = grad_log_affinity(a, b)
        assert np.allclose(grad.wrt_mean, 0.0, atol=1e-15)

    def test_identity_covariances_reduce_to_dyad(self):
        a = iso([0.0, 0.0])
        b = iso([1.5, -0.5])
        grad = grad_log_affinity(a, b)
        delta = a.mean - b.mean
        assert np.allclose(grad.wrt_cov, np.outer(delta, delta) / 16.0,
                           atol=1e-14)

    def test_d1_sign_fixed_by_finite_differences(self):
        a = iso(0.0)
        b = iso(2.0)
        grad = grad_log_affinity(a, b)
        oracle = fd_log_affinity_mean(a, b, 0)
        assert grad.wrt_mean[0] == pytest.approx(0.5, abs=1e-12)
        assert grad.wrt_mean[0] == pytest.approx(oracle, rel=1e-8)

    def test_mean_antisymmetry_with_shared_covariance(self):
        rng = np.random.default_rng(1)
        cov = SpdMatrix.from_dense(random_spd(rng, 3))
        a = GaussianComponent(rng.normal(size=3), cov)
        b = GaussianComponent(rng.normal(size=3), cov)
        ga = grad_log_affinity(a, b).wrt_mean
        gb = grad_log_affinity(b, a).wrt_mean
        assert np.allclose(ga, -gb, atol=1e-14)

    def test_coincident_components_raise(self):
        a = iso([0.0])
        with pytest.raises(BarrierDomain):
            grad_log_affinity(a, iso([0.0]))


class TestPairGeometry:
    def test_fields(self):
        a = iso([0.0, 0.0], var=2.0)
        b = iso([1.0, 0.0], var=4.0)
        geo = pair_geometry(a, b)
        assert np.allclose(geo.m.dense(), 3.0 * np.eye(2), atol=1e-12)
        assert np.allclose(geo.delta, [-1.0, 0.0])
        assert np.allclose(geo.m_inverse_delta, [-1.0 / 3.0, 0.0],
                           atol=1e-12)
        assert geo.affinity == pytest.approx(
            math.exp(log_hellinger_affinity(a, b)), rel=1e-15)


class TestGradBarrier:
    def test_single_component_is_scale_gradient_only(self):
        theta = MixtureParams([1.0], (iso([3.0, 0.0]),))
        cfg = PenaltyConfig(lambda_sc=0.5, alpha=1.0, beta=0.0)
        grad = grad_barrier(theta, 0, cfg)
        assert np.allclose(grad.wrt_mean, 0.5 * np.array([6.0, 0.0]),
                           atol=1e-14)

    def test_far_pair_leaves_scale_term(self):
        theta = MixtureParams([0.5, 0.5],
                              (iso([3.0, 0.0]), iso([300.0, 0.0])))
        cfg = PenaltyConfig(lambda_sc=0.25, alpha=1.0, beta=0.0)
        grad = grad_barrier(theta, 0, cfg)
        assert np.allclose(grad.wrt_mean, 0.25 * np.array([6.0, 0.0]),
                           atol=1e-12)

    def test_matches_finite_differences_random(self):
        rng = np.random.default_rng(2)
        theta = random_mixture(rng, 2, 3)
        cfg = PenaltyConfig(lambda_wt=0.5, lambda_sc=0.2, alpha=0.9, beta=0.4)
        assert fd_check(theta, cfg) < 1e-5

    def test_invariant_to_permuting_others(self):
        rng = np.random.default_rng(3)
        theta = random_mixture(rng, 2, 4)
        cfg = PenaltyConfig(lambda_sc=0.3)
        base = grad_barrier(theta, 0, cfg)
        for perm in ((0, 2, 3, 1), (0, 3, 1, 2), (0, 3, 2, 1)):
            permuted = permute_mixture(theta, perm)
            other = grad_barrier(permuted, 0, cfg)
            assert np.array_equal(base.wrt_mean, other.wrt_mean)
            assert np.array_equal(base.wrt_cov, other.wrt_cov)

    def test_index_out_of_range(self):
        theta = MixtureParams([1.0], (iso([0.0]),))
        with pytest.raises(ContractError):
            grad_barrier(theta, 1, PenaltyConfig())


class TestFdCheck:
    def test_constant_penalty_gives_exact_zero(self):
        theta = MixtureParams([1.0], (iso([0.5, -0.5]),))
        cfg = PenaltyConfig(lambda_wt=1.0, lambda_sc=0.0)
        assert fd_check(theta, cfg) == 0.0

    def test_corrupted_gradient_detected(self):
        rng = np.random.default_rng(4)
        theta = MixtureParams(
            [0.5, 0.5], (iso([0.0, 0.0]), iso([1.0, 0.0])))
        cfg = PenaltyConfig()

        def corrupted(t, k, c):
            grad = grad_barrier(t, k, c)
            from tamd import BarrierGradient
            return BarrierGradient(wrt_mean=1.1 * grad.wrt_mean,
                                   wrt_cov=grad.wrt_cov)

        assert fd_check(theta, cfg, _grad_fn=corrupted) > 0.05

    def test_step_contract(self):
        theta = MixtureParams([0.5, 0.5], (iso(0.0), iso(3.0)))
        with pytest.raises(ContractError):
            fd_check(theta, PenaltyConfig(), step=0.01)

    def test_margin_contract(self):
        near = MixtureParams([0.5, 0.5], (iso(0.0), iso(1e-4)))
        with pytest.raises(ContractError):
            fd_check(near, PenaltyConfig(), step=1e-3)

    def test_step_shrink_retry_near_spd_boundary(self):
        # A small eigenvalue forces the first sweep out of the SPD cone.
        thin = component([0.0, 0.0], np.diag([1.0, 5e-5]))
        far = iso([4.0, 0.0])
        theta = MixtureParams([0.5, 0.5], (thin, far))
        cfg = PenaltyConfig(lambda_sc=0.1)
        assert fd_check(theta, cfg, step=1e-3) < 1e-4


class TestRandomizedCheck:
    def test_small_sweep_passes(self):
        assert randomized_check(12, seed=123) < 1e-5
