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
    hellinger_affinity,
    mean_log_likelihood,
    objective,
    penalty,
    penalty_terms,
    separation,
)

from helpers import (
    component,
    permute_mixture,
    quad_affinity_1d,
    quad_affinity_2d,
    random_mixture,
)


def iso(mean, var=1.0):
    mean = np.atleast_1d(np.asarray(mean, float))
    return GaussianComponent(mean, SpdMatrix.identity(mean.size, scale=var))


class TestHellingerAffinity:
    def test_identical_components(self):
        comp = iso([0.3, -0.4])
        assert hellinger_affinity(comp, comp) == 1.0

    def test_mean_shift_closed_form_and_quadrature(self):
        a = iso([0.0, 0.0])
        b = iso([2.0, 0.0])
        value = hellinger_affinity(a, b)
        assert value == pytest.approx(math.exp(-0.5), abs=1e-12)
        oracle = quad_affinity_2d([0.0, 0.0], np.eye(2), [2.0, 0.0], np.eye(2))
        assert value == pytest.approx(oracle, abs=1e-6)

    def test_variance_ratio_closed_form_and_quadrature(self):
        a = iso(0.0, var=1.0)
        b = iso(0.0, var=4.0)
        value = hellinger_affinity(a, b)
        assert value == pytest.approx(math.sqrt(2.0) / math.sqrt(2.5),
                                      abs=1e-12)
        assert value == pytest.approx(quad_affinity_1d(0.0, 1.0, 0.0, 4.0),
                                      abs=1e-6)

    def test_random_cases_match_quadrature_1d(self):
        rng = np.random.default_rng(10)
        for _ in range(8):
            ma, mb = rng.normal(0, 2, size=2)
            va, vb = rng.uniform(0.4, 3.0, size=2)
            value = hellinger_affinity(iso(ma, va), iso(mb, vb))
            assert value == pytest.approx(quad_affinity_1d(ma, va, mb, vb),
                                          abs=1e-6)

    def test_symmetry(self):
        rng = np.random.default_rng(11)
        theta = random_mixture(rng, 3, 2)
        a, b = theta.components
        assert hellinger_affinity(a, b) == pytest.approx(
            hellinger_affinity(b, a), abs=1e-12)

    def test_affine_invariance(self):
        rng = np.random.default_rng(12)
        for d in (1, 2, 3):
            theta = random_mixture(rng, d, 2)
            a, b = theta.components
            base = hellinger_affinity(a, b)
            transform = np.eye(d) + 0.3 * rng.normal(size=(d, d))
            shift = rng.normal(size=d)
            mapped = []
            for c in (a, b):
                mean = transform @ c.mean + shift
                cov = transform @ c.cov.dense() @ transform.T
                mapped.append(component(mean, cov))
            assert hellinger_affinity(*mapped) == pytest.approx(base,
                                                                abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            hellinger_affinity(iso([0.0]), iso([0.0, 0.0]))


class TestSeparation:
    def test_identical_pair_is_zero(self):
        comp = iso([1.0, 1.0])
        theta = MixtureParams([0.5, 0.5], (comp, iso([1.0, 1.0])))
        assert separation(theta) == 0.0

    def test_is_min_over_pairs(self):
        comps = (iso(0.0), iso(0.9), iso(4.0))
        theta = MixtureParams(np.full(3, 1 / 3), comps)
        gaps = [1.0 - hellinger_affinity(comps[i], comps[j])
                for i in range(3) for j in range(i + 1, 3)]
        assert separation(theta) == pytest.approx(min(gaps), abs=1e-15)

    def test_far_apart_saturates(self):
        theta = MixtureParams([0.5, 0.5], (iso(-10.0), iso(10.0)))
        assert separation(theta) == pytest.approx(1.0, abs=1e-12)

    def test_single_component_convention(self):
        theta = MixtureParams([1.0], (iso([0.0]),))
        assert separation(theta) == 1.0


class TestPenalty:
    def test_single_component_no_terms(self):
        theta = MixtureParams([1.0], (iso([0.0]),))
        cfg = PenaltyConfig(lambda_wt=0.0, lambda_sc=0.0)
        assert penalty(theta, cfg) == 0.0

    def test_pair_barrier_value(self):
        # Choose the mean gap so the affinity equals 1 - 1/e, making the
        # barrier term exactly 1.
        gap = math.sqrt(-8.0 * math.log(1.0 - math.exp(-1.0)))
        theta = MixtureParams([0.5, 0.5], (iso(0.0), iso(gap)))
        cfg = PenaltyConfig(lambda_wt=0.0, lambda_sc=0.0)
        assert penalty(theta, cfg) == pytest.approx(1.0, abs=1e-12)

    def test_weight_barrier_value(self):
        theta = MixtureParams([0.5, 0.5], (iso(-40.0), iso(40.0)))
        cfg = PenaltyConfig(lambda_wt=1.0, lambda_sc=0.0)
        # Direct summation oracle: -2 log(1/2); the separation term is
        # exp(-400) away from zero.
        assert penalty(theta, cfg) == pytest.approx(2.0 * math.log(2.0),
                                                    abs=1e-9)

    def test_terms_structure(self):
        rng = np.random.default_rng(13)
        theta = random_mixture(rng, 2, 3)
        cfg = PenaltyConfig(lambda_wt=0.7, lambda_sc=0.3, alpha=0.5, beta=2.0)
        terms = penalty_terms(theta, cfg)
        wt_direct = -sum(math.log(w) for w in theta.weights)
        sc_direct = sum(0.5 * float(c.mean @ c.mean)
                        + 2.0 * float(np.sum(c.cov.dense() ** 2))
                        for c in theta.components)
        assert terms.weight == pytest.approx(0.7 * wt_direct, rel=1e-12)
        assert terms.scale == pytest.approx(0.3 * sc_direct, rel=1e-12)
        assert terms.total == pytest.approx(
            terms.separation + terms.weight + terms.scale, rel=1e-15)
        assert penalty(theta, cfg) == terms.total

    def test_identical_components_diverge(self):
        comp = iso([0.0, 0.0])
        theta = MixtureParams([0.5, 0.5], (comp, iso([0.0, 0.0])))
        with pytest.raises(BarrierDomain):
            penalty(theta, PenaltyConfig())

    def test_permutation_invariance_exact(self):
        rng = np.random.default_rng(14)
        cfg = PenaltyConfig(lambda_wt=0.9, lambda_sc=0.4, alpha=1.1, beta=0.7)
        for _ in range(5):
            theta = random_mixture(rng, 2, 4)
            base = penalty(theta, cfg)
            for _ in range(4):
                perm = rng.permutation(4)
                assert penalty(permute_mixture(theta, perm), cfg) == base

    def test_coercive_under_mean_coalescence(self):
        cfg = PenaltyConfig(lambda_wt=0.0, lambda_sc=0.0)
        values = []
        for t in np.linspace(0.0, 0.999999, 30):
            theta = MixtureParams([0.5, 0.5],
                                  (iso([0.0, 0.0]), iso([2.0 * (1 - t), 0.0])))
            values.append(penalty(theta, cfg))
        assert all(b > a for a, b in zip(values, values[1:]))
        assert values[-1] > 10.0

    def test_coercive_under_weight_vanishing(self):
        cfg = PenaltyConfig(lambda_wt=1.0, lambda_sc=0.0)
        comps = (iso(-40.0), iso(40.0))
        values = []
        for t in np.linspace(0.0, 1.0, 25):
            w = math.exp(-30.0 * t) / 3.0
            theta = MixtureParams([w, 1.0 - w], comps)
            values.append(penalty(theta, cfg))
        assert all(b > a for a, b in zip(values, values[1:]))
        assert values[-1] > 10.0


class TestObjective:
    def test_zero_lambda_is_mean_loglik(self):
        rng = np.random.default_rng(15)
        theta = random_mixture(rng, 2, 2)
        data = rng.normal(size=(40, 2))
        cfg = PenaltyConfig(lambda_n=0.0)
        assert objective(data, theta, cfg) == mean_log_likelihood(data, theta)

    def test_single_point_at_mean(self):
        theta = MixtureParams([1.0], (iso([0.0]),))
        cfg = PenaltyConfig(lambda_n=0.0)
        assert objective(np.array([[0.0]]), theta, cfg) == pytest.approx(
            -0.9189385332046727, abs=1e-12)

    def test_linear_in_lambda(self):
        rng = np.random.default_rng(16)
        theta = random_mixture(rng, 2, 3)
        data = rng.normal(size=(30, 2))
        cfg0 = PenaltyConfig(lambda_n=0.0, lambda_wt=0.5, lambda_sc=0.1)
        cfg1 = PenaltyConfig(lambda_n=0.2, lambda_wt=0.5, lambda_sc=0.1)
        base = objective(data, theta, cfg0)
        assert objective(data, theta, cfg1) == base - 0.2 * penalty(theta, cfg1)

    def test_permutation_invariance_exact(self):
        rng = np.random.default_rng(17)
        theta = random_mixture(rng, 3, 3)
        data = rng.normal(size=(25, 3))
        cfg = PenaltyConfig(lambda_n=0.15, lambda_wt=1.0, lambda_sc=0.2)
        base = objective(data, theta, cfg)
        for perm in ((2, 0, 1), (1, 2, 0), (2, 1, 0)):
            assert objective(data, permute_mixture(theta, perm), cfg) == base


class TestMixtureParams:
    def test_rejects_zero_weight(self):
        with pytest.raises(ContractError):
            MixtureParams([0.0, 1.0], (iso(0.0), iso(1.0)))

    def test_rejects_bad_sum(self):
        with pytest.raises(ContractError):
            MixtureParams([0.6, 0.6], (iso(0.0), iso(1.0)))

    def test_rejects_mixed_dims(self):
        with pytest.raises(ContractError):
            MixtureParams([0.5, 0.5], (iso([0.0]), iso([0.0, 0.0])))
