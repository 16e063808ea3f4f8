import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from tamd import (
    ContractError,
    DegenerateCovariance,
    GaussianComponent,
    SpdMatrix,
    cholesky,
    log_density,
    log_density_batch,
    log_sum_exp,
    log_sum_exp_rows,
)

from helpers import random_spd


class TestSpdMatrix:
    def test_identity_factorization(self):
        spd = cholesky(np.eye(3))
        assert np.array_equal(spd.lower, np.eye(3))

    def test_hand_cholesky(self):
        spd = cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]))
        expected = np.array([[2.0, 0.0], [1.0, math.sqrt(2.0)]])
        assert np.allclose(spd.lower, expected, atol=1e-12)
        assert np.allclose(spd.dense(), [[4.0, 2.0], [2.0, 3.0]], atol=1e-12)

    def test_pure_jitter_of_zero_matrix(self):
        spd = cholesky(np.zeros((2, 2)), jitter=1e-6)
        assert np.allclose(spd.lower, math.sqrt(1e-6) * np.eye(2), rtol=1e-12)

    def test_not_positive_definite_raises(self):
        with pytest.raises(DegenerateCovariance) as err:
            cholesky(-np.eye(2))
        assert err.value.matrix is not None

    def test_escalation_recovers_slightly_indefinite(self):
        base = np.diag([1.0, 1.0, -1e-9])
        spd = cholesky(base, jitter=0.0)
        assert np.allclose(spd.dense(), np.diag([1.0, 1.0, 0.0]), atol=1e-6)

    def test_no_escalation_fails_fast(self):
        with pytest.raises(DegenerateCovariance):
            SpdMatrix.from_dense(np.diag([1.0, -1e-9]), escalate=False)

    def test_round_trip_relative_error(self):
        rng = np.random.default_rng(0)
        for d in (1, 2, 3, 5, 8):
            for _ in range(20):
                sigma = random_spd(rng, d, ridge=0.1)
                spd = cholesky(sigma)
                err = (np.linalg.norm(spd.dense() - sigma)
                       / np.linalg.norm(sigma))
                assert err < 1e-10

    def test_log_det_matches_slogdet(self):
        rng = np.random.default_rng(1)
        sigma = random_spd(rng, 4)
        spd = cholesky(sigma)
        sign, ref = np.linalg.slogdet(sigma)
        assert sign == 1.0
        assert spd.log_det() == pytest.approx(ref, rel=1e-12)

    def test_solve(self):
        rng = np.random.default_rng(2)
        sigma = random_spd(rng, 3)
        spd = cholesky(sigma)
        rhs = rng.normal(size=3)
        assert np.allclose(sigma @ spd.solve(rhs), rhs, atol=1e-10)

    def test_factor_is_immutable(self):
        spd = cholesky(np.eye(2))
        with pytest.raises(ValueError):
            spd.lower[0, 0] = 5.0

    def test_rejects_nonpositive_diagonal(self):
        with pytest.raises(ContractError):
            SpdMatrix(np.array([[1.0, 0.0], [0.0, -1.0]]))

    def test_rejects_upper_triangle(self):
        with pytest.raises(ContractError):
            SpdMatrix(np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestLogDensity:
    def test_standard_normal_at_origin(self):
        comp = GaussianComponent([0.0], SpdMatrix.identity(1))
        assert log_density([0.0], comp) == pytest.approx(-0.9189385332046727,
                                                         abs=1e-12)

    def test_at_mean_d2(self):
        comp = GaussianComponent([3.0, -1.0], SpdMatrix.identity(2))
        assert log_density([3.0, -1.0], comp) == pytest.approx(
            -math.log(2 * math.pi), abs=1e-12)

    def test_scalar_variance_four(self):
        # Direct scalar normal formula as the oracle.
        oracle = -0.5 * math.log(2 * math.pi * 4.0) - (1.0 - 0.0) ** 2 / 8.0
        comp = GaussianComponent([0.0], SpdMatrix.identity(1, scale=4.0))
        value = log_density([1.0], comp)
        assert value == pytest.approx(oracle, abs=1e-12)
        assert value == pytest.approx(-1.737086, abs=1e-6)

    def test_dimension_mismatch(self):
        comp = GaussianComponent([0.0, 0.0], SpdMatrix.identity(2))
        with pytest.raises(ContractError):
            log_density([0.0], comp)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(3)
        comp = GaussianComponent(rng.normal(size=3),
                                 cholesky(random_spd(rng, 3)))
        data = rng.normal(size=(7, 3))
        batch = log_density_batch(data, comp)
        singles = np.array([log_density(row, comp) for row in data])
        assert np.allclose(batch, singles, rtol=1e-13, atol=1e-13)

    def test_integrates_to_one_1d(self):
        comp = GaussianComponent([0.7], SpdMatrix.identity(1, scale=2.5))
        total, _ = integrate.quad(
            lambda x: math.exp(log_density([x], comp)), -40, 40,
            epsabs=1e-10)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_integrates_to_one_2d(self):
        comp = GaussianComponent(
            [0.5, -0.25],
            cholesky(np.array([[1.4, 0.3], [0.3, 0.8]])))
        total, _ = integrate.dblquad(
            lambda y, x: math.exp(log_density([x, y], comp)),
            -12, 12, -12, 12, epsabs=1e-9)
        assert total == pytest.approx(1.0, abs=1e-6)


class TestLogSumExp:
    def test_two_equal_terms(self):
        assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2.0),
                                                        abs=1e-15)

    def test_extreme_shift(self):
        # Extended-precision oracle via the max-shift identity itself:
        # log(2 e^-1000) = -1000 + log 2 exactly in exact arithmetic.
        assert log_sum_exp([-1000.0, -1000.0]) == pytest.approx(
            -1000.0 + math.log(2.0), abs=1e-12)

    def test_singleton_identity(self):
        assert log_sum_exp([5.0]) == 5.0

    def test_empty_raises(self):
        with pytest.raises(ContractError):
            log_sum_exp([])

    def test_all_neg_inf(self):
        assert log_sum_exp([-math.inf, -math.inf]) == -math.inf

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=8),
           st.floats(-100, 100))
    @settings(max_examples=200, deadline=None)
    def test_shift_identity(self, values, c):
        lhs = log_sum_exp([v + c for v in values])
        rhs = log_sum_exp(values) + c
        assert lhs == pytest.approx(rhs, abs=1e-12)

    @given(st.lists(st.floats(-30, 30), min_size=2, max_size=6),
           st.randoms())
    @settings(max_examples=100, deadline=None)
    def test_order_independence(self, values, rnd):
        shuffled = list(values)
        rnd.shuffle(shuffled)
        assert log_sum_exp(values) == log_sum_exp(shuffled)

    def test_rows_match_scalar(self):
        rng = np.random.default_rng(4)
        matrix = rng.normal(size=(40, 3)) * 50
        rows = log_sum_exp_rows(matrix)
        singles = np.array([log_sum_exp(row) for row in matrix])
        assert np.allclose(rows, singles, rtol=1e-13, atol=1e-13)

    def test_rows_column_permutation_exact(self):
        rng = np.random.default_rng(5)
        matrix = rng.normal(size=(25, 4)) * 10
        base = log_sum_exp_rows(matrix)
        for perm in ((1, 0, 3, 2), (3, 2, 1, 0), (2, 0, 3, 1)):
            assert np.array_equal(base, log_sum_exp_rows(matrix[:, perm]))

    def test_rows_with_neg_inf_row(self):
        matrix = np.array([[0.0, 1.0], [-math.inf, -math.inf]])
        rows = log_sum_exp_rows(matrix)
        assert rows[1] == -math.inf
        assert rows[0] == pytest.approx(log_sum_exp([0.0, 1.0]))
