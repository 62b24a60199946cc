"""Indian Buffet Process prior: simulation, mass function, odds."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from issfa.ibp import (
    BinaryFeatureMatrix,
    beta_move_log_likelihood_ratio,
    harmonic,
    log_pmf,
    sample_ibp,
    shared_prior_odds,
)

from oracles import harmonic_direct, ibp_beta_ratio_direct, lof_class_matrix_t2


class TestHarmonic:
    def test_beta_one_is_harmonic_number(self):
        assert harmonic(1.0, 3) == pytest.approx(11 / 6)

    def test_single_row(self):
        for beta in (0.1, 1.0, 7.5):
            assert harmonic(beta, 1) == pytest.approx(1.0)

    def test_beta_two_t_four(self):
        assert harmonic(2.0, 4) == pytest.approx(77 / 30)

    def test_increasing_in_t(self):
        vals = [harmonic(2.5, t) for t in range(1, 30)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    @given(st.floats(0.05, 50), st.integers(1, 200))
    @settings(max_examples=50, deadline=None)
    def test_matches_direct_sum(self, beta, t):
        assert harmonic(beta, t) == pytest.approx(harmonic_direct(beta, t), rel=1e-12)

    def test_rejects_bad_beta(self):
        with pytest.raises(ValueError):
            harmonic(0.0, 5)


class TestSharedPriorOdds:
    def test_zero_count(self):
        assert shared_prior_odds(0, 1.0, 10) == 0.0

    def test_universal_feature(self):
        t = 12
        assert shared_prior_odds(t - 1, 1.0, t) == pytest.approx(t - 1)

    def test_known_value(self):
        assert shared_prior_odds(3, 2.0, 10) == pytest.approx(3 / 8)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            shared_prior_odds(10, 1.0, 10)
        with pytest.raises(ValueError):
            shared_prior_odds(-1, 1.0, 10)


class TestBinaryFeatureMatrix:
    def test_counts_consistent(self):
        z = BinaryFeatureMatrix(np.array([[1, 0], [1, 1]], dtype=np.uint8))
        np.testing.assert_array_equal(z.column_counts, [2, 1])

    def test_rejects_zero_column(self):
        with pytest.raises(ValueError):
            BinaryFeatureMatrix(np.array([[1, 0], [1, 0]], dtype=np.uint8))

    def test_rejects_nonbinary(self):
        with pytest.raises(ValueError):
            BinaryFeatureMatrix(np.array([[2]], dtype=np.uint8))


class TestSampleIbp:
    def test_first_customer_poisson(self):
        rng = np.random.default_rng(0)
        counts = [sample_ibp(1.5, 3.0, 1, rng).n_cols for _ in range(20_000)]
        mean = np.mean(counts)
        se = np.std(counts) / np.sqrt(len(counts))
        assert abs(mean - 1.5) < 3 * se

    def test_mean_kplus_alpha_harmonic(self):
        rng = np.random.default_rng(1)
        alpha, beta, t = 2.0, 1.0, 50
        n = 20_000
        counts = np.array([sample_ibp(alpha, beta, t, rng).n_cols for _ in range(n)])
        target = alpha * harmonic(beta, t)
        assert target == pytest.approx(2 * 4.4992, abs=0.01)
        se = counts.std() / np.sqrt(n)
        assert abs(counts.mean() - target) < 3 * se

    def test_no_zero_columns(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            z = sample_ibp(1.0, 2.0, 8, rng)
            assert np.all(z.column_counts >= 1)

    def test_small_alpha_mostly_empty(self):
        rng = np.random.default_rng(3)
        empties = sum(sample_ibp(1e-3, 1.0, 20, rng).n_cols == 0 for _ in range(2000))
        assert empties > 1900


class TestLogPmf:
    def test_empty_matrix(self):
        z = BinaryFeatureMatrix(np.zeros((5, 0), dtype=np.uint8))
        alpha, beta = 1.7, 2.3
        assert log_pmf(z, alpha, beta) == pytest.approx(-alpha * harmonic(beta, 5))

    def test_row_permutation_invariant(self):
        rng = np.random.default_rng(4)
        z = sample_ibp(2.0, 1.5, 10, rng)
        perm = rng.permutation(10)
        a = log_pmf(z, 2.0, 1.5)
        b = log_pmf(BinaryFeatureMatrix(z.entries[perm]), 2.0, 1.5)
        assert a == pytest.approx(b, abs=1e-10)

    @pytest.mark.parametrize("alpha,beta", [(1.0, 1.0), (0.8, 2.5), (2.0, 0.5)])
    def test_enumeration_sums_to_one_t2(self, alpha, beta):
        cap = 30
        total = 0.0
        for n10 in range(cap):
            for n01 in range(cap):
                for n11 in range(cap):
                    z = lof_class_matrix_t2(n10, n01, n11)
                    total += np.exp(log_pmf(z, alpha, beta))
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_beta_difference_matches_ratio(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            z = sample_ibp(2.0, 1.0, 12, rng)
            if z.n_cols == 0:
                continue
            alpha = 1.3
            diff = log_pmf(z, alpha, 2.0) - log_pmf(z, alpha, 1.0)
            direct = ibp_beta_ratio_direct(z.column_counts, 12, alpha, 2.0, 1.0)
            assert diff == pytest.approx(direct, abs=1e-8)
            lib = beta_move_log_likelihood_ratio(z.column_counts, 12, alpha, 2.0, 1.0)
            assert lib == pytest.approx(direct, abs=1e-10)

    def test_alpha_difference_gamma_kernel(self):
        # the alpha-varying part of the pmf is K+ ln(alpha) - alpha H_T(beta),
        # matching the Gamma-posterior kernel used by the alpha update
        rng = np.random.default_rng(6)
        z = sample_ibp(2.0, 1.0, 9, rng)
        beta = 1.0
        a1, a2 = 0.7, 2.9
        diff = log_pmf(z, a2, beta) - log_pmf(z, a1, beta)
        expected = z.n_cols * np.log(a2 / a1) - (a2 - a1) * harmonic(beta, 9)
        assert diff == pytest.approx(expected, abs=1e-10)


class TestBetaMoveRatio:
    def test_identity_move_is_zero(self):
        assert beta_move_log_likelihood_ratio(np.array([3, 1]), 6, 1.0, 2.0, 2.0) == 0.0

    def test_empty_matrix_harmonic_only(self):
        alpha, b_old, b_new, t = 1.4, 1.0, 3.0, 7
        got = beta_move_log_likelihood_ratio(np.zeros(0, dtype=int), t, alpha, b_new, b_old)
        assert got == pytest.approx(alpha * (harmonic(b_old, t) - harmonic(b_new, t)))
