"""Reference estimators and the dispersion statistic."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import chi2

from plaus_means import baselines
from plaus_means._validation import InvalidParameterError
from plaus_means.datasets import sat_coaching


class TestMle:
    def test_identity(self):
        assert_allclose(baselines.mle([1.0, 2.0, 3.0]).values, [1, 2, 3])

    def test_returns_copy(self):
        x = np.array([1.0, 2.0])
        est = baselines.mle(x)
        est.values[0] = 99.0
        assert x[0] == 1.0

    def test_empty_rejected(self):
        with pytest.raises(InvalidParameterError):
            baselines.mle([])


class TestJamesStein:
    def test_hand_arithmetic(self):
        est = baselines.james_stein([1.0, 1.0, 1.0, 1.0])
        assert_allclose(est.values, [0.5, 0.5, 0.5, 0.5])

    def test_negative_factor_vs_clamped(self):
        x = np.array([0.1, 0.1, 0.1, 0.1, 0.1])  # sum sq = 0.05 << n-2
        plain = baselines.james_stein(x)
        positive = baselines.james_stein_positive_part(x)
        assert plain.values[0] < 0  # factor went negative
        assert_allclose(positive.values, np.zeros(5))

    def test_size_requirement(self):
        with pytest.raises(InvalidParameterError):
            baselines.james_stein([1.0, 2.0])

    def test_zero_vector_guard(self):
        assert_allclose(baselines.james_stein([0.0, 0.0, 0.0]).values, [0, 0, 0])

    def test_linearity_given_factor(self, rng):
        # with the data-dependent factor frozen, the map is linear
        x = rng.normal(size=6)
        factor = 1 - 4 / np.sum(x * x)
        assert_allclose(baselines.james_stein(x).values, factor * x, rtol=1e-12)

    def test_positive_part_dominates_plain(self):
        rng = np.random.default_rng(88)
        diffs = []
        for _ in range(500):
            theta = rng.normal(0, 0.1, 10)
            x = theta + rng.standard_normal(10)
            plain = np.mean((baselines.james_stein(x).values - theta) ** 2)
            plus = np.mean((baselines.james_stein_positive_part(x).values - theta) ** 2)
            diffs.append(plain - plus)
        diffs = np.asarray(diffs)
        se = diffs.std(ddof=1) / np.sqrt(diffs.size)
        assert diffs.mean() >= 3 * se  # strictly better, paired comparison


class TestEfronMorris:
    def test_constant_input(self):
        est = baselines.efron_morris([2.0, 2.0, 2.0, 2.0])
        assert_allclose(est.values, [2, 2, 2, 2])

    def test_formula_recomputation(self, rng):
        x = rng.normal(size=5) * 2
        xbar = x.mean()
        s = np.sum((x - xbar) ** 2)
        expected = xbar + (1 - 2 / s) * (x - xbar)
        assert_allclose(baselines.efron_morris(x).values, expected, rtol=1e-12)

    def test_size_requirement(self):
        with pytest.raises(InvalidParameterError):
            baselines.efron_morris([1.0, 2.0, 3.0])

    def test_overshrinks_scaled_school_effects(self):
        # the scaled eight-school effects have small dispersion, so the
        # shrinkage factor collapses well below one (in fact negative)
        x = sat_coaching().x
        factor = baselines.efron_morris_factor(x)
        assert factor < 0.2


class TestMeanRemovedStatistic:
    def test_constant_vector(self):
        assert baselines.mean_removed_statistic([3.0, 3.0]) == 0.0

    def test_shift_invariance(self, rng):
        x = rng.normal(size=9)
        s0 = baselines.mean_removed_statistic(x)
        s1 = baselines.mean_removed_statistic(x + 123.456)
        assert abs(s0 - s1) < 1e-10

    def test_school_data_value(self):
        assert abs(baselines.mean_removed_statistic(sat_coaching().x) - 4.2899) <= 1e-3

    def test_needs_two_points(self):
        with pytest.raises(InvalidParameterError):
            baselines.mean_removed_statistic([1.0])


class TestChiSquareCdf:
    def test_against_scipy(self, rng):
        for df in (1, 3, 7, 12):
            for x in rng.uniform(0, 30, size=10):
                assert_allclose(
                    baselines.chi_square_cdf(float(x), df), chi2.cdf(x, df), rtol=1e-10
                )

    def test_school_data_value(self):
        s_sq = baselines.mean_removed_statistic(sat_coaching().x)
        assert abs(baselines.chi_square_cdf(s_sq, 7) - 0.2542) <= 5e-4

    def test_negative_argument(self):
        assert baselines.chi_square_cdf(-1.0, 3) == 0.0
