"""Scenario generators and the replication engine."""

import os

import numpy as np
import pytest
from numpy.testing import assert_allclose

from plaus_means.simulate import (
    Scenario,
    generate_replicate,
    run_coverage_study,
    run_mse_study,
)
from plaus_means._validation import InvalidParameterError


class TestGenerate:
    def test_single_mode_moments(self):
        rng = np.random.default_rng(0)
        theta, _ = generate_replicate(Scenario("single_mode", 10_000), rng)
        var = theta.var()
        se = 0.01 * np.sqrt(2 / 10_000)  # variance of a variance estimate
        assert abs(var - 0.01) <= 4 * se

    def test_outlier_zero_fraction(self):
        rng = np.random.default_rng(1)
        theta, _ = generate_replicate(Scenario("outlier", 10_000), rng)
        frac = np.mean(theta == 0.0)
        se = np.sqrt(0.9 * 0.1 / 10_000)
        assert abs(frac - 0.9) <= 3 * se

    def test_two_mode_centers(self):
        rng = np.random.default_rng(2)
        theta, _ = generate_replicate(Scenario("two_mode", 10_000), rng)
        assert abs(np.mean(theta > 0) - 0.5) <= 3 * np.sqrt(0.25 / 10_000)
        assert abs(np.mean(np.abs(theta)) - 2.0) < 0.05

    def test_noise_is_standard_normal(self):
        rng = np.random.default_rng(3)
        theta, x = generate_replicate(Scenario("single_mode", 20_000), rng)
        z = x - theta
        assert abs(z.mean()) < 0.025
        assert abs(z.std() - 1.0) < 0.02

    def test_deterministic_given_seed(self):
        t1, x1 = generate_replicate(Scenario("two_mode", 50), np.random.default_rng(9))
        t2, x2 = generate_replicate(Scenario("two_mode", 50), np.random.default_rng(9))
        assert np.array_equal(t1, t2)
        assert np.array_equal(x1, x2)

    def test_unknown_scenario_rejected(self):
        with pytest.raises(InvalidParameterError):
            Scenario("three_mode", 5)


class TestMseStudy:
    def test_mle_near_unit_mse(self):
        report = run_mse_study(
            Scenario("single_mode", 20), methods=("mle",), M=200, rng_seed=4
        )
        assert abs(report.mse["mle"].mean - 1.0) < 0.08
        assert report.mse["mle"].failures == 0
        assert not report.exclusion_flagged

    def test_reproducible_payload(self):
        kwargs = dict(
            scenario=Scenario("single_mode", 8),
            methods=("mle", "james_stein", "efron_morris"),
            M=20,
            rng_seed=11,
        )
        r1 = run_mse_study(**kwargs)
        r2 = run_mse_study(**kwargs)
        for m in kwargs["methods"]:
            assert r1.mse[m].mean == r2.mse[m].mean
            assert r1.mse[m].se == r2.mse[m].se

    def test_parallel_matches_serial(self):
        kwargs = dict(
            scenario=Scenario("two_mode", 10),
            methods=("mle", "james_stein"),
            M=12,
            rng_seed=5,
        )
        serial = run_mse_study(**kwargs)
        os.environ["PLAUS_MEANS_THREADS"] = "2"
        try:
            parallel = run_mse_study(**kwargs)
        finally:
            os.environ.pop("PLAUS_MEANS_THREADS")
        for m in kwargs["methods"]:
            assert serial.mse[m].mean == parallel.mse[m].mean

    def test_report_round_trip(self):
        report = run_mse_study(Scenario("outlier", 6), methods=("mle",), M=5, rng_seed=0)
        payload = report.to_dict()
        assert payload["study"] == "mse"
        assert payload["mse"]["mle"]["failures"] == 0
        assert payload["config"]["methods"] == ["mle"]


class TestCoverageStudy:
    def test_levels_nest(self):
        report = run_coverage_study(
            Scenario("single_mode", 3),
            levels=("MPE", "50", "95"),
            M=4,
            K=15,
            rng_seed=3,
            mc_samples=20_000,
        )
        c_mpe = report.coverage["MPE"]
        c_50 = report.coverage["50"]
        c_95 = report.coverage["95"]
        assert c_mpe.mean_length <= c_50.mean_length <= c_95.mean_length
        assert c_mpe.coverage_percent <= c_50.coverage_percent + 1e-9
        assert c_50.coverage_percent <= c_95.coverage_percent + 1e-9

    def test_unreachable_level_rejected(self):
        with pytest.raises(InvalidParameterError):
            run_coverage_study(Scenario("single_mode", 3), levels=("bogus",), M=2)

    def test_deterministic(self):
        kwargs = dict(
            scenario=Scenario("single_mode", 3),
            levels=("95",),
            M=3,
            K=12,
            rng_seed=8,
            mc_samples=10_000,
        )
        r1 = run_coverage_study(**kwargs)
        r2 = run_coverage_study(**kwargs)
        assert r1.coverage["95"].coverage_percent == r2.coverage["95"].coverage_percent
        assert r1.coverage["95"].mean_length == r2.coverage["95"].mean_length
