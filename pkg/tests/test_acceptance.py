"""End-to-end acceptance gates against the published benchmark tables.

Every gate runs at its stated tolerance and prints a PASS/FAIL line.  Heavy
replication studies are shared through module-scoped fixtures; all seeds are
fixed, so reruns reproduce these numbers exactly.

Two benchmark rows are asserted exactly as published even though the
estimators defined here cannot reproduce them (see the assertion messages):
the suite keeps them red rather than silently retargeting.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

import plaus_means.classic as cl
import plaus_means.deconv as dc
from plaus_means import baselines
from plaus_means.optimize import OptimizerConfig, minimize_on_simplex, project_to_simplex
from plaus_means.score import (
    boundary,
    boundary_gradient,
    boundary_quantile,
    make_boundary_spec,
    sample_boundary_values,
)
from plaus_means.simulate import Scenario, run_coverage_study, run_mse_study

from conftest import central_difference_gradient, relative_error

SEED = 0


def report(label: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")


# -- shared studies ----------------------------------------------------------


@pytest.fixture(scope="module")
def baseline_reports():
    methods = ("mle", "james_stein", "james_stein_positive_part", "efron_morris")
    return {
        n: run_mse_study(Scenario("single_mode", n), methods=methods, M=200, rng_seed=SEED)
        for n in (10, 20, 50)
    }


@pytest.fixture(scope="module")
def eb_reports():
    cases = (("single_mode", 10), ("two_mode", 20), ("outlier", 20))
    return {
        (scen, n): run_mse_study(Scenario(scen, n), methods=("eb_im",), M=50, K=200, rng_seed=SEED)
        for scen, n in cases
    }


@pytest.fixture(scope="module")
def classic_reports():
    cases = (("two_mode", 20), ("outlier", 50))
    return {
        (scen, n): run_mse_study(
            Scenario(scen, n), methods=("classic_im", "james_stein"), M=50, rng_seed=SEED
        )
        for scen, n in cases
    }


@pytest.fixture(scope="module")
def coverage_report():
    return run_coverage_study(
        Scenario("single_mode", 10), levels=("95",), M=50, K=200, rng_seed=SEED
    )


# -- criterion 1: baseline MSE ------------------------------------------------


@pytest.mark.parametrize("n", [10, 20, 50])
def test_baseline_mle_mse(baseline_reports, n):
    got = baseline_reports[n].mse["mle"].mean
    ok = abs(got - 1.0) <= 0.08
    report(f"baseline MLE MSE n={n}", ok, f"measured {got:.4f}, target 1.0 +- 0.08")
    assert ok


@pytest.mark.parametrize("n,target", [(10, 0.300), (20, 0.167), (50, 0.066)])
def test_baseline_james_stein_mse(baseline_reports, n, target):
    got = baseline_reports[n].mse["james_stein"].mean
    em = baseline_reports[n].mse["efron_morris"].mean
    ok = abs(got - target) <= 0.04
    report(
        f"baseline plain James-Stein MSE n={n}",
        ok,
        f"measured {got:.4f}, target {target} +- 0.04 "
        f"(mean-shrinkage variant measures {em:.4f})",
    )
    assert ok, (
        f"plain shrink-toward-zero James-Stein has risk about 2/n at this scenario "
        f"(measured {got:.4f}); the published benchmark value {target} matches the "
        f"shrink-toward-mean variant instead (measured {em:.4f}).  Asserted as "
        f"published; see the decisions log shipped with the review notes."
    )


# -- criterion 2: deconvolution-based point estimation ------------------------


@pytest.mark.parametrize(
    "scen,n,target,tol",
    [("single_mode", 10, 0.219, 0.06), ("two_mode", 20, 0.581, 0.10), ("outlier", 20, 0.370, 0.08)],
)
def test_eb_point_estimate_mse(eb_reports, scen, n, target, tol):
    row = eb_reports[(scen, n)].mse["eb_im"]
    ok = abs(row.mean - target) <= tol
    report(
        f"EB-kind MSE {scen} n={n}",
        ok,
        f"measured {row.mean:.4f} (se {row.se:.4f}), target {target} +- {tol}",
    )
    assert row.failures == 0
    assert ok, (
        f"exact optimization of the top-region extremes gives {row.mean:.4f}; the "
        f"published value {target} reflects looser general-purpose solves of the "
        f"same program.  Asserted as published."
    )


# -- criterion 3: collection-based point estimation ----------------------------


@pytest.mark.parametrize(
    "scen,n,target,tol", [("two_mode", 20, 0.557, 0.10), ("outlier", 50, 0.317, 0.08)]
)
def test_classic_point_estimate_mse(classic_reports, scen, n, target, tol):
    row = classic_reports[(scen, n)].mse["classic_im"]
    ok = abs(row.mean - target) <= tol
    report(
        f"classic-kind MSE {scen} n={n}",
        ok,
        f"measured {row.mean:.4f} (se {row.se:.4f}), target {target} +- {tol}",
    )
    assert row.failures == 0
    assert ok


def test_classic_beats_plain_james_stein(classic_reports):
    rep = classic_reports[("two_mode", 20)]
    classic = rep.mse["classic_im"]
    js = rep.mse["james_stein"]
    margin = js.mean - classic.mean
    se = math.hypot(js.se, classic.se)
    ok = margin >= 3 * se
    report(
        "classic-kind beats plain James-Stein (two_mode n=20)",
        ok,
        f"classic {classic.mean:.4f} vs JS {js.mean:.4f}, margin {margin:.4f} >= 3*SE {3*se:.4f}",
    )
    assert ok


# -- criterion 4: interval coverage --------------------------------------------


def test_coverage_conservative(coverage_report):
    cov = coverage_report.coverage["95"].coverage_percent
    ok = cov >= 95.0 and 97.0 <= cov <= 100.0
    report(
        "coverage at nominal 95% (single_mode n=10)",
        ok,
        f"measured {cov:.2f}%, required >= 95 and within [97, 100]",
    )
    assert ok


def test_coverage_mean_length(coverage_report):
    length = coverage_report.coverage["95"].mean_length
    ok = abs(length - 3.19) <= 0.5
    report(
        "interval mean length at nominal 95%",
        ok,
        f"measured {length:.3f}, target 3.19 +- 0.5",
    )
    assert ok, (
        f"exact optimization over the quantile region yields mean length "
        f"{length:.3f}; the published 3.19 reflects the partial exploration of "
        f"the same region by stochastic/local solvers.  Asserted as published."
    )


# -- criterion 5: real data -----------------------------------------------------


def test_real_data_exact_statistics():
    from plaus_means.datasets import sat_coaching

    x = sat_coaching().x
    s_sq = baselines.mean_removed_statistic(x)
    cdf = baselines.chi_square_cdf(s_sq, df=7)
    ok1 = abs(s_sq - 4.2899) <= 1e-3
    ok2 = abs(cdf - 0.2542) <= 5e-4
    report("real-data dispersion statistic", ok1, f"measured {s_sq:.4f}, target 4.2899 +- 1e-3")
    report("real-data chi-square CDF", ok2, f"measured {cdf:.4f}, target 0.2542 +- 5e-4")
    assert ok1 and ok2


# -- criterion 6: property suites -----------------------------------------------


def test_gradient_checks():
    rng = np.random.default_rng(SEED)
    spec = make_boundary_spec(10)
    worst = 0.0
    for _ in range(100):
        u = 0.02 + 0.96 * np.sort(rng.random(10))
        fd = central_difference_gradient(lambda v: boundary(spec, v), u)
        worst = max(worst, relative_error(boundary_gradient(spec, u), fd))
    ok_b = worst <= 1e-5
    report("boundary gradient vs central differences", ok_b, f"worst rel err {worst:.2e}")

    x = rng.normal(size=4)
    sample = dc.SortedSample.from_observations(x)
    grid = dc.make_grid(sample, 12)
    spec4 = make_boundary_spec(4)
    problem = dc.DeconvProblem(grid, sample, spec4)
    worst_a = 0.0
    for _ in range(100):
        g = rng.dirichlet(np.ones(12)) * 0.9 + 0.1 / 12
        fd = central_difference_gradient(lambda v: problem.association_fg(v)[0], g)
        worst_a = max(worst_a, relative_error(problem.association_fg(g)[1], fd))
    ok_a = worst_a <= 1e-5
    report("association gradient vs central differences", ok_a, f"worst rel err {worst_a:.2e}")
    assert ok_b and ok_a


@pytest.mark.parametrize("pi", [0.05, 0.25, 0.5])
@pytest.mark.parametrize("n", [5, 20])
def test_prs_noncoverage_calibration(pi, n):
    rng = np.random.default_rng(SEED + n)
    spec = make_boundary_spec(n)
    q = boundary_quantile(spec, 1 - pi, 100_000, rng)
    fresh = sample_boundary_values(spec, 50_000, rng)
    freq = float(np.mean(fresh > q))
    se = math.sqrt(pi * (1 - pi) / 50_000)
    ok = abs(freq - pi) <= 3 * se + 0.003
    report(
        f"score calibration pi={pi} n={n}",
        ok,
        f"non-coverage {freq:.4f} vs nominal {pi} (3 MC SE = {3*se:.4f})",
    )
    assert ok


def test_coverage_inequality_small_model():
    # model-true check: latent means drawn from known weights on a fixed
    # grid, interval coverage must reach the product of the two coefficients
    rng = np.random.default_rng(SEED)
    K, n, reps = 15, 3, 1000
    grid = dc.Grid(points=np.linspace(-4, 4, K))
    true_gamma = np.zeros(K)
    true_gamma[[5, 9]] = 0.6, 0.4
    spec = make_boundary_spec(n)
    one_minus_pi = one_minus_alpha = 0.9
    thr_q = boundary_quantile(spec, one_minus_pi, 100_000, np.random.default_rng(7))
    alpha = 1 - one_minus_alpha
    covered = 0
    for _ in range(reps):
        theta = rng.choice(grid.points, size=n, p=true_gamma)
        x = theta + rng.standard_normal(n)
        sample = dc.SortedSample.from_observations(x)
        problem = dc.DeconvProblem(grid, sample, spec)
        _, b_min = problem.fit()
        thr = max(thr_q, b_min + 1e-6)
        theta_sorted = theta[np.argsort(x, kind="stable")]
        covered += sum(
            problem.point_covered(i, thr, alpha, theta_sorted[i]) for i in range(n)
        )
    rate = covered / (reps * n)
    bound = one_minus_pi * one_minus_alpha
    se = math.sqrt(bound * (1 - bound) / (reps * n))
    ok = rate >= bound - 3 * se
    report(
        "region-interval coverage inequality (n=3, K=15)",
        ok,
        f"coverage {rate:.4f} vs bound {bound:.3f} - 3 SE",
    )
    assert ok


def test_full_vs_partial_conditional_oracle():
    rng = np.random.default_rng(SEED)
    n = 6
    theta = cl.ThetaCollection(theta_sorted=np.sort(rng.normal(size=n)))
    x = rng.normal(size=n)
    exact = cl.full_conditional_estimate(theta, x)
    draws = 1_000_000
    perms = np.argsort(rng.random((draws, n)), axis=1)
    logw = (-0.5 * (x[None, :] - theta.theta_sorted[perms]) ** 2).sum(axis=1)
    logw -= logw.max()
    w = np.exp(logw)
    w /= w.sum()
    mc = (w[:, None] * theta.theta_sorted[perms]).sum(axis=0)
    ess = 1.0 / np.sum(w**2)
    se = np.std(theta.theta_sorted[perms], axis=0) / math.sqrt(ess)
    worst = float(np.max(np.abs(exact - mc) / (3 * se + 1e-9)))
    ok = worst <= 1.0
    report(
        "exact assignment posterior vs Monte Carlo oracle (n=6)",
        ok,
        f"worst |err| / (3 SE) = {worst:.3f}",
    )
    assert ok


def test_cross_module_association_identity():
    rng = np.random.default_rng(SEED)
    theta = np.sort(rng.normal(size=6))
    x = rng.normal(size=6)
    spec = make_boundary_spec(6)
    sample = dc.SortedSample.from_observations(x)
    classic_val = cl.classic_association_value(
        cl.ThetaCollection(theta_sorted=theta), sample, spec
    )
    eb_val = dc.association_value(
        dc.Grid(points=theta), dc.SimplexWeights(np.full(6, 1 / 6)), sample, spec
    )
    diff = abs(classic_val - eb_val)
    ok = diff < 1e-12
    report("cross-formulation association identity", ok, f"|difference| = {diff:.2e}")
    assert ok


def test_optimizer_feasibility_and_reproducibility():
    rng = np.random.default_rng(SEED)
    c = rng.normal(size=40)

    def fg(v):
        return float(np.sum((v - c) ** 2)), 2 * (v - c)

    runs = [minimize_on_simplex(fg, 40, OptimizerConfig(seed=3)) for _ in range(2)]
    feas = max(abs(r.x_star.sum() - 1.0) for r in runs)
    neg = min(r.x_star.min() for r in runs)
    identical = np.array_equal(runs[0].x_star, runs[1].x_star)
    pg = np.linalg.norm(project_to_simplex(runs[0].x_star - fg(runs[0].x_star)[1]) - runs[0].x_star)
    ok = feas <= 1e-8 and neg >= 0 and identical and pg <= 1e-6 * (1 + abs(runs[0].f_star))
    report(
        "optimizer feasibility and bit-reproducibility",
        ok,
        f"|sum-1|={feas:.1e}, min={neg:.1e}, identical={identical}, proj grad={pg:.1e}",
    )
    assert ok
