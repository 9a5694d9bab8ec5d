"""Grid deconvolution for many normal means.

The unknown mixing distribution is represented by a probability vector over
a fixed grid of candidate means.  Observed values are tied to sorted-uniform
auxiliary variables through the mixture CDF, and the boundary score of those
fitted CDF values drives everything: the best-fitting weights minimize it,
and sublevel regions of it produce interval estimates with conservative
coverage guarantees.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from . import score as bd
from ._validation import (
    DimensionMismatchError,
    InvalidParameterError,
    as_float_vector,
    check_open_unit,
    check_positive_int,
)
from .optimize import (
    fractional_exceeds,
    ConvexRegionCuts,
    OptimizerConfig,
    OptResult,
    fractional_extreme,
    minimize_on_simplex,
)

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)

# Quantile offsets defining the default grid range around the data.
GRID_TAIL_PROB = 1e-4

# Additive slack on the minimal boundary score that defines numerical
# membership in the maximum-plausibility region.  The true region is the
# argmin face of a convex program; the slack keeps it full-dimensional for
# the LP machinery and is exposed as an argument everywhere it is used.
MPE_REGION_SLACK = 1e-6


@dataclass(frozen=True)
class Grid:
    """Strictly increasing support points for the discretized mixing law."""

    points: np.ndarray
    spacing: float | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise InvalidParameterError("grid needs at least two points")
        if not np.all(np.diff(pts) > 0):
            raise InvalidParameterError("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)
        pts.setflags(write=False)

    @property
    def size(self) -> int:
        return self.points.size


@dataclass(frozen=True)
class SimplexWeights:
    """Probability vector over the grid; the discretized mixing distribution."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if g.ndim != 1:
            raise DimensionMismatchError("gamma must be a vector")
        if g.min() < -1e-12:
            raise InvalidParameterError(f"gamma has negative mass {g.min():.3g}")
        if abs(g.sum() - 1.0) > 1e-10:
            raise InvalidParameterError(f"gamma sums to {g.sum():.12g}, expected 1")
        g = np.maximum(g, 0.0)
        object.__setattr__(self, "gamma", g)
        g.setflags(write=False)


@dataclass(frozen=True)
class SortedSample:
    """Observations sorted ascending plus the map back to input order.

    ``rank_of_input[i]`` is the position of input observation ``i`` in the
    sorted order; ties keep input order (stable sort).
    """

    x_sorted: np.ndarray
    rank_of_input: np.ndarray

    @classmethod
    def from_observations(cls, x) -> "SortedSample":
        x = as_float_vector(x, "x")
        order = np.argsort(x, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(x.size)
        return cls(x_sorted=x[order], rank_of_input=rank)

    def __post_init__(self):
        xs = np.asarray(self.x_sorted, dtype=float)
        rk = np.asarray(self.rank_of_input)
        if np.any(np.diff(xs) < 0):
            raise InvalidParameterError("x_sorted must be nondecreasing")
        if sorted(rk.tolist()) != list(range(xs.size)):
            raise InvalidParameterError("rank_of_input must be a permutation")
        object.__setattr__(self, "x_sorted", xs)
        object.__setattr__(self, "rank_of_input", rk)
        xs.setflags(write=False)

    @property
    def n(self) -> int:
        return self.x_sorted.size

    @property
    def x_input(self) -> np.ndarray:
        """Observations in their original input order."""
        return self.x_sorted[self.rank_of_input]

    def to_input_order(self, values_sorted: np.ndarray) -> np.ndarray:
        """Map per-observation values from sorted order back to input order."""
        return np.asarray(values_sorted)[self.rank_of_input]


@dataclass(frozen=True)
class PlausibilityRegion:
    """Sublevel set of the fitted boundary score defining plausible weights."""

    grid: Grid
    sample: SortedSample
    spec: bd.BoundarySpec
    threshold: float
    b_min: float
    gamma_star: np.ndarray = field(repr=False)
    clipped: bool = False  # True when the requested threshold fell below b_min

    def __post_init__(self):
        if self.threshold < self.b_min:
            raise InvalidParameterError("region threshold is below the attainable minimum")


@dataclass(frozen=True)
class IntervalSet:
    """Per-observation intervals, aligned with the original input order."""

    lower: np.ndarray
    upper: np.ndarray
    target_alpha: float
    target_pi: float

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape:
            raise DimensionMismatchError("lower/upper shape mismatch")
        if np.any(lo > hi + 1e-12):
            raise InvalidParameterError("interval lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def lengths(self) -> np.ndarray:
        return self.upper - self.lower


def make_grid(sample: SortedSample, K: int) -> Grid:
    """Equally spaced grid covering the data range widened by normal tails."""
    K = check_positive_int(K, "K", minimum=2)
    lo = sample.x_sorted[0] + ndtri(GRID_TAIL_PROB)
    hi = sample.x_sorted[-1] + ndtri(1.0 - GRID_TAIL_PROB)
    pts = np.linspace(lo, hi, K)
    return Grid(points=pts, spacing=(hi - lo) / (K - 1))


def mixture_cdf(grid: Grid, gamma: SimplexWeights, x) -> float | np.ndarray:
    """CDF of the grid mixture convolved with standard normal noise."""
    g = gamma.gamma
    if g.size != grid.size:
        raise DimensionMismatchError("gamma length does not match grid")
    x_arr = np.asarray(x, dtype=float)
    vals = ndtr(x_arr[..., None] - grid.points) @ g
    return float(vals) if np.isscalar(x) or x_arr.ndim == 0 else vals


def _log_pdf_row(grid: Grid, x_i: float) -> np.ndarray:
    d = float(x_i) - grid.points
    return -0.5 * d * d - LOG_SQRT_2PI


def posterior_pmf(grid: Grid, gamma: SimplexWeights, x_i: float) -> np.ndarray:
    """Conditional pmf of one latent mean over the grid, given its observation.

    Computed in the log domain with max subtraction so far tails never
    underflow to an all-zero vector.
    """
    g = gamma.gamma
    if g.size != grid.size:
        raise DimensionMismatchError("gamma length does not match grid")
    with np.errstate(divide="ignore"):
        logw = np.log(g) + _log_pdf_row(grid, x_i)
    m = logw.max()
    if not np.isfinite(m):
        raise InvalidParameterError("posterior is degenerate: no mass anywhere")
    p = np.exp(logw - m)
    return p / p.sum()


def posterior_mean(grid: Grid, gamma: SimplexWeights, x_i: float) -> float:
    """Posterior expectation of one latent mean under the given weights."""
    return float(posterior_pmf(grid, gamma, x_i) @ grid.points)


def interval_endpoints_given_gamma(
    grid: Grid, gamma: SimplexWeights, x_i: float, alpha: float
) -> tuple[float, float]:
    """Two-sided equal-tail interval endpoints read off the posterior pmf.

    The left endpoint is the largest grid point whose inclusive left tail is
    still ``<= alpha/2``; symmetrically on the right.  When even the first
    (last) grid point carries too much mass the endpoint falls back to the
    grid boundary, which only widens the interval.
    """
    alpha = check_open_unit(alpha, "alpha")
    p = posterior_pmf(grid, gamma, x_i)
    a2 = alpha / 2.0
    cum = np.cumsum(p)
    tail = np.cumsum(p[::-1])[::-1]
    left_ok = np.nonzero(cum <= a2)[0]
    right_ok = np.nonzero(tail <= a2)[0]
    left = grid.points[left_ok[-1]] if left_ok.size else grid.points[0]
    right = grid.points[right_ok[0]] if right_ok.size else grid.points[-1]
    return float(left), float(right)


class DeconvProblem:
    """Precomputed matrices and shared cut pool for one (grid, sample, spec).

    Every optimization over the same data reuses the cut pool: cuts are
    supporting hyperplanes of the convex boundary-score surface, so they stay
    valid for any threshold.
    """

    def __init__(self, grid: Grid, sample: SortedSample, spec: bd.BoundarySpec):
        if spec.n != sample.n:
            raise DimensionMismatchError("boundary spec size does not match sample")
        self.grid = grid
        self.sample = sample
        self.spec = spec
        diff = sample.x_sorted[:, None] - grid.points[None, :]
        self.cdf_matrix = ndtr(diff)
        self.pdf_matrix = np.exp(-0.5 * diff * diff - LOG_SQRT_2PI)
        self._cuts = ConvexRegionCuts(self.association_fg, self.grid.size)
        self._fit: tuple[np.ndarray, float] | None = None

    # -- association -----------------------------------------------------

    def association_fg(self, gamma: np.ndarray) -> tuple[float, np.ndarray]:
        """Boundary score of the fitted CDF values and its gamma-gradient."""
        u = self.cdf_matrix @ gamma
        np.clip(u, bd.CLIP_EPS, 1.0 - bd.CLIP_EPS, out=u)
        f = -(self.spec.a @ np.log(u) + self.spec.b @ np.log1p(-u))
        dBdu = -self.spec.a / u + self.spec.b / (1.0 - u)
        return float(f), self.cdf_matrix.T @ dBdu

    # -- fitting -----------------------------------------------------------

    def data_anchored_start(self, rng: np.random.Generator | None = None) -> np.ndarray:
        """Uniform weights plus 1/n at the grid point nearest each observation.

        With ``rng`` supplied, observations are first resampled with
        replacement (the alternative start that never helped in reference
        experiments; off by default).
        """
        xs = self.sample.x_sorted
        if rng is not None:
            xs = rng.choice(xs, size=xs.size, replace=True)
        g = np.full(self.grid.size, 1.0 / self.grid.size)
        idx = np.argmin(np.abs(self.grid.points[None, :] - xs[:, None]), axis=1)
        np.add.at(g, idx, 1.0 / self.sample.n)
        return g / g.sum()

    def fit(
        self,
        config: OptimizerConfig | None = None,
        use_resampled_starts: bool = False,
    ) -> tuple[np.ndarray, float]:
        """Minimize the association score over the simplex; cached."""
        if self._fit is None:
            config = config or OptimizerConfig()
            starts = [self.data_anchored_start()]
            if use_resampled_starts:
                rng = np.random.default_rng(config.seed)
                starts.append(self.data_anchored_start(rng))
            # the association score is convex in the weights, so two
            # deterministic starts suffice and random padding is skipped
            res: OptResult = minimize_on_simplex(
                self.association_fg, self.grid.size, config, starts=starts, pad_starts_to=2
            )
            self._seed_cuts(res.x_star)
            self._fit = (res.x_star, res.f_star)
        return self._fit

    def _seed_cuts(self, gamma_star: np.ndarray) -> None:
        if len(self._cuts) == 0:
            for g in (gamma_star, self.data_anchored_start(), np.full(self.grid.size, 1.0 / self.grid.size)):
                self._cuts.add_cut_at(g)

    # -- fractional programs over a region --------------------------------

    @property
    def score_cap(self) -> float:
        """Upper bound of the clipped score anywhere on the simplex.

        Thresholds above it describe the whole simplex, so they are clamped
        here to keep LP coefficients finite.
        """
        return float(-(self.spec.a.sum() + self.spec.b.sum()) * np.log(bd.CLIP_EPS)) + 1.0

    def _extreme(self, numer: np.ndarray, denom: np.ndarray, threshold: float, sense: str) -> float:
        threshold = min(threshold, self.score_cap)
        anchor = self._fit[0] if self._fit is not None else None
        value, _ = fractional_extreme(
            numer, denom, self._cuts, sense, threshold=threshold, anchor=anchor
        )
        return value

    def theta_extreme_pair(self, i: int, threshold: float) -> tuple[float, float]:
        """Range of the posterior mean of observation ``i`` over the region."""
        d = self.pdf_matrix[i]
        q = d * self.grid.points
        return (
            self._extreme(q, d, threshold, "min"),
            self._extreme(q, d, threshold, "max"),
        )

    def _left_mass_exceeds(self, i: int, j: int, threshold: float, level: float) -> bool:
        """Can posterior mass on grid[:j+1] exceed ``level`` inside the region?"""
        d = self.pdf_matrix[i]
        m = np.zeros_like(d)
        m[: j + 1] = d[: j + 1]
        return fractional_exceeds(
            m, d, self._cuts, min(threshold, self.score_cap), level, anchor=self.fit()[0]
        )

    def _right_mass_exceeds(self, i: int, j: int, threshold: float, level: float) -> bool:
        d = self.pdf_matrix[i]
        m = np.zeros_like(d)
        m[j:] = d[j:]
        return fractional_exceeds(
            m, d, self._cuts, min(threshold, self.score_cap), level, anchor=self.fit()[0]
        )

    def endpoint_indices(self, i: int, threshold: float, alpha: float) -> tuple[int, int]:
        """Extreme equal-tail endpoint indices over the region, by bisection.

        The left endpoint index of any single weight vector drops below ``j``
        exactly when the left-tail mass through ``j`` can exceed ``alpha/2``,
        so the optimized endpoint is found by bisecting that monotone
        criterion; symmetrically on the right.
        """
        K = self.grid.size
        a2 = alpha / 2.0
        lo, hi = 1, K - 1  # smallest j with exceedance at j (j = K-1 always works)
        while lo < hi:
            mid = (lo + hi) // 2
            if self._left_mass_exceeds(i, mid, threshold, a2):
                hi = mid
            else:
                lo = mid + 1
        left_idx = lo - 1

        lo, hi = 0, K - 2  # largest j with exceedance at j (j = 0 always works)
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self._right_mass_exceeds(i, mid, threshold, a2):
                lo = mid
            else:
                hi = mid - 1
        right_idx = min(lo + 1, K - 1)
        return left_idx, right_idx

    def point_covered(self, i: int, threshold: float, alpha: float, theta: float) -> bool:
        """Whether the optimized interval for observation ``i`` covers ``theta``.

        Needs only two exceedance decisions instead of a full endpoint search.
        """
        pts = self.grid.points
        a2 = alpha / 2.0
        jl = int(np.searchsorted(pts, theta, side="right")) - 1
        if jl < 0:
            return False
        if jl < self.grid.size - 1 and not self._left_mass_exceeds(i, jl + 1, threshold, a2):
            return False
        jr = int(np.searchsorted(pts, theta, side="left"))
        if jr > self.grid.size - 1:
            return False
        if jr > 0 and not self._right_mass_exceeds(i, jr - 1, threshold, a2):
            return False
        return True


# -- public operations ----------------------------------------------------


def association_value(
    grid: Grid, gamma: SimplexWeights, sample: SortedSample, spec: bd.BoundarySpec
) -> float:
    """Boundary score of the mixture CDF evaluated at the sorted data."""
    return DeconvProblem(grid, sample, spec).association_fg(gamma.gamma)[0]


def association_gradient(
    grid: Grid, gamma: SimplexWeights, sample: SortedSample, spec: bd.BoundarySpec
) -> np.ndarray:
    """Gradient of :func:`association_value` with respect to the weights."""
    return DeconvProblem(grid, sample, spec).association_fg(gamma.gamma)[1]


def mpe_fit(
    grid: Grid,
    sample: SortedSample,
    spec: bd.BoundarySpec,
    config: OptimizerConfig | None = None,
    use_resampled_starts: bool = False,
) -> tuple[SimplexWeights, float]:
    """Best-fitting weights and the attained minimal boundary score."""
    gamma, b_min = DeconvProblem(grid, sample, spec).fit(config, use_resampled_starts)
    return SimplexWeights(gamma=gamma), b_min


def region_at_mpe(
    problem: DeconvProblem,
    config: OptimizerConfig | None = None,
    slack: float = MPE_REGION_SLACK,
) -> PlausibilityRegion:
    """Maximum-plausibility region: scores within ``slack`` of the minimum."""
    gamma_star, b_min = problem.fit(config)
    return PlausibilityRegion(
        grid=problem.grid,
        sample=problem.sample,
        spec=problem.spec,
        threshold=b_min + slack,
        b_min=b_min,
        gamma_star=gamma_star,
    )


def region_at_level(
    problem: DeconvProblem,
    pi: float,
    config: OptimizerConfig | None = None,
    mc_samples: int = 100_000,
    rng: np.random.Generator | None = None,
    slack: float = MPE_REGION_SLACK,
) -> PlausibilityRegion:
    """Region at the ``1 - pi`` quantile of the score under sorted uniforms.

    If the quantile falls below the attainable minimum (extreme data), the
    threshold is clipped to the minimum plus ``slack`` and flagged; clipping
    can only widen coverage statements, never narrow them.
    """
    pi = check_open_unit(pi, "pi")
    gamma_star, b_min = problem.fit(config)
    quantile = bd.boundary_quantile(problem.spec, 1.0 - pi, mc_samples, rng)
    clipped = quantile < b_min + slack
    return PlausibilityRegion(
        grid=problem.grid,
        sample=problem.sample,
        spec=problem.spec,
        threshold=max(quantile, b_min + slack),
        b_min=b_min,
        gamma_star=gamma_star,
        clipped=clipped,
    )


def mpe_theta_extremes(
    grid: Grid,
    sample: SortedSample,
    spec: bd.BoundarySpec,
    region: PlausibilityRegion,
    i: int,
    config: OptimizerConfig | None = None,
    problem: DeconvProblem | None = None,
) -> tuple[float, float]:
    """Smallest and largest posterior mean of sorted observation ``i`` over a region."""
    if problem is None:
        problem = DeconvProblem(grid, sample, spec)
        problem.fit(config)
    return problem.theta_extreme_pair(i, region.threshold)


def mpe_point_estimate(
    grid: Grid,
    sample: SortedSample,
    spec: bd.BoundarySpec,
    config: OptimizerConfig | None = None,
    slack: float = MPE_REGION_SLACK,
    problem: DeconvProblem | None = None,
) -> np.ndarray:
    """Midpoints of the posterior-mean ranges, in input order."""
    if problem is None:
        problem = DeconvProblem(grid, sample, spec)
    region = region_at_mpe(problem, config, slack)
    mids = np.empty(sample.n)
    for i in range(sample.n):
        lo, hi = problem.theta_extreme_pair(i, region.threshold)
        mids[i] = 0.5 * (lo + hi)
    return sample.to_input_order(mids)


def plausibility_intervals(
    grid: Grid,
    sample: SortedSample,
    spec: bd.BoundarySpec,
    pi: float,
    alpha: float,
    config: OptimizerConfig | None = None,
    rng: np.random.Generator | None = None,
    mc_samples: int = 100_000,
    problem: DeconvProblem | None = None,
    region: PlausibilityRegion | None = None,
) -> IntervalSet:
    """Per-observation intervals optimized over a score sublevel region.

    Each interval stretches from the smallest attainable left endpoint to the
    largest attainable right endpoint over all weight vectors in the region,
    then is widened (rarely needed) to contain the midpoint estimate.
    """
    alpha = check_open_unit(alpha, "alpha")
    if problem is None:
        problem = DeconvProblem(grid, sample, spec)
    if region is None:
        region = region_at_level(problem, pi, config, mc_samples, rng)
    mpe_threshold = region.b_min + MPE_REGION_SLACK
    lower = np.empty(sample.n)
    upper = np.empty(sample.n)
    for i in range(sample.n):
        li, ri = problem.endpoint_indices(i, region.threshold, alpha)
        lower[i] = grid.points[li]
        upper[i] = grid.points[ri]
        lo_mean, hi_mean = problem.theta_extreme_pair(i, mpe_threshold)
        mid = 0.5 * (lo_mean + hi_mean)
        lower[i] = min(lower[i], mid)
        upper[i] = max(upper[i], mid)
    return IntervalSet(
        lower=sample.to_input_order(lower),
        upper=sample.to_input_order(upper),
        target_alpha=alpha,
        target_pi=pi,
    )


@dataclass(frozen=True)
class AdaptiveResult:
    s_star: int
    level: float
    intervals: IntervalSet
    ladder_levels: np.ndarray
    ladder_coverage: np.ndarray
    calibrated: bool


def adaptive_adjust(
    grid: Grid,
    sample: SortedSample,
    spec: bd.BoundarySpec,
    target_coverage: float,
    m: int = 10,
    reps: int = 50,
    rng: np.random.Generator | None = None,
    config: OptimizerConfig | None = None,
    mc_samples: int = 100_000,
    slack: float = MPE_REGION_SLACK,
) -> AdaptiveResult:
    """Tune the region level by simulating from the fitted mixing law.

    A ladder of ``m`` quantile levels ``(s/m) * sqrt(target)`` is evaluated
    on data simulated from the fitted weights; the chosen rung is the
    smallest whose simulated coverage meets the target, and the returned
    intervals are recomputed on the real data at that rung with the
    per-observation coefficient fixed at ``sqrt(target)``.
    """
    target_coverage = check_open_unit(target_coverage, "target_coverage")
    m = check_positive_int(m, "m", minimum=2)
    reps = check_positive_int(reps, "reps", minimum=20)
    if rng is None:
        rng = np.random.default_rng(0)
    config = config or OptimizerConfig()

    root = np.sqrt(target_coverage)
    alpha = 1.0 - root
    levels = np.array([(s / m) * root for s in range(1, m + 1)])

    problem = DeconvProblem(grid, sample, spec)
    gamma_star, b_min = problem.fit(config)
    weights = np.maximum(gamma_star, 0.0)
    weights = weights / weights.sum()

    b_values = bd.sample_boundary_values(spec, mc_samples, rng)
    thresholds = np.quantile(b_values, levels)

    n = sample.n
    covered = np.zeros((reps, m))
    for r in range(reps):
        theta_sim = rng.choice(grid.points, size=n, p=weights)
        x_sim = theta_sim + rng.standard_normal(n)
        sim_sample = SortedSample.from_observations(x_sim)
        sim_problem = DeconvProblem(make_grid(sim_sample, grid.size), sim_sample, spec)
        _, sim_b_min = sim_problem.fit(config)
        theta_sorted = theta_sim[np.argsort(x_sim, kind="stable")]
        for s in range(m):
            thr = max(thresholds[s], sim_b_min + slack)
            covered[r, s] = np.mean(
                [
                    sim_problem.point_covered(i, thr, alpha, theta_sorted[i])
                    for i in range(n)
                ]
            )
    ladder_coverage = covered.mean(axis=0)

    meets = np.nonzero(ladder_coverage >= target_coverage)[0]
    calibrated = meets.size > 0
    s_star = int(meets[0]) + 1 if calibrated else m

    chosen_threshold = max(float(thresholds[s_star - 1]), b_min + slack)
    region = PlausibilityRegion(
        grid=grid,
        sample=sample,
        spec=spec,
        threshold=chosen_threshold,
        b_min=b_min,
        gamma_star=gamma_star,
        clipped=chosen_threshold > float(thresholds[s_star - 1]),
    )
    pi_eff = 1.0 - levels[s_star - 1]
    intervals = plausibility_intervals(
        grid, sample, spec, pi_eff, alpha, config, problem=problem, region=region
    )
    return AdaptiveResult(
        s_star=s_star,
        level=float(levels[s_star - 1]),
        intervals=intervals,
        ladder_levels=levels,
        ladder_coverage=ladder_coverage,
        calibrated=calibrated,
    )


def within_experiment_diagnostic(
    intervals: IntervalSet, sample: SortedSample, alpha: float
) -> tuple[int, float]:
    """Count observations outside their own intervals and the expected count.

    Observations sitting exactly on an endpoint count as inside.  Roughly
    ``n * alpha / 2`` observations are expected outside when the intervals
    hold their nominal per-observation level.
    """
    alpha = check_open_unit(alpha, "alpha")
    x = sample.x_input
    outside = int(np.sum((x < intervals.lower) | (x > intervals.upper)))
    return outside, sample.n * alpha / 2.0
