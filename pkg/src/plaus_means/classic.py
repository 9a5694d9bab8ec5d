"""Mean estimation treating the unknowns as a fixed unordered collection.

Instead of modelling the means as draws from a mixing law, the collection of
means itself is the parameter: the marginal CDF of a random draw from the
collection ties sorted observations to sorted-uniform auxiliary variables,
and the boundary score of those CDF values is minimized over the collection.
Per-observation estimates then come from conditional distributions over
which collection member produced each observation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr

from . import score as bd
from ._validation import (
    DimensionMismatchError,
    EnumerationLimitError,
    InvalidParameterError,
    as_float_vector,
    check_positive_int,
)
from .deconv import LOG_SQRT_2PI, SortedSample
from .optimize import OptimizerConfig

# Exact full-conditional enumeration is refused above this size (10! is about
# 3.6M permutations; factorial growth makes 11 an order of magnitude worse).
FULL_CONDITIONAL_MAX_N = 10

# Log-gap bounds for the monotone reparameterization of the collection; wide
# enough never to bind at a solution, tight enough to keep exp() finite.
_LOG_GAP_MIN = -36.0
_LOG_GAP_MAX = 12.0


@dataclass(frozen=True)
class ThetaCollection:
    """A nondecreasing collection of candidate means."""

    theta_sorted: np.ndarray

    @classmethod
    def from_values(cls, values) -> "ThetaCollection":
        v = as_float_vector(values, "theta")
        return cls(theta_sorted=np.sort(v))

    def __post_init__(self):
        t = np.asarray(self.theta_sorted, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise InvalidParameterError("collection must be a nonempty vector")
        if np.any(np.diff(t) < 0):
            raise InvalidParameterError("collection must be nondecreasing")
        if not np.isfinite(t).all():
            raise InvalidParameterError("collection contains non-finite values")
        object.__setattr__(self, "theta_sorted", t)
        t.setflags(write=False)

    @property
    def n(self) -> int:
        return self.theta_sorted.size


@dataclass(frozen=True)
class ClassicFit:
    """Fitted collection with the score it attained and the bound defining it."""

    theta_hat_collection: ThetaCollection
    b_at_fit: float
    bound: float

    def __post_init__(self):
        if self.b_at_fit > self.bound + 1e-9:
            raise InvalidParameterError("fitted score exceeds its defining bound")


def marginal_cdf(theta: ThetaCollection, x) -> float | np.ndarray:
    """CDF of a uniform random draw from the collection plus standard noise."""
    x_arr = np.asarray(x, dtype=float)
    vals = ndtr(x_arr[..., None] - theta.theta_sorted).mean(axis=-1)
    return float(vals) if np.isscalar(x) or x_arr.ndim == 0 else vals


def classic_association_value(
    theta: ThetaCollection, sample: SortedSample, spec: bd.BoundarySpec
) -> float:
    """Boundary score of the collection's marginal CDF at the sorted data."""
    if theta.n != sample.n or spec.n != sample.n:
        raise DimensionMismatchError("theta, sample and spec sizes must agree")
    u = marginal_cdf(theta, sample.x_sorted)
    return bd.boundary(spec, u)


def _collection_objective(sample: SortedSample, spec: bd.BoundarySpec):
    """Score and gradient over the monotone reparameterization.

    Parameters are ``z = (theta_1, log gap_2, ..., log gap_n)`` so the
    collection stays sorted by construction and permutation-equivalent
    minima collapse to one.
    """
    xs = sample.x_sorted
    n = sample.n

    def unpack(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        inc = np.exp(z[1:])
        theta = np.concatenate([[z[0]], z[0] + np.cumsum(inc)])
        return theta, inc

    def fg(z: np.ndarray) -> tuple[float, np.ndarray]:
        theta, inc = unpack(z)
        diff = xs[:, None] - theta[None, :]
        u = ndtr(diff).mean(axis=1)
        uc = np.clip(u, bd.CLIP_EPS, 1.0 - bd.CLIP_EPS)
        f = float(-(spec.a @ np.log(uc) + spec.b @ np.log1p(-uc)))
        dBdu = -spec.a / uc + spec.b / (1.0 - uc)
        pdf = np.exp(-0.5 * diff * diff - LOG_SQRT_2PI)
        dtheta = -(pdf.T @ dBdu) / n
        grad = np.empty_like(z)
        grad[0] = dtheta.sum()
        suffix = np.cumsum(dtheta[::-1])[::-1]
        grad[1:] = inc * suffix[1:]
        return f, grad

    return fg, unpack


def classic_mpe_fit(
    sample: SortedSample,
    spec: bd.BoundarySpec,
    config: OptimizerConfig | None = None,
) -> ClassicFit:
    """Minimize the collection score starting from the observations themselves."""
    if spec.n != sample.n:
        raise DimensionMismatchError("boundary spec size does not match sample")
    config = config or OptimizerConfig()
    xs = sample.x_sorted
    n = sample.n

    if n == 1:
        coll = ThetaCollection(theta_sorted=xs.copy())
        value = classic_association_value(coll, sample, spec)
        return ClassicFit(theta_hat_collection=coll, b_at_fit=value, bound=value)

    fg, unpack = _collection_objective(sample, spec)
    gaps = np.maximum(np.diff(xs), 1e-6)
    z0 = np.concatenate([[xs[0]], np.log(gaps)])
    bounds = [(None, None)] + [(_LOG_GAP_MIN, _LOG_GAP_MAX)] * (n - 1)
    res = minimize(
        fg,
        z0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={
            "maxiter": config.max_inner_iters,
            "ftol": 1e-15,
            "gtol": 1e-11,
        },
    )
    z_best, f_best = (res.x, float(res.fun)) if res.fun <= fg(z0)[0] else (z0, fg(z0)[0])
    theta, _ = unpack(z_best)
    coll = ThetaCollection(theta_sorted=theta)
    return ClassicFit(theta_hat_collection=coll, b_at_fit=f_best, bound=f_best)


def _conditional_log_weights(theta: ThetaCollection, x: np.ndarray) -> np.ndarray:
    diff = x[:, None] - theta.theta_sorted[None, :]
    return -0.5 * diff * diff


def partial_conditional_estimate(theta: ThetaCollection, x) -> np.ndarray:
    """Estimate each mean by averaging the collection under per-observation weights.

    Observation ``i`` weighs collection member ``k`` by the normal density of
    ``x_i`` around it; weights are normalized per observation in the log
    domain.
    """
    x = as_float_vector(x, "x")
    logw = _conditional_log_weights(theta, x)
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=1, keepdims=True)
    return w @ theta.theta_sorted


def full_conditional_estimate(theta: ThetaCollection, x) -> np.ndarray:
    """Estimate each mean under the exact assignment posterior.

    Enumerates every one-to-one assignment of observations to collection
    members, weighting each by its joint normal likelihood.  Work grows
    factorially, so sizes above ``FULL_CONDITIONAL_MAX_N`` are refused.
    """
    x = as_float_vector(x, "x")
    n = x.size
    if theta.n != n:
        raise DimensionMismatchError("theta and x must have the same length")
    if n > FULL_CONDITIONAL_MAX_N:
        raise EnumerationLimitError(
            f"exact enumeration supports n <= {FULL_CONDITIONAL_MAX_N}, got {n}"
        )
    logw = _conditional_log_weights(theta, x)
    total = math.factorial(n)
    log_terms = np.empty(total)
    assign = np.empty((total, n), dtype=np.int64)
    chunk = 200_000
    perms = itertools.permutations(range(n))
    pos = 0
    while True:
        block = list(itertools.islice(perms, chunk))
        if not block:
            break
        idx = np.asarray(block, dtype=np.int64)
        rows = np.arange(n)
        log_terms[pos : pos + len(block)] = logw[rows, idx].sum(axis=1)
        assign[pos : pos + len(block)] = idx
        pos += len(block)
    log_terms -= log_terms.max()
    w = np.exp(log_terms)
    w /= w.sum()
    return (w[:, None] * theta.theta_sorted[assign]).sum(axis=0)


def classic_point_estimate(
    x,
    spec: bd.BoundarySpec | None = None,
    config: OptimizerConfig | None = None,
) -> np.ndarray:
    """Fit the collection, then apply the per-observation weighted average.

    Returns estimates aligned with the input order of ``x``.
    """
    x = as_float_vector(x, "x")
    sample = SortedSample.from_observations(x)
    if spec is None:
        spec = bd.make_boundary_spec(sample.n)
    fit = classic_mpe_fit(sample, spec, config)
    return partial_conditional_estimate(fit.theta_hat_collection, x)


def assertion_specific_plausibility(
    theta_assert: ThetaCollection,
    sample: SortedSample,
    spec: bd.BoundarySpec,
    reps: int,
    rng: np.random.Generator,
) -> float:
    """Monte Carlo plausibility of an asserted collection.

    Simulates fresh data from the asserted collection and reports how often
    the simulated score at that collection is at least as large as the
    observed one; near 1 means the assertion fits the data as well as its own
    resamples do.
    """
    reps = check_positive_int(reps, "reps", minimum=100)
    if theta_assert.n != sample.n:
        raise DimensionMismatchError("assertion size does not match sample")
    observed = classic_association_value(theta_assert, sample, spec)
    theta = theta_assert.theta_sorted
    n = sample.n
    count = 0
    chunk = max(1, 2_000_000 // max(n * n, 1))
    done = 0
    while done < reps:
        m = min(chunk, reps - done)
        x_sim = np.sort(theta + rng.standard_normal((m, n)), axis=1)
        u = ndtr(x_sim[:, :, None] - theta[None, None, :]).mean(axis=2)
        np.clip(u, bd.CLIP_EPS, 1.0 - bd.CLIP_EPS, out=u)
        scores = -(np.log(u) @ spec.a + np.log1p(-u) @ spec.b)
        count += int(np.sum(scores >= observed))
        done += m
    return count / reps
