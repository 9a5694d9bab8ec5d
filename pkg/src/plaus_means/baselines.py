"""Reference estimators and the dispersion statistic used for comparisons."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc

from ._validation import InvalidParameterError, as_float_vector


@dataclass(frozen=True)
class EstimateVector:
    values: np.ndarray
    method_tag: str


def mle(x) -> EstimateVector:
    """Identity estimator: each observation estimates its own mean."""
    x = as_float_vector(x, "x")
    return EstimateVector(values=x.copy(), method_tag="mle")


def _js_factor(x: np.ndarray) -> float:
    ss = float(np.sum(x * x))
    if ss == 0.0:
        return 0.0
    return 1.0 - (x.size - 2) / ss


def james_stein(x) -> EstimateVector:
    """Shrink toward zero by ``1 - (n-2)/sum(x^2)``; needs n >= 3."""
    x = as_float_vector(x, "x", min_len=3)
    if float(np.sum(x * x)) == 0.0:
        return EstimateVector(values=np.zeros_like(x), method_tag="james_stein")
    return EstimateVector(values=_js_factor(x) * x, method_tag="james_stein")


def james_stein_positive_part(x) -> EstimateVector:
    """Same as :func:`james_stein` with the shrinkage factor clamped at zero."""
    x = as_float_vector(x, "x", min_len=3)
    if float(np.sum(x * x)) == 0.0:
        return EstimateVector(values=np.zeros_like(x), method_tag="james_stein_positive_part")
    factor = max(0.0, _js_factor(x))
    return EstimateVector(values=factor * x, method_tag="james_stein_positive_part")


def efron_morris(x) -> EstimateVector:
    """Shrink toward the sample mean by ``1 - (n-3)/S``; needs n >= 4.

    ``S`` is the centered sum of squares; a zero ``S`` (constant input)
    collapses every estimate to the common mean.
    """
    x = as_float_vector(x, "x", min_len=4)
    xbar = float(x.mean())
    s = float(np.sum((x - xbar) ** 2))
    if s == 0.0:
        return EstimateVector(values=np.full_like(x, xbar), method_tag="efron_morris")
    factor = 1.0 - (x.size - 3) / s
    return EstimateVector(values=xbar + factor * (x - xbar), method_tag="efron_morris")


def efron_morris_factor(x) -> float:
    """Shrinkage factor of :func:`efron_morris` (may be negative)."""
    x = as_float_vector(x, "x", min_len=4)
    s = float(np.sum((x - x.mean()) ** 2))
    if s == 0.0:
        return 0.0
    return 1.0 - (x.size - 3) / s


def mean_removed_statistic(x) -> float:
    """Centered sum of squares ``sum (x_i - xbar)^2``; needs n >= 2."""
    x = as_float_vector(x, "x", min_len=2)
    return float(np.sum((x - x.mean()) ** 2))


def chi_square_cdf(x: float, df: int) -> float:
    """Central chi-square CDF via the regularized lower incomplete gamma."""
    if df < 1:
        raise InvalidParameterError(f"df must be >= 1, got {df}")
    if x < 0:
        return 0.0
    return float(gammainc(df / 2.0, x / 2.0))
