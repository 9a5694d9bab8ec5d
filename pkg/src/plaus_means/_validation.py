"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


class InvalidParameterError(ValueError):
    """A scalar parameter is outside its allowed range."""


class DimensionMismatchError(ValueError):
    """Array arguments have incompatible shapes."""


class OptimizerFailureError(RuntimeError):
    """A numerical solve exhausted its budget without reaching feasibility."""


class InfeasibleStartError(OptimizerFailureError):
    """No feasible point could be found for a constrained solve."""


class EnumerationLimitError(ValueError):
    """An exact-enumeration routine was asked for a problem that is too large."""


def as_float_vector(x, name: str = "x", min_len: int = 1) -> np.ndarray:
    """Coerce ``x`` to a 1-D float array, rejecting NaNs and short inputs.

    Accepts lists, tuples and arrays of shape ``(n,)`` or ``(n, 1)`` so the
    estimator API composes with column-vector conventions.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if arr.size < min_len:
        raise InvalidParameterError(f"{name} needs at least {min_len} element(s), got {arr.size}")
    if not np.isfinite(arr).all():
        raise InvalidParameterError(f"{name} contains non-finite values")
    return arr


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    v = int(value)
    if v != value or v < minimum:
        raise InvalidParameterError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return v


def check_open_unit(value, name: str) -> float:
    v = float(value)
    if not 0.0 < v < 1.0:
        raise InvalidParameterError(f"{name} must lie strictly inside (0, 1), got {value!r}")
    return v


def check_in_range(value, name: str, lo: float, hi: float) -> float:
    v = float(value)
    if not lo <= v <= hi:
        raise InvalidParameterError(f"{name} must lie in [{lo}, {hi}], got {value!r}")
    return v
