"""Boundary score on sorted uniforms and its Monte Carlo distribution.

The score ``B(u) = -sum_i [a_i log u_i + b_i log(1 - u_i)]`` is small when
the sorted vector ``u`` sits near the typical positions of sorted Uniform(0,1)
order statistics and grows as any coordinate drifts toward 0 or 1.  Its
sublevel sets are the nested focal elements used everywhere else in this
package, so this module owns the weight scheme, the gradient, and the
reference distribution of ``B`` under genuinely uniform sorted samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import (
    DimensionMismatchError,
    check_in_range,
    check_open_unit,
    check_positive_int,
)

# Coordinates are clamped to [CLIP_EPS, 1 - CLIP_EPS] before taking logs so
# the score stays finite on the closed cube.
CLIP_EPS = 1e-12

DEFAULT_C = 2.0 / 3.0
DEFAULT_NU = 2.0


@dataclass(frozen=True)
class BoundarySpec:
    """Immutable weight scheme of the boundary score for a sample of size ``n``.

    ``a`` and ``b`` are derived from normalized inverse-variance-style weights
    ``w_i`` proportional to ``[i (n - i + 1)]^(-nu/2)``:

        a_i = w_i (i - 1 + c_n),    b_i = w_i (n - i + c_n).

    The reflection identity ``a_i == b_{n+1-i}`` makes ``B`` symmetric under
    ``u -> reversed(1 - u)``.
    """

    n: int
    c_n: float
    nu: float
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.a.setflags(write=False)
        self.b.setflags(write=False)

    @property
    def coordinate_minimizers(self) -> np.ndarray:
        """Per-coordinate minimizer of the score, ``u_i = a_i / (a_i + b_i)``."""
        return self.a / (self.a + self.b)


def make_boundary_spec(n: int, c_n: float = DEFAULT_C, nu: float = DEFAULT_NU) -> BoundarySpec:
    """Build the boundary weight scheme for ``n`` observations.

    Parameters
    ----------
    n : int
        Number of observations (>= 1).
    c_n : float
        Positive offset constant; 2/3 places the per-coordinate minimizers
        close to the Beta(i, n-i+1) medians.
    nu : float
        Weight exponent in [0, 2]; 0 gives flat weights, 2 weights each
        coordinate roughly by its inverse variance.
    """
    n = check_positive_int(n, "n")
    c_n = float(c_n)
    if c_n <= 0:
        raise ValueError(f"c_n must be positive, got {c_n!r}")
    nu = check_in_range(nu, "nu", 0.0, 2.0)
    i = np.arange(1, n + 1, dtype=float)
    w = (i * (n - i + 1.0)) ** (-nu / 2.0)
    w /= w.sum()
    a = w * (i - 1.0 + c_n)
    b = w * (n - i + c_n)
    return BoundarySpec(n=n, c_n=c_n, nu=nu, a=a, b=b)


def _check_u(spec: BoundarySpec, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (spec.n,):
        raise DimensionMismatchError(f"u has shape {u.shape}, expected ({spec.n},)")
    if np.isnan(u).any():
        raise ValueError("u contains NaN")
    return u


def boundary(spec: BoundarySpec, u) -> float:
    """Evaluate the boundary score at a sorted-uniform vector ``u``."""
    u = np.clip(_check_u(spec, u), CLIP_EPS, 1.0 - CLIP_EPS)
    return float(-(spec.a @ np.log(u) + spec.b @ np.log1p(-u)))


def boundary_gradient(spec: BoundarySpec, u) -> np.ndarray:
    """Gradient of :func:`boundary`, ``-a_i/u_i + b_i/(1-u_i)`` componentwise."""
    u = np.clip(_check_u(spec, u), CLIP_EPS, 1.0 - CLIP_EPS)
    return -spec.a / u + spec.b / (1.0 - u)


def sample_sorted_uniforms(n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` independent Uniform(0,1) values and return them sorted."""
    n = check_positive_int(n, "n")
    return np.sort(rng.random(n))


def sample_boundary_values(spec: BoundarySpec, mc_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo sample of ``B(U)`` under sorted Uniform(0,1) vectors.

    Vectorized over replications; one row of uniforms per draw.
    """
    mc_samples = check_positive_int(mc_samples, "mc_samples")
    values = np.empty(mc_samples)
    # chunked so mc_samples * n never allocates more than ~32M floats
    chunk = max(1, int(4e6) // max(spec.n, 1))
    done = 0
    while done < mc_samples:
        m = min(chunk, mc_samples - done)
        u = np.sort(rng.random((m, spec.n)), axis=1)
        np.clip(u, CLIP_EPS, 1.0 - CLIP_EPS, out=u)
        values[done : done + m] = -(np.log(u) @ spec.a + np.log1p(-u) @ spec.b)
        done += m
    return values


def boundary_quantile(
    spec: BoundarySpec,
    level: float,
    mc_samples: int = 100_000,
    rng: np.random.Generator | None = None,
) -> float:
    """Empirical ``level``-quantile of ``B(U)`` over sorted-uniform draws.

    Uses linear interpolation between order statistics; deterministic for a
    given generator state.
    """
    level = check_open_unit(level, "level")
    if mc_samples < 100:
        raise ValueError(f"mc_samples must be >= 100, got {mc_samples}")
    if rng is None:
        rng = np.random.default_rng(0)
    values = sample_boundary_values(spec, mc_samples, rng)
    return float(np.quantile(values, level))
