"""Constrained solvers used by the deconvolution and collection fits.

Three layers live here:

* a spectral projected-gradient (SPG) loop on the probability simplex, used
  directly for smooth simplex-constrained minimization;
* an augmented-Lagrangian wrapper handling one smooth inequality constraint,
  with SPG (simplex) or L-BFGS-B (box / unconstrained) inner solves;
* a cutting-plane solver for linear-fractional objectives over a convex
  region of the simplex.  Gradient methods stall on these problems because
  the score depends on the weight vector only through an ``n``-dimensional
  linear image, leaving a high-dimensional subspace of zero-cost directions;
  the LP formulation walks those flat directions exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog, minimize

from ._validation import (
    InfeasibleStartError,
    InvalidParameterError,
    OptimizerFailureError,
    check_positive_int,
)

FGFun = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass(frozen=True)
class OptimizerConfig:
    """Budget, tolerances and seeding shared by every solve in the package."""

    max_outer_iters: int = 30
    max_inner_iters: int = 4000
    feasibility_tol: float = 1e-8
    objective_tol: float = 1e-9
    penalty_growth: float = 10.0
    initial_penalty: float = 1.0
    step_tol: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if min(self.feasibility_tol, self.objective_tol, self.step_tol) <= 0:
            raise InvalidParameterError("tolerances must be positive")
        if self.penalty_growth <= 1:
            raise InvalidParameterError("penalty_growth must exceed 1")


@dataclass
class OptResult:
    x_star: np.ndarray
    f_star: float
    constraint_violation: float
    iterations: int
    converged: bool
    # (value at inner start, value at inner end) of the augmented objective,
    # one pair per outer iteration; empty for purely unconstrained solves
    merit_history: list[tuple[float, float]] = field(default_factory=list)


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{x : x >= 0, sum x = 1}`` by sort-and-threshold."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = idx[u - css / idx > 0][-1]
    w = np.maximum(v - css[rho - 1] / rho, 0.0)
    return w / w.sum()


def dirichlet_starts(K: int, count: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Flat-Dirichlet draws used as extra multi-start points."""
    return [rng.dirichlet(np.ones(K)) for _ in range(count)]


def _spg(
    fg: FGFun,
    x0: np.ndarray,
    max_iter: int,
    pg_tol: float,
    f_rel_tol: float,
    step_tol: float = 1e-13,
) -> tuple[np.ndarray, float, np.ndarray, int, bool]:
    """Monotone spectral projected gradient on the simplex.

    Returns ``(x, f, grad, iterations, first_order_ok)``.  Armijo descent is
    enforced at every step, so the final value never exceeds ``fg(x0)[0]``.
    """
    x = project_to_simplex(np.asarray(x0, dtype=float))
    f, g = fg(x)
    lam = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        d = project_to_simplex(x - lam * g) - x
        gd = float(g @ d)
        if gd > -1e-16:
            # spectral step gave no descent direction; retry with unit step
            d = project_to_simplex(x - g) - x
            gd = float(g @ d)
            if gd > -1e-16:
                break
        alpha = 1.0
        while True:
            x_new = x + alpha * d
            f_new, g_new = fg(x_new)
            if f_new <= f + 1e-4 * alpha * gd or alpha < step_tol:
                break
            alpha *= 0.5
        if f_new > f:
            break
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        lam = min(max(float(s @ s) / sy, 1e-12), 1e12) if sy > 1e-18 else 1.0
        small_change = abs(f - f_new) <= f_rel_tol * (1.0 + abs(f))
        x, f, g = x_new, f_new, g_new
        if small_change and np.linalg.norm(project_to_simplex(x - g) - x) <= pg_tol * (1.0 + abs(f)):
            break
    pg_norm = float(np.linalg.norm(project_to_simplex(x - g) - x))
    return x, f, g, it, pg_norm <= max(pg_tol, 1e-6) * (1.0 + abs(f))


def minimize_on_simplex(
    objective_with_gradient: FGFun,
    K: int,
    config: OptimizerConfig | None = None,
    starts: Sequence[np.ndarray] | None = None,
    pad_starts_to: int = 5,
) -> OptResult:
    """Minimize a smooth objective over the probability simplex.

    Runs a small multi-start (caller-supplied starts, the uniform vector, and
    flat-Dirichlet draws seeded from ``config.seed``, ``pad_starts_to`` starts
    in total) and returns the best SPG solution.  Callers minimizing convex
    objectives can drop the random padding.
    """
    K = check_positive_int(K, "K")
    config = config or OptimizerConfig()
    pool: list[np.ndarray] = [np.asarray(s, dtype=float) for s in (starts or [])]
    pool.append(np.full(K, 1.0 / K))
    rng = np.random.default_rng(config.seed)
    pool.extend(dirichlet_starts(K, max(0, pad_starts_to - len(pool)), rng))

    best: OptResult | None = None
    for x0 in pool:
        x, f, _, its, ok = _spg(
            objective_with_gradient,
            x0,
            max_iter=config.max_inner_iters,
            pg_tol=1e-7,
            f_rel_tol=config.objective_tol,
            step_tol=config.step_tol,
        )
        res = OptResult(
            x_star=x,
            f_star=f,
            constraint_violation=float(abs(x.sum() - 1.0)),
            iterations=its,
            converged=ok,
        )
        if best is None or res.f_star < best.f_star:
            best = res
    assert best is not None
    return best


def _inner_box(fg: FGFun, x0, bounds, max_iter, gtol) -> tuple[np.ndarray, float, int]:
    res = minimize(
        fg,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": max_iter, "ftol": 1e-13, "gtol": gtol},
    )
    f0 = fg(np.asarray(x0, dtype=float))[0]
    if res.fun > f0:  # keep monotone descent even on line-search failure
        return np.asarray(x0, dtype=float), f0, int(res.nit)
    return res.x, float(res.fun), int(res.nit)


def optimize_with_inequality(
    objective_with_gradient: FGFun,
    constraint_with_gradient: FGFun,
    threshold: float,
    domain: str,
    start: np.ndarray,
    sense: str = "min",
    config: OptimizerConfig | None = None,
    bounds: Sequence[tuple[float | None, float | None]] | None = None,
) -> OptResult:
    """Extremize a smooth objective subject to ``constraint(x) <= threshold``.

    Parameters
    ----------
    domain : {"simplex", "box"}
        "simplex" keeps iterates on the probability simplex; "box" optimizes
        over ``R^n`` or the supplied bound constraints.
    sense : {"min", "max"}
        "max" solves the negated minimization and reports the recovered value.

    Uses an augmented-Lagrangian outer loop with multiplier updates and
    geometric penalty growth; raises :class:`InfeasibleStartError` when no
    point satisfying the constraint can be found.
    """
    if domain not in ("simplex", "box"):
        raise InvalidParameterError(f"unknown domain {domain!r}")
    if sense not in ("min", "max"):
        raise InvalidParameterError(f"unknown sense {sense!r}")
    config = config or OptimizerConfig()
    sign = 1.0 if sense == "min" else -1.0

    x = np.asarray(start, dtype=float)
    if domain == "simplex":
        x = project_to_simplex(x)

    def solve_inner(fg: FGFun, x0: np.ndarray, tol: float) -> tuple[np.ndarray, float]:
        if domain == "simplex":
            xs, fs, _, _, _ = _spg(
                fg, x0, max_iter=config.max_inner_iters, pg_tol=tol, f_rel_tol=1e-13
            )
        else:
            xs, fs, _ = _inner_box(fg, x0, bounds, config.max_inner_iters, tol)
        return xs, fs

    c0, _ = constraint_with_gradient(x)
    if c0 > threshold + config.feasibility_tol:
        # feasibility restoration: minimize the constraint itself
        x, c_best = solve_inner(constraint_with_gradient, x, 1e-9)
        if c_best > threshold + config.feasibility_tol:
            raise InfeasibleStartError(
                f"no feasible point found: min constraint {c_best:.6g} > threshold {threshold:.6g}"
            )

    lam = 0.0
    rho = config.initial_penalty
    merit_history: list[tuple[float, float]] = []
    prev_viol = np.inf
    prev_f = np.inf
    total_iters = 0
    converged = False
    f_obj = np.nan

    for _ in range(config.max_outer_iters):

        def auglag(z: np.ndarray, _lam=lam, _rho=rho) -> tuple[float, np.ndarray]:
            f, gf = objective_with_gradient(z)
            c, gc = constraint_with_gradient(z)
            t = _lam / _rho + (c - threshold)
            if t > 0:
                val = sign * f + 0.5 * _rho * t * t - _lam**2 / (2 * _rho)
                grad = sign * gf + _rho * t * gc
            else:
                val = sign * f - _lam**2 / (2 * _rho)
                grad = sign * gf
            return val, grad

        al_start = auglag(x)[0]
        inner_tol = max(1e-9, 1e-4 * 0.2 ** len(merit_history))
        x, al_end = solve_inner(auglag, x, inner_tol)
        merit_history.append((al_start, al_end))
        total_iters += 1

        c_val, _ = constraint_with_gradient(x)
        viol = max(0.0, c_val - threshold)
        f_obj, _ = objective_with_gradient(x)
        lam = max(0.0, lam + rho * (c_val - threshold))

        if viol <= config.feasibility_tol and abs(f_obj - prev_f) <= config.objective_tol * (
            1.0 + abs(f_obj)
        ):
            converged = True
            break
        if viol > 0.25 * prev_viol and viol > config.feasibility_tol:
            rho *= config.penalty_growth
        prev_viol = viol if viol > 0 else prev_viol
        prev_f = f_obj

    c_val, _ = constraint_with_gradient(x)
    return OptResult(
        x_star=x,
        f_star=float(f_obj),
        constraint_violation=float(max(0.0, c_val - threshold)),
        iterations=total_iters,
        converged=converged,
        merit_history=merit_history,
    )


class ConvexRegionCuts:
    """Pool of supporting hyperplanes of a convex constraint function.

    A cut recorded at ``x0`` is ``c(x0) + g(x0).(x - x0) <= c(x)``, so for any
    threshold ``t`` the halfspace ``g.x <= t - c(x0) + g.x0`` contains the
    whole region ``{x : c(x) <= t}``.  One pool therefore serves every
    threshold over the same data, and later solves converge in one or two LPs.
    """

    # beyond this many cuts the oldest unpinned rows are dropped; any subset
    # of valid cuts stays valid, pruning only costs rediscovery time
    MAX_CUTS = 350
    PINNED = 8

    def __init__(self, constraint_with_gradient: FGFun, K: int):
        self.constraint = constraint_with_gradient
        self.K = int(K)
        self._normals: list[np.ndarray] = []
        self._base: list[float] = []  # (g.x0 - c(x0)) / scale per cut
        self._scales: list[float] = []

    def __len__(self) -> int:
        return len(self._normals)

    def add_cut_at(self, x: np.ndarray) -> float:
        c, g = self.constraint(x)
        g = np.asarray(g, dtype=float)
        # unit-norm rows keep the LP well conditioned; the halfspace and the
        # threshold offset scale together so the cut is unchanged
        scale = float(np.abs(g).max())
        scale = scale if scale > 0 else 1.0
        self._normals.append(g / scale)
        self._base.append((float(g @ x) - float(c)) / scale)
        self._scales.append(scale)
        if len(self._normals) > self.MAX_CUTS:
            keep = list(range(self.PINNED)) + list(
                range(len(self._normals) - (self.MAX_CUTS - self.PINNED), len(self._normals))
            )
            self._normals = [self._normals[i] for i in keep]
            self._base = [self._base[i] for i in keep]
            self._scales = [self._scales[i] for i in keep]
        return float(c)

    def matrices(self, threshold: float) -> tuple[np.ndarray, np.ndarray]:
        """Cut matrix ``(G, h)`` with rows ``G x <= h`` for the given threshold.

        Rows are unit-inf-norm, so any row with ``h >= 1`` cannot bind on the
        simplex and is dropped; this also removes vacuous near-zero-gradient
        cuts recorded at interior minimizers.
        """
        if not self._normals:
            return np.empty((0, self.K)), np.empty(0)
        h = np.asarray(self._base) + float(threshold) / np.asarray(self._scales)
        keep = h < 1.0
        if not keep.any():
            return np.empty((0, self.K)), np.empty(0)
        return np.asarray(self._normals)[keep], h[keep]


def _boundary_crossing(
    constraint: FGFun, threshold: float, x_in: np.ndarray, x_out: np.ndarray
) -> np.ndarray:
    """Point on the segment [x_in, x_out] where the constraint hits threshold.

    ``x_in`` must be feasible and ``x_out`` infeasible; bisection on the
    segment parameter is cheap next to one LP solve.
    """
    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        c_mid, _ = constraint(x_in + mid * (x_out - x_in))
        if c_mid <= threshold:
            lo = mid
        else:
            hi = mid
    return x_in + hi * (x_out - x_in)


def fractional_extreme(
    numer: np.ndarray,
    denom: np.ndarray,
    cuts: ConvexRegionCuts,
    sense: str,
    threshold: float,
    tol: float = 1e-7,
    max_cuts: int = 400,
    anchor: np.ndarray | None = None,
    gap_tol: float = 1e-5,
    stall_gap: float = 5e-3,
    stall_window: int = 4,
) -> tuple[float, np.ndarray]:
    """Globally extremize ``(numer . x) / (denom . x)`` over a convex region.

    The region is ``{x in simplex : constraint(x) <= threshold}`` with the
    constraint held by ``cuts``.  A Charnes-Cooper change of variables makes
    the objective linear over outer polyhedral models of the region, refined
    by supporting-plane cuts until the LP optimum is feasible.  With a
    feasible ``anchor`` supplied, cuts are added both at the LP point and at
    the spot where the segment from the anchor crosses the region boundary,
    which kills the zig-zagging that plain cutting planes suffer on fat
    regions.  The solve also stops once the outer LP bound and the best
    feasible boundary value agree to ``gap_tol``, or once the outer bound has
    stopped improving for ``stall_window`` rounds while the gap is within
    ``stall_gap``.  The returned value is the outer bound, so downstream
    interval logic errs on the wide (conservative) side by at most the gap.

    Returns ``(value, x)``; raises :class:`InfeasibleStartError` if the
    region is certified empty and :class:`OptimizerFailureError` on budget
    exhaustion.
    """
    if sense not in ("min", "max"):
        raise InvalidParameterError(f"unknown sense {sense!r}")
    K = cuts.K
    numer = np.asarray(numer, dtype=float)
    denom = np.asarray(denom, dtype=float)
    if numer.shape != (K,) or denom.shape != (K,):
        raise InvalidParameterError("numer/denom must have length K")
    scale = float(denom.max())
    if scale <= 0:
        raise InvalidParameterError("denominator must be positive somewhere on the simplex")
    d = denom / scale
    q = numer / scale
    sign = 1.0 if sense == "min" else -1.0

    # variables z = (y, s):  min sign * q.y
    # s.t. d.y = 1,  sum(y) - s = 0,  cuts: G y - h s <= 0,  y >= 0, s >= 0
    A_eq = np.zeros((2, K + 1))
    A_eq[0, :K] = d
    A_eq[1, :K] = 1.0
    A_eq[1, K] = -1.0
    b_eq = np.array([1.0, 0.0])
    c_vec = np.concatenate([sign * q, [0.0]])

    def frac(x: np.ndarray) -> float:
        return float((numer @ x) / (denom @ x))

    best_inner: float | None = None
    best_inner_x: np.ndarray | None = None
    prev_outer: float | None = None
    flat_rounds = 0
    for _ in range(max_cuts):
        G, h = cuts.matrices(threshold)
        A_ub = np.hstack([G, -h[:, None]]) if len(G) else None
        b_ub = np.zeros(len(G)) if len(G) else None
        res = linprog(
            c_vec,
            A_eq=A_eq,
            b_eq=b_eq,
            A_ub=A_ub,
            b_ub=b_ub,
            bounds=[(0, None)] * (K + 1),
            method="highs",
        )
        if res.status == 2:
            raise InfeasibleStartError(
                "constraint region is empty (cut model certified infeasible)"
            )
        if res.status != 0:
            raise OptimizerFailureError(f"LP solve failed with status {res.status}")
        y = res.x[:K]
        s = res.x[K]
        if s <= 0:
            raise OptimizerFailureError("degenerate LP solution with zero mass")
        x = y / s
        c_val = cuts.add_cut_at(x)
        if c_val <= threshold + tol:
            return frac(x), x
        if anchor is not None:
            x_b = _boundary_crossing(cuts.constraint, threshold, anchor, x)
            cuts.add_cut_at(x_b)
            val_b = frac(x_b)
            if best_inner is None or sign * val_b < sign * best_inner:
                best_inner, best_inner_x = val_b, x_b
                # recenter on the incumbent so later cuts support the
                # boundary near the optimum instead of near the start;
                # keep the anchor strictly feasible for the next crossing
                candidate = 0.5 * (anchor + x_b)
                if cuts.constraint(candidate)[0] <= threshold:
                    anchor = candidate
            outer = frac(x)
            if abs(outer - best_inner) <= gap_tol * (1.0 + abs(outer)):
                return outer, best_inner_x
            flat = prev_outer is not None and sign * outer >= sign * prev_outer - 1e-9 * (
                1.0 + abs(outer)
            )
            flat_rounds = flat_rounds + 1 if flat else 0
            prev_outer = outer
            if flat_rounds >= stall_window and abs(outer - best_inner) <= stall_gap * (
                1.0 + abs(outer)
            ):
                return outer, best_inner_x
    raise OptimizerFailureError(f"cutting-plane budget of {max_cuts} LPs exhausted")


def fractional_exceeds(
    numer: np.ndarray,
    denom: np.ndarray,
    cuts: ConvexRegionCuts,
    threshold: float,
    level: float,
    anchor: np.ndarray,
    tol: float = 1e-7,
    max_cuts: int = 400,
    stall_window: int = 8,
) -> bool:
    """Decide whether ``max (numer.x)/(denom.x) > level`` over the region.

    Same machinery as :func:`fractional_extreme` in the "max" sense, but the
    loop stops as soon as either side of the question is settled: an outer
    LP bound at or below ``level`` proves "no", while any feasible point
    above ``level`` proves "yes".  Usually needs one or two LPs.  Exact ties
    (the true maximum within numerical resolution of ``level``) resolve to
    the wide-interval side.
    """
    K = cuts.K
    numer = np.asarray(numer, dtype=float)
    denom = np.asarray(denom, dtype=float)
    scale = float(denom.max())
    if scale <= 0:
        raise InvalidParameterError("denominator must be positive somewhere on the simplex")
    d = denom / scale
    q = numer / scale

    def frac(x: np.ndarray) -> float:
        return float((numer @ x) / (denom @ x))

    best_inner = frac(anchor)
    if best_inner > level:
        return True

    A_eq = np.zeros((2, K + 1))
    A_eq[0, :K] = d
    A_eq[1, :K] = 1.0
    A_eq[1, K] = -1.0
    b_eq = np.array([1.0, 0.0])
    c_vec = np.concatenate([-q, [0.0]])

    prev_outer: float | None = None
    flat_rounds = 0
    for _ in range(max_cuts):
        G, h = cuts.matrices(threshold)
        A_ub = np.hstack([G, -h[:, None]]) if len(G) else None
        b_ub = np.zeros(len(G)) if len(G) else None
        res = linprog(
            c_vec,
            A_eq=A_eq,
            b_eq=b_eq,
            A_ub=A_ub,
            b_ub=b_ub,
            bounds=[(0, None)] * (K + 1),
            method="highs",
        )
        if res.status == 2:
            raise InfeasibleStartError(
                "constraint region is empty (cut model certified infeasible)"
            )
        if res.status != 0:
            raise OptimizerFailureError(f"LP solve failed with status {res.status}")
        y = res.x[:K]
        s = res.x[K]
        if s <= 0:
            raise OptimizerFailureError("degenerate LP solution with zero mass")
        x = y / s
        outer = frac(x)
        if outer <= level:
            return False
        c_val = cuts.add_cut_at(x)
        if c_val <= threshold + tol:
            return True
        x_b = _boundary_crossing(cuts.constraint, threshold, anchor, x)
        cuts.add_cut_at(x_b)
        val_b = frac(x_b)
        if val_b > level:
            return True
        if val_b > best_inner:
            best_inner = val_b
            candidate = 0.5 * (anchor + x_b)
            if cuts.constraint(candidate)[0] <= threshold:
                anchor = candidate
        if outer - best_inner <= 1e-9 * (1.0 + abs(outer)):
            return False  # true maximum pinched below the level
        flat = prev_outer is not None and outer >= prev_outer - 1e-9 * (1.0 + abs(outer))
        flat_rounds = flat_rounds + 1 if flat else 0
        prev_outer = outer
        if flat_rounds >= stall_window:
            return True  # unresolved tie: err toward the wider interval
    raise OptimizerFailureError(f"cutting-plane budget of {max_cuts} LPs exhausted")
