"""One-dimensional half-space solutions: ``Lb = 0`` on ``x > 0``, ``b = 0`` on ``x <= 0``.

Two independent constructions are provided.  The truncated route solves a
Dirichlet problem on ``(0, R)`` with power data ``a x^s`` beyond ``R``.  The
pipeline route starts from a one-phase minimiser with a free boundary point
and zooms in on that point by dyadic blow-ups, re-minimising at every level,
until the normalised profile stops changing.  Both profiles are normalised by
``b(1) = 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import ExponentFit, FitError, dyadic_ladder, fit_growth
from .dirichlet import solve_dirichlet
from .kernels import KernelSpec, reduce_to_1d, rescale_kernel, _hyperplane_weight
from .mesh import Exterior, ExteriorDescriptor, Grid, GridFunction, Region, blow_up
from .nonlocal_op import apply_L, apply_L_pointwise
from .onephase import OnePhaseProblem, free_boundary_points, minimize_alternating, step1_fixture


class HalfSpaceError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


@dataclass
class HalfSpaceSolution:
    kernel: KernelSpec
    profile: GridFunction  # nodes 0..R_window; zero exterior on the left
    provenance: str  # "pipeline" or "truncated-fixed-point"
    c1: float
    c2: float
    tail_exponent: float
    fitted_tail_exponent: float
    trace: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        return self.profile.grid.h

    @property
    def R_window(self) -> float:
        return self.profile.grid.hi

    @property
    def x(self) -> np.ndarray:
        return self.profile.grid.x

    @property
    def values(self) -> np.ndarray:
        return self.profile.values

    def __call__(self, x):
        x = np.asarray(x, float)
        return np.where(x <= 0, 0.0, self.profile(np.maximum(x, 0.0)))


def _scaled_rule(rule: Exterior, c: float) -> Exterior:
    if rule.kind == "zero":
        return rule
    if rule.kind == "constant":
        return replace(rule, c=rule.c * c)
    if rule.kind == "power":
        return replace(rule, A=rule.A * c)
    tail = _scaled_rule(rule.tail, c) if rule.tail is not None else None
    return replace(rule, values=tuple(np.asarray(rule.values) * c), tail=tail)


def _flatten(rule: Exterior, max_samples: int) -> Exterior:
    """Merge nested sampled rules into one and keep at most ``max_samples`` samples.

    Samples are kept densely next to the window and sparsely far out
    (geometric index spacing).
    """
    if rule.kind != "sampled":
        return rule
    xs, vs = list(rule.xs), list(rule.values)
    tail = rule.tail
    while tail is not None and tail.kind == "sampled" and tail.outward == rule.outward:
        if rule.outward > 0:
            keep = [i for i, t in enumerate(tail.xs) if t > xs[-1]]
            xs += [tail.xs[i] for i in keep]
            vs += [tail.values[i] for i in keep]
        else:
            keep = [i for i, t in enumerate(tail.xs) if t < xs[0]]
            xs = [tail.xs[i] for i in keep] + xs
            vs = [tail.values[i] for i in keep] + vs
        tail = tail.tail
    xs, vs = np.asarray(xs), np.asarray(vs)
    n = xs.size
    if n > max_samples:
        pick = np.unique(np.round(np.geomspace(1, n, max_samples)).astype(int) - 1)
        if rule.outward < 0:
            pick = np.unique(n - 1 - pick)
        xs, vs = xs[pick], vs[pick]
    return Exterior("sampled", xs=tuple(xs), values=tuple(vs), tail=tail, outward=rule.outward)


def _bounds(x, b, s):
    sel = x > 0
    q = b[sel] / x[sel] ** s
    return float(q.min()), float(q.max())


def _tail_fit(sol_call, R: float) -> float:
    radii = dyadic_ladder(R / 10, R)
    try:
        return fit_growth([(r, float(sol_call(r))) for r in radii]).exponent
    except FitError:
        return math.nan


# ---------------------------------------------------------------------------
# truncated route
# ---------------------------------------------------------------------------

def build_halfspace_truncated(K: KernelSpec, R: float = 16.0, nodes_per_unit: int = 256,
                              max_iter: int = 50, tol: float = 1e-12) -> HalfSpaceSolution:
    """Dirichlet solve on (0, R) with ``b = a x^s`` on ``[R, inf)``.

    The tail amplitude is iterated, ``a <- a / b_a(1)``, until the solution
    satisfies ``b(1) = 1`` by itself.
    """
    if K.dimension != 1:
        raise HalfSpaceError("half-space profiles are built from 1D kernels")
    if R <= 2:
        raise HalfSpaceError("the truncation radius must exceed 2")
    s = K.s
    grid = Grid.with_spacing(0.0, R, 1.0 / nodes_per_unit)
    omega = Region.interval(grid, 0.0, R)
    a = 1.0
    trace = []
    for _ in range(max_iter):
        vals = np.zeros(grid.shape)
        vals[-1] = a * grid.hi**s
        g = GridFunction(grid, vals, ExteriorDescriptor.power(a, s, "right"))
        b = solve_dirichlet(K, omega, 0.0, g)
        b1 = float(b(1.0))
        trace.append(a)
        if not b1 > 0:
            raise HalfSpaceError("profile is not positive at x = 1", trace)
        if abs(b1 - 1.0) <= tol:
            break
        a /= b1
    else:
        raise HalfSpaceError(f"tail amplitude did not settle in {max_iter} iterations", trace)
    c1, c2 = _bounds(grid.x, b.values, s)
    sol = HalfSpaceSolution(K, b, "truncated-fixed-point", c1, c2, s, math.nan, trace,
                            {"R": R, "nodes_per_unit": nodes_per_unit, "amplitude": a})
    sol.fitted_tail_exponent = _tail_fit(sol, grid.hi)
    return sol


# ---------------------------------------------------------------------------
# pipeline route
# ---------------------------------------------------------------------------

def _right_free_boundary(res, near: float) -> int:
    """Index of the contact node with positivity to its right closest to ``near``."""
    g = res.problem.grid
    pos = res.positivity.mask
    cands = [g.index_of(p) for p in free_boundary_points(res)]
    cands = [i for i in cands if i + 1 < pos.size and pos[i + 1]]
    if not cands:
        raise HalfSpaceError("no free boundary point with positivity to its right")
    return min(cands, key=lambda i: abs(g.x[i] - near))


def build_halfspace_pipeline(K: KernelSpec, step1_nodes: int = 512, window_nodes: int = 2049,
                             ratio: float = 0.5, tol: float = 1e-3, max_levels: int = 12,
                             max_samples: int = 512, M_values=None) -> HalfSpaceSolution:
    """Half-space profile as the limit of blow-ups of a one-phase minimiser.

    Level 0 is the minimiser on (-1, 0) with data 1 on (0, inf) for the
    smallest swept M that produces a contact point x0 with positivity to its
    right.  Each level blows the previous minimiser up at its free boundary
    point by ``ratio`` onto the window (-2, 2) (kernel rescaled, data outside
    the window kept as sampled exterior values), re-minimises there, and
    compares the profile on [0, 1], normalised to 1 at 1, with the previous
    one.  The sequence stops once the sup difference is below ``tol``.
    """
    if K.dimension != 1:
        raise HalfSpaceError("half-space profiles are built from 1D kernels")
    if window_nodes % 2 == 0:
        raise HalfSpaceError("the window needs an odd node count (a node at 0)")
    s = K.s
    fx = step1_fixture(K, step1_nodes, M_values)
    M = fx.M
    u = fx.result.u
    x0 = fx.x0
    lo, hi = -1.0, 0.0  # current coordinates of the original domain
    target = Grid.line(-2.0, 2.0, window_nodes)
    h = target.h
    unit = int(round(1.0 / h))
    if abs(unit * h - 1.0) > 1e-9:
        raise HalfSpaceError("window spacing must divide 1")
    Kc = K
    prev = None
    trace: list = []
    for level in range(1, max_levels + 1):
        ub = blow_up(u, x0, ratio, target, s)
        ext = ExteriorDescriptor(_flatten(ub.exterior.left, max_samples),
                                 _flatten(ub.exterior.right, max_samples))
        ub = GridFunction(target, np.maximum(ub.values, 0.0), ext)
        lo, hi = (lo - x0) / ratio, (hi - x0) / ratio
        Kc = rescale_kernel(Kc, ratio)
        omega = Region(target, (target.x > lo) & (target.x < hi))
        res = minimize_alternating(OnePhaseProblem(Kc, target, omega, M, ub), u_init=ub)
        u = res.u
        i0 = _right_free_boundary(res, 0.0)
        x0 = float(target.x[i0])
        if i0 + unit >= target.shape[0]:
            raise HalfSpaceError("free boundary drifted out of the window", trace)
        seg = u.values[i0:i0 + unit + 1]
        prof = seg / seg[-1]
        if prev is not None:
            trace.append(float(np.max(np.abs(prof - prev))))
            if trace[-1] < tol:
                break
        prev = prof
    else:
        raise HalfSpaceError(f"blow-up sequence did not settle within {max_levels} levels", trace)
    if np.any(u.values[:i0] != 0.0) or u.exterior.left.kind not in ("zero", "sampled") or (
            u.exterior.left.kind == "sampled" and np.any(np.asarray(u.exterior.left.values) != 0)):
        raise HalfSpaceError("minimiser is not zero left of the free boundary point", trace)
    norm = float(u.values[i0 + unit])
    n = target.shape[0] - i0
    grid = Grid.line(0.0, (n - 1) * h, n)
    right = _scaled_rule(u.exterior.right.transformed(x0, 1.0, 0.0), 1.0 / norm)
    prof = GridFunction(grid, u.values[i0:] / norm, ExteriorDescriptor(Exterior(), right))
    c1, c2 = _bounds(grid.x, prof.values, s)
    sol = HalfSpaceSolution(Kc, prof, "pipeline", c1, c2, s, math.nan, trace,
                            {"M": M, "step1_x0": fx.x0, "levels": level, "window_nodes": window_nodes})
    sol.fitted_tail_exponent = _tail_fit(sol, grid.hi)
    return sol


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def derivative_bounds_report(b: HalfSpaceSolution) -> tuple[float, float]:
    """inf and sup of ``b'(x) x^{1-s}`` over nodes in (4h, R_window/2) (central differences)."""
    x, v, h, s = b.x, b.values, b.h, b.kernel.s
    i = np.arange(1, x.size - 1)
    sel = (x[i] > 4 * h) & (x[i] < b.R_window / 2)
    i = i[sel]
    d = (v[i + 1] - v[i - 1]) / (2 * h)
    q = d * x[i] ** (1 - s)
    return float(q.min()), float(q.max())


def monotonicity_defect(b: HalfSpaceSolution) -> float:
    """Smallest forward difference of the profile (non-negative for monotone profiles)."""
    return float(np.min(np.diff(np.concatenate([[0.0], b.values]))))


def growth_fit(b: HalfSpaceSolution, r_min: float | None = None, r_max: float = 1.0) -> ExponentFit:
    """Fit of ``b(r) ~ C r^alpha`` on a dyadic ladder (default from 4h to 1)."""
    r_min = 4 * b.h if r_min is None else r_min
    return fit_growth([(r, float(b(r))) for r in dyadic_ladder(r_min, r_max)])


def quotient_oscillation_probe(b: HalfSpaceSolution, decades: int = 2) -> list[tuple[float, float]]:
    """(r, b(r) / r^s) at dyadic r from R_window/2 downwards over ``decades`` decades."""
    r_max = b.R_window / 2
    r_min = max(r_max * 10.0 ** (-decades), 4 * b.h)
    s = b.kernel.s
    return [(r, float(b(r)) / r**s) for r in dyadic_ladder(r_min, r_max)]


def oscillation_amplitude(samples) -> float:
    """(max - min) / mean of the quotient values of a probe."""
    q = np.array([v for _, v in samples])
    return float((q.max() - q.min()) / q.mean())


def residual_certificate(b: HalfSpaceSolution, tol: float = 1e-6) -> dict:
    """max |Lb| over interior nodes of (0, 3 R_window / 4), data beyond the window included."""
    Lb = apply_L(b.kernel, b.profile)
    x = b.x
    sel = (x > 0) & (x < 0.75 * b.R_window)
    sel[-1] = False
    res = float(np.max(np.abs(Lb[sel])))
    return {"max_abs_Lb": res, "passed": res <= tol}


def profile_difference(a: HalfSpaceSolution, b: HalfSpaceSolution, interval=(0.0, 1.0)) -> float:
    """Sup difference of two normalised profiles on the nodes of the finer one in ``interval``."""
    fine, other = (a, b) if a.h <= b.h else (b, a)
    x = fine.x
    sel = (x >= interval[0] - 1e-12) & (x <= interval[1] + 1e-12)
    return float(np.max(np.abs(fine(x[sel]) - other(x[sel]))))


def dimensional_reduction_check(K2: KernelSpec, profile=None, points=(0.0, 0.7, 1.5),
                                e=(1.0, 0.0)) -> dict:
    """Compare ``L(p(x.e))`` for a 2D kernel with ``L~ p`` for its hyperplane reduction.

    ``profile`` must be a smooth, bounded, vectorised 1D function (default
    ``exp(-t^2)``): the pointwise quadrature does not resolve kinks that cross
    the integration circles obliquely.  Returns ``c0``, the per-point values
    ``(t, 2D, reduced, relative difference)`` and the largest relative
    difference.
    """
    if K2.dimension != 2:
        raise HalfSpaceError("the reduction check needs a 2D kernel")
    p = profile if profile is not None else (lambda t: np.exp(-np.asarray(t, float) ** 2))
    e = np.asarray(e, float) / np.linalg.norm(e)
    K1 = reduce_to_1d(K2, e)
    rows = []
    for t in points:
        t = float(t)
        v1 = apply_L_pointwise(K1, p, t)
        v2 = apply_L_pointwise(K2, lambda X: p(np.asarray(X, float) @ e), t * e)
        rows.append((t, v2, v1, abs(v2 - v1) / max(abs(v1), 1e-300)))
    return {"c0": _hyperplane_weight(2, K2.s), "rows": rows, "max_rel": max(r[3] for r in rows)}
