"""Dirichlet problems for L on 1D grids and boundary-behaviour diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analysis import ExponentFit, FitError, dyadic_ladder, fit_growth
from .kernels import KernelSpec
from .mesh import ExteriorDescriptor, Grid, GridFunction, Region
from .nonlocal_op import OperatorError, apply_L, assemble_stiffness, beta0, solve_collocation


def _rhs_values(f, grid: Grid) -> np.ndarray:
    if f is None:
        return np.zeros(grid.shape)
    if isinstance(f, GridFunction):
        return np.asarray(f.values, float)
    return np.broadcast_to(np.asarray(f, float), grid.shape).copy()


def residual(K: KernelSpec, u: GridFunction, omega: Region, f=None) -> np.ndarray:
    """``Lu - f`` on the nodes of Omega."""
    Lu = apply_L(K, u)
    return (Lu - _rhs_values(f, u.grid))[omega.mask]


def solve_dirichlet(K: KernelSpec, omega: Region, f, g: GridFunction, tol: float = 1e-7) -> GridFunction:
    """Collocation solution of ``Lu = f`` in Omega, ``u = g`` elsewhere.

    ``f`` is a GridFunction, an array of nodal values or a scalar.  The
    residual on Omega is checked against ``tol`` relative to the size of the
    data; a violation means the assembly is broken.
    """
    if omega.grid != g.grid:
        raise OperatorError("region and data live on different grids")
    fv = _rhs_values(f, g.grid)
    u = g.with_values(solve_collocation(K, g, omega, fv))
    if omega.count:
        res = np.max(np.abs(residual(K, u, omega, fv)))
        scale = max(1.0, float(np.max(np.abs(fv))), float(np.max(np.abs(u.values))) * _diag_scale(K, g.grid))
        if res > tol * scale:
            raise OperatorError(f"collocation residual {res:.3e} exceeds {tol * scale:.3e}")
    return u


def _diag_scale(K: KernelSpec, grid: Grid) -> float:
    from .nonlocal_op import operator_for

    op = operator_for(K, grid)
    return float(op.c[1])


def harmonic_replacement(K: KernelSpec, u: GridFunction, B: Region) -> GridFunction:
    """The function that is L-harmonic in B and equals u elsewhere."""
    return solve_dirichlet(K, B, 0.0, u)


def pythagorean_defect(K: KernelSpec, u: GridFunction, B: Region, omega: Region | None = None) -> dict:
    """``E(u) - E(v) - E(u - v)`` for v the harmonic replacement of u in B.

    Energies are over the pairs touching ``omega`` (default B, which must
    contain B).  The defect is reported relative to ``E(u)``.
    """
    omega = B if omega is None else omega
    if np.any(B.mask & ~omega.mask):
        raise OperatorError("B must lie inside omega")
    v = harmonic_replacement(K, u, B)
    form = assemble_stiffness(K, u.grid, omega, u.exterior)
    Eu = form.energy(u)
    Ev = form.energy(v)
    w = u.values - v.values
    Ew = form.bilinear(w, w)
    return {"E_u": Eu, "E_v": Ev, "E_diff": Ew,
            "defect": abs(Eu - Ev - Ew) / max(abs(Eu), np.finfo(float).tiny)}


def project_on_barrier(u: GridFunction, b, z: float, r: float) -> float:
    """L^2(B_r(z)) projection coefficient of u onto b (trapezoid rule on u's nodes)."""
    g = u.grid
    x = g.x
    sel = np.abs(x - z) <= r + 1e-12 * g.h
    if sel.sum() < 2:
        raise FitError("projection window holds fewer than two nodes")
    xs = x[sel]
    bv = np.asarray(b(xs), float)
    uv = u.values[sel]
    den = np.trapezoid(bv * bv, xs)
    if den < 1e-14:
        raise FitError("barrier vanishes on the projection window")
    return float(np.trapezoid(uv * bv, xs) / den)


def boundary_distance(omega: Region) -> np.ndarray:
    """Distance of each node to the nearest node outside Omega minus half a cell."""
    g = omega.grid
    x = g.x
    out_x = x[~omega.mask]
    if out_x.size == 0:
        d = np.minimum(x - (g.lo - g.h), (g.hi + g.h) - x)
    else:
        pos = np.searchsorted(out_x, x)
        left = np.where(pos > 0, x - out_x[np.maximum(pos - 1, 0)], np.inf)
        right = np.where(pos < out_x.size, out_x[np.minimum(pos, out_x.size - 1)] - x, np.inf)
        d = np.minimum(left, right)
        d = np.minimum(d, np.minimum(x - (g.lo - g.h), (g.hi + g.h) - x))
    return np.where(omega.mask, d - 0.5 * g.h, 0.0)


@dataclass
class HopfResult:
    coefficient: float  # inf over bands of u / d^s
    degenerate: bool
    bands: list  # (d_lo, d_hi, min of u/d^s)
    fit: ExponentFit | None

    @property
    def passed(self) -> bool:
        return (not self.degenerate) and self.coefficient > 0


def hopf_check(u: GridFunction, omega: Region, s: float, K: KernelSpec | None = None, f=None,
               tol: float = 1e-8) -> HopfResult:
    """Fit ``u >= c d^s`` on dyadic boundary-distance bands from 4h to diam/4."""
    g = u.grid
    if np.any(u.values < -tol):
        raise FitError("Hopf check needs u >= 0")
    if K is not None:
        res = residual(K, u, omega, f)
        fv = _rhs_values(f, g)[omega.mask]
        if np.any(fv < -tol) or np.any(res < -tol * max(1.0, np.max(np.abs(fv), initial=0.0))):
            raise FitError("u is not a supersolution with f >= 0")
    inside = omega.mask
    vals = u.values[inside]
    if np.all(np.abs(vals) <= tol):
        return HopfResult(0.0, True, [], None)
    d = boundary_distance(omega)[inside]
    comps = omega.components()
    diam = max((b - a + 1) * g.h for a, b in comps)
    lo = 4 * g.h
    hi = 0.25 * diam
    bands = []
    for r in dyadic_ladder(lo, hi):
        sel = (d >= r) & (d < 2 * r)
        if np.any(sel):
            bands.append((r, 2 * r, float(np.min(vals[sel] / d[sel] ** s))))
    if not bands:
        raise FitError("no distance band resolved")
    c = min(b[2] for b in bands)
    samples = []
    for r, _, _ in bands:
        sel = (d >= r) & (d < 2 * r)
        samples.append((r, float(np.min(vals[sel]))))
    try:
        fit = fit_growth(samples)
    except FitError:
        fit = None
    degenerate = bool(np.any(vals <= tol))
    return HopfResult(float(c), degenerate and c <= 0, bands, fit)


def boundary_growth(u: GridFunction, z: float, radii, direction: int = 1) -> ExponentFit:
    """Fit of ``r -> sup_{0 < direction (x - z) < r} |u|``."""
    x = u.grid.x
    t = direction * (x - z)
    samples = []
    for r in radii:
        sel = (t > 0) & (t <= r + 1e-12)
        samples.append((r, float(np.max(np.abs(u.values[sel]))) if np.any(sel) else 0.0))
    return fit_growth(samples)


def boundary_expansion(u: GridFunction, b: Callable, z: float, radii, direction: int = 1):
    """Projection coefficient q at the smallest radius and the growth fit of u - q b.

    ``b`` is a profile of the distance to z (zero for negative arguments).
    """
    radii = sorted(radii)
    barrier = lambda x: b(direction * (np.asarray(x) - z))
    q = project_on_barrier(u, barrier, z, radii[0])
    rem = u.with_values(u.values - q * barrier(u.grid.x))
    return q, boundary_growth(rem, z, radii, direction)


def interval_solution(K: KernelSpec, nodes_per_unit: int = 1024, f: float = 1.0, pad: float = 0.25):
    """Solution of ``Lu = f`` in (0, 1) with zero exterior data, on a padded grid."""
    h = 1.0 / nodes_per_unit
    lo = -round(pad / h) * h
    grid = Grid.with_spacing(lo, 1.0 - lo, h)
    omega = Region.interval(grid, 0.0, 1.0)
    g = GridFunction(grid, np.zeros(grid.shape))
    return solve_dirichlet(K, omega, f, g), omega


def boundary_exponent_check(K: KernelSpec, nodes_per_unit: int = 1024):
    """Fitted boundary growth exponent at 0 of the (0,1) solution with f = 1, and beta0."""
    u, omega = interval_solution(K, nodes_per_unit)
    h = u.grid.h
    fit = boundary_growth(u, -0.5 * h, dyadic_ladder(8 * h, 0.125))
    return fit, beta0(K.lam, K.Lam, K.s)


@dataclass
class AnnulusFixture:
    u: GridFunction
    omega: Region
    R: float
    fit: ExponentFit
    beta0: float


def annulus_fixture(K: KernelSpec, R: float = 0.5, nodes: int = 1601, outer_value: float = 1.0) -> AnnulusFixture:
    """v = 0 on B_R, L-harmonic on B_2R minus B_R, v = const outside B_2R (1D).

    The fit measures the growth of v away from the inner sphere, to be
    compared with the barrier exponent beta0.
    """
    grid = Grid.line(-3 * R, 3 * R, nodes)
    x = grid.x
    omega = Region(grid, (np.abs(x) > R + 1e-9 * grid.h) & (np.abs(x) < 2 * R - 1e-9 * grid.h))
    data = np.where(np.abs(x) >= 2 * R - 1e-9 * grid.h, outer_value, 0.0)
    g = GridFunction(grid, data, ExteriorDescriptor.constant(outer_value))
    v = solve_dirichlet(K, omega, 0.0, g)
    h = grid.h
    edge = x[omega.mask & (x > 0)].min() - h
    fit = boundary_growth(v, edge + 0.5 * h, dyadic_ladder(8 * h, R / 4))
    return AnnulusFixture(v, omega, R, fit, beta0(K.lam, K.Lam, K.s))
