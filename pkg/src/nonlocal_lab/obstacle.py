"""The obstacle problem ``min{Lu, u - phi} = 0`` on a truncated 1D window.

The collocation matrix with zero data outside the window is an M-matrix, so
the discrete problem is a linear complementarity problem
``u >= phi, Cu >= 0, (Cu)_i (u - phi)_i = 0`` solved by a primal-dual
active-set iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg

from .analysis import ExponentFit, FitError, dyadic_ladder, fit_growth
from .dirichlet import project_on_barrier
from .kernels import KernelSpec
from .mesh import ExteriorDescriptor, Grid, GridFunction, Region
from .nonlocal_op import assemble_collocation


class ObstacleError(RuntimeError):
    pass


@dataclass(eq=False)
class ObstacleProblem:
    kernel: KernelSpec
    grid: Grid
    phi: GridFunction

    def __post_init__(self):
        if self.grid.dimension != 1:
            raise ObstacleError("obstacle problems are solved on 1D grids")
        if self.phi.grid != self.grid:
            raise ObstacleError("obstacle lives on a different grid")
        v = self.phi.values
        if not np.all(np.isfinite(v)):
            raise ObstacleError("obstacle must be finite")
        if v[0] > 0 or v[-1] > 0:
            raise ObstacleError("obstacle must vanish at the window edges")


def bump_obstacle(grid: Grid, width: float = 0.5, height: float = 1.0) -> GridFunction:
    """``height (1 - (x/width)^2)_+^2``; width 1/2 gives ``(1 - 4x^2)_+^2``."""
    x = grid.x
    return GridFunction(grid, height * np.maximum(1.0 - (x / width) ** 2, 0.0) ** 2)


def obstacle_fixture_problem(K: KernelSpec, R: float = 8.0, nodes: int = 3200) -> ObstacleProblem:
    grid = Grid.line(-R, R, nodes)
    return ObstacleProblem(K, grid, bump_obstacle(grid))


@dataclass
class ObstacleResult:
    problem: ObstacleProblem
    u: GridFunction
    contact: Region
    residual: float  # max_i |min(Lu_i, u_i - phi_i)|
    free_boundary: list
    Lu: np.ndarray
    iterations: int
    method: str
    history: list = field(default_factory=list)

    @property
    def gap(self) -> np.ndarray:
        return self.u.values - self.problem.phi.values


def _check_m_matrix(C: np.ndarray):
    off = C - np.diag(np.diag(C))
    if np.any(off > 0):
        raise ObstacleError("collocation matrix has positive off-diagonal entries")
    if np.any(C.sum(axis=1) < -1e-10 * np.abs(np.diag(C))):
        raise ObstacleError("collocation matrix is not diagonally dominant")


def _pdas(C, phi, max_iter):
    n = phi.size
    active = phi > 0
    history = []
    for it in range(1, max_iter + 1):
        u = np.where(active, phi, 0.0)
        inact = np.flatnonzero(~active)
        act = np.flatnonzero(active)
        if inact.size:
            rhs = -C[np.ix_(inact, act)] @ phi[act] if act.size else np.zeros(inact.size)
            u[inact] = linalg.solve(C[np.ix_(inact, inact)], rhs, assume_a="pos", check_finite=False)
        lam = C @ u
        new = np.where(active, lam > 0, phi > u)
        history.append(int(new.sum()))
        if np.array_equal(new, active):
            return u, it, history
        active = new
    raise ObstacleError(f"active-set iteration exceeded {max_iter} iterations")


def _pgs(C, phi, max_iter, tol):
    u = np.maximum(phi, 0.0)
    d = np.diag(C)
    n = phi.size
    for it in range(1, max_iter + 1):
        delta = 0.0
        for i in range(n):
            v = max(phi[i], u[i] - (C[i] @ u) / d[i])
            delta = max(delta, abs(v - u[i]))
            u[i] = v
        if delta < tol:
            return u, it
    raise ObstacleError(f"projected Gauss-Seidel did not converge in {max_iter} sweeps")


def solve_obstacle(problem: ObstacleProblem, tol: float = 1e-8, max_iter: int = 1000) -> ObstacleResult:
    """Primal-dual active-set solve; projected Gauss-Seidel if the active set cycles."""
    C, _ = assemble_collocation(problem.kernel, problem.grid, ExteriorDescriptor.zero())
    _check_m_matrix(C)
    phi = np.asarray(problem.phi.values, float)
    try:
        u, its, hist = _pdas(C, phi, max_iter)
        method = "active-set"
    except ObstacleError:
        u, its = _pgs(C, phi, 100 * max_iter, 1e-3 * tol)
        hist, method = [], "projected-gauss-seidel"
    u = np.maximum(u, phi)
    Lu = C @ u
    res = float(np.max(np.abs(np.minimum(Lu, u - phi))))
    if res > tol * max(1.0, float(np.max(np.abs(phi)))):
        raise ObstacleError(f"complementarity residual {res:.3e} above tolerance")
    contact = (u - phi) <= 0.0
    contact &= phi > 0
    fb = []
    x = problem.grid.x
    for i in np.flatnonzero(contact):
        if (i > 0 and not contact[i - 1]) or (i + 1 < contact.size and not contact[i + 1]):
            fb.append(float(x[i]))
    return ObstacleResult(problem, GridFunction(problem.grid, u), Region(problem.grid, contact), res,
                          fb, Lu, its, method, hist)


# ---------------------------------------------------------------------------
# free boundary diagnostics
# ---------------------------------------------------------------------------

def _sup_gap(gap: GridFunction, x0: float, radii) -> list[tuple[float, float]]:
    x, h = gap.grid.x, gap.grid.h
    out = []
    for r in radii:
        sel = np.abs(x - x0) <= r + 1e-9 * h
        out.append((float(r), float(np.max(np.abs(gap.values[sel])))))
    return out


def default_radii(result: ObstacleResult, r_max: float = 0.2) -> list[float]:
    """Radii ``(4 2^k + 1/2) h`` up to ``r_max``.

    Measured from a free boundary placed half a cell off the grid, each ball
    ends exactly on a node.
    """
    h = result.problem.grid.h
    out = []
    k = 0
    while (4 * 2**k + 0.5) * h <= r_max:
        out.append((4 * 2**k + 0.5) * h)
        k += 1
    return out


def classify_free_boundary_point(result: ObstacleResult, x0: float, radii=None,
                                 margin: float = 0.1) -> tuple[str, ExponentFit]:
    """'regular' or 'degenerate' from the growth of ``sup_{B_r(x0)} (u - phi)``.

    Regular: exponent within ``margin`` of 1+s and leading coefficient above
    ``10 h^{1+s}``.  Degenerate: exponent at least 1+s+margin, or the
    coefficient is below the floor.  Growth slower than 1+s-margin contradicts
    the dichotomy and raises FitError.
    """
    s = result.problem.kernel.s
    h = result.problem.grid.h
    radii = default_radii(result) if radii is None else radii
    gap = GridFunction(result.problem.grid, result.gap)
    fit = fit_growth(_sup_gap(gap, _centre(result, x0), radii))
    return _classify(fit, s, h, margin), fit


def _centre(result: ObstacleResult, x0: float) -> float:
    """The free boundary between a contact node and its open neighbour is put
    half a cell into the open side."""
    return x0 + 0.5 * _open_side(result, x0) * result.problem.grid.h


def _classify(fit: ExponentFit, s: float, h: float, margin: float) -> str:
    floor = 10 * h ** (1 + s)
    if fit.exponent >= 1 + s + margin or fit.coefficient < floor:
        return "degenerate"
    if fit.exponent >= 1 + s - margin:
        return "regular"
    raise FitError(f"growth exponent {fit.exponent:.3f} below 1+s-{margin}: not resolved")


def _derivative(u: np.ndarray, h: float) -> np.ndarray:
    return np.gradient(u, h)


def obstacle_regularity_report(result: ObstacleResult, deltas=None) -> ExponentFit:
    """Dyadic modulus of continuity of u' (central differences), fitted as ``C delta^alpha``.

    ``omega(delta) = max |u'(x + delta) - u'(x)|`` over the window.  An
    exponent at or above 1 means the fit saturates (no singularity seen).
    """
    g = result.problem.grid
    h = g.h
    du = _derivative(result.u.values, h)
    deltas = dyadic_ladder(4 * h, 0.25) if deltas is None else deltas
    samples = []
    for dl in deltas:
        k = max(1, int(round(dl / h)))
        samples.append((k * h, float(np.max(np.abs(du[k:] - du[:-k])))))
    return fit_growth(samples)


def second_difference_growth(result: ObstacleResult, x0: float, radii=None) -> ExponentFit:
    """Fit of ``|D^2 (u - phi)|`` at distance r from the free boundary on the open side.

    At a regular point this grows like ``r^{s-1}``, so u is not C^2 there.
    """
    g = result.problem.grid
    h = g.h
    w = result.gap
    direction = _open_side(result, x0)
    z = _centre(result, x0)
    if radii is None:
        radii = [(m + 0.5) * h for m in (4, 6, 8, 12, 16)]
    d2 = np.zeros_like(w)
    d2[1:-1] = (w[2:] - 2 * w[1:-1] + w[:-2]) / h**2
    samples = []
    for r in radii:
        i = g.index_of(z + direction * r)
        samples.append((r, abs(float(d2[i]))))
    return fit_growth(samples)


def _open_side(result: ObstacleResult, x0: float) -> int:
    i = result.problem.grid.index_of(x0)
    c = result.contact.mask
    if i + 1 < c.size and not c[i + 1]:
        return 1
    if i > 0 and not c[i - 1]:
        return -1
    raise FitError("x0 is not a free boundary point")


def profile_antiderivative(b) -> callable:
    """``B(x) = int_{-inf}^x b`` (cumulative trapezoid rule on the profile nodes)."""
    x = np.asarray(b.x, float)
    v = np.asarray(b.values, float)
    Bv = integrate.cumulative_trapezoid(v, x, initial=0.0)

    def B(t):
        t = np.asarray(t, float)
        return np.where(t <= 0, 0.0, np.interp(t, x, Bv))

    B.x_max = float(x[-1])
    return B


def expansion_fit(result: ObstacleResult, x0: float, b, radii=None,
                  direction: int | None = None) -> tuple[float, ExponentFit]:
    """Coefficient c of ``u - phi ~ c B((x - x0) e)`` and the growth fit of the remainder.

    ``c`` is the L^2 projection on the innermost ball of the ladder.  A
    remainder at round-off level on every ball is reported as an infinite
    exponent (saturated fit).
    """
    g = result.problem.grid
    radii = sorted(default_radii(result) if radii is None else radii)
    if direction is None:
        direction = _open_side(result, x0)
    B = profile_antiderivative(b)
    if radii[-1] > B.x_max:
        raise FitError("half-space profile window is shorter than the fit radii")
    z = _centre(result, x0)
    barrier = lambda y: B(direction * (np.asarray(y) - z))
    gap = GridFunction(g, result.gap)
    c = project_on_barrier(gap, barrier, z, radii[0])
    rem = GridFunction(g, gap.values - c * barrier(g.x))
    samples = _sup_gap(rem, z, radii)
    scale = max(_sup_gap(gap, z, radii[-1:])[0][1], 1.0)
    if all(v <= 1e-12 * scale for _, v in samples):
        return c, ExponentFit(math.inf, 0.0, 1.0, (radii[0], radii[-1]), 0, len(radii))
    return c, fit_growth(samples)
