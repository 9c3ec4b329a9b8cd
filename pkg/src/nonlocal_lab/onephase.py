"""The one-phase functional on 1D grids: minimisation, oracles and reports.

The discrete functional is ``I(u) = E(u) + M h #{i in Omega : u_i > 0}`` with
``E`` the energy over ``(Omega^c x Omega^c)^c`` of :mod:`nonlocal_op`.  On the
free nodes ``E(u) = h (u^T C u - 2 r^T u) + const`` where ``C`` is the
collocation matrix (an M-matrix) and ``r >= 0`` collects the exterior data, so
``Lu = C u - r`` on Omega.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .analysis import ExponentFit, fit_growth
from .kernels import KernelSpec
from .mesh import Exterior, ExteriorDescriptor, Grid, GridFunction, MeshError, Region
from .nonlocal_op import assemble_stiffness, operator_for


class MinimizationError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


def _nonnegative_rule(rule: Exterior) -> bool:
    if rule.kind == "constant":
        return rule.c >= 0
    if rule.kind == "power":
        return rule.A >= 0
    if rule.kind == "sampled":
        return min(rule.values) >= 0 and (rule.tail is None or _nonnegative_rule(rule.tail))
    return True


@dataclass(eq=False)
class OnePhaseProblem:
    kernel: KernelSpec
    grid: Grid
    omega: Region
    M: float
    g: GridFunction

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("M must be positive")
        if self.grid.dimension != 1:
            raise ValueError("one-phase problems are solved on 1D grids")
        if self.g.grid != self.grid or self.omega.grid != self.grid:
            raise ValueError("data, region and problem grids differ")
        if np.any(self.g.values < 0) or not all(_nonnegative_rule(r) for r in (self.g.exterior.left, self.g.exterior.right)):
            raise ValueError("exterior data must be non-negative")
        self.g.exterior.check_integrable(self.kernel.s)
        op = operator_for(self.kernel, self.grid)
        idx = self.omega.indices
        rest = np.flatnonzero(~self.omega.mask)
        self.idx = idx
        self.C = op.collocation(idx, self.g.exterior)
        r = op.exterior_terms(self.g.exterior).load[idx].copy()
        if rest.size:
            r -= op.block(idx, rest) @ self.g.values[rest]
        self.r = r
        self.h = self.grid.h
        self._stiff = None

    @property
    def stiffness(self):
        if self._stiff is None:
            self._stiff = assemble_stiffness(self.kernel, self.grid, self.omega, self.g.exterior)
        return self._stiff

    def extend(self, u_omega: np.ndarray) -> GridFunction:
        vals = self.g.values.copy()
        vals[self.idx] = u_omega
        return self.g.with_values(vals)

    def functional(self, u_omega: np.ndarray) -> float:
        """I up to the constant of the exterior data (for comparisons)."""
        u = np.asarray(u_omega, float)
        return float(self.h * (u @ self.C @ u - 2 * self.r @ u) + self.M * self.h * np.count_nonzero(u > 0))


@dataclass
class MinimizerResult:
    problem: OnePhaseProblem
    u: GridFunction
    contact: Region
    positivity: Region
    dirichlet: float
    measure: float
    trace: list = field(default_factory=list)
    sweeps: int = 0
    exhaustive: bool | None = None

    @property
    def total(self) -> float:
        return self.dirichlet + self.measure

    def contact_indices(self) -> np.ndarray:
        return self.contact.indices


def energy(problem: OnePhaseProblem, u: GridFunction):
    """(Dirichlet energy over (Omega^c x Omega^c)^c, M |{u > 0} cap Omega|)."""
    if u.grid != problem.grid:
        raise ValueError("grid mismatch")
    outside = ~problem.omega.mask
    if np.any(u.values[outside] != problem.g.values[outside]) or u.exterior != problem.g.exterior:
        raise ValueError("u must agree with g outside Omega")
    d = problem.stiffness.energy(u)
    m = problem.M * problem.h * int(np.count_nonzero(u.values[problem.omega.mask] > 0))
    return d, m


def _result(problem: OnePhaseProblem, u_omega, trace, sweeps, exhaustive=None) -> MinimizerResult:
    u_omega = np.where(u_omega > 0, u_omega, 0.0)
    u = problem.extend(u_omega)
    pos = np.zeros(problem.grid.shape, bool)
    pos[problem.idx] = u_omega > 0
    con = problem.omega.mask & ~pos
    d, m = energy(problem, u)
    return MinimizerResult(problem, u, Region(problem.grid, con), Region(problem.grid, pos),
                           d, m, trace, sweeps, exhaustive)


def _replace(problem: OnePhaseProblem, P: np.ndarray) -> np.ndarray:
    """Minimiser of E over functions supported in P (nonnegative by the M-matrix property)."""
    u = np.zeros(problem.idx.size)
    sel = np.flatnonzero(P)
    if sel.size:
        u[sel] = linalg.solve(problem.C[np.ix_(sel, sel)], problem.r[sel], assume_a="pos",
                              check_finite=False)
    return np.maximum(u, 0.0)


class _RelaxedState:
    """Positivity set with the padded inverse of ``C_PP`` kept under rank-one updates.

    Switching a node off or on changes I by an amount given by Schur
    complements, counting the re-solve on the new positivity set; each flip
    costs O(n^2).
    """

    def __init__(self, problem: OnePhaseProblem, P: np.ndarray):
        self.p = problem
        self.P = P.copy()
        self.refresh()

    def refresh(self):
        C, r = self.p.C, self.p.r
        n = r.size
        self.G = np.zeros((n, n))
        sel = np.flatnonzero(self.P)
        if sel.size:
            self.G[np.ix_(sel, sel)] = linalg.inv(C[np.ix_(sel, sel)])
        self.u = self.G @ r
        self.rho = C @ self.u - r
        self.D = np.einsum("ij,ji->i", C @ self.G, C)

    def gains(self):
        C, h, M = self.p.C, self.p.h, self.p.M
        diagG = np.diag(self.G)
        with np.errstate(divide="ignore", invalid="ignore"):
            off = np.where(self.P, M * h - h * self.u**2 / np.where(self.P, diagG, 1.0), -np.inf)
            S = np.diag(C) - self.D
            on = np.where(~self.P & (self.rho < 0), h * self.rho**2 / S - M * h, -np.inf)
        return np.maximum(off, on)

    def flip(self, i: int):
        C = self.p.C
        if self.P[i]:
            g = self.G[:, i].copy()
            gam = g[i]
            du = -g * (self.u[i] / gam)
            self.G -= np.outer(g, g) / gam
            Cg = C @ g
            self.D -= Cg * Cg / gam
            self.P[i] = False
        else:
            w = -(self.G @ C[:, i])
            w[i] = 1.0
            S = C[i, i] - self.D[i]
            du = w * (-self.rho[i] / S)
            self.G += np.outer(w, w) / S
            Cw = C @ w
            self.D += Cw * Cw / S
            self.P[i] = True
        self.u += du
        self.rho += C @ du
        self.u[~self.P] = 0.0


def _relaxed_descent(problem: OnePhaseProblem, P: np.ndarray, trace: list, refresh_every: int = 128) -> int:
    """Greedy best-single-flip descent with exact relaxed energy changes; returns flips made."""
    st = _RelaxedState(problem, P)
    tiny = 1e-12 * max(1.0, problem.M * problem.h)
    flips = 0
    while True:
        gain = st.gains()
        i = int(np.argmax(gain))
        if not gain[i] > tiny:
            if flips and flips % refresh_every:
                st.refresh()
                gain = st.gains()
                i = int(np.argmax(gain))
                if gain[i] > tiny:
                    continue
            break
        st.flip(i)
        flips += 1
        trace.append(trace[-1] - float(gain[i]))
        if flips % refresh_every == 0:
            st.refresh()
    P[:] = st.P
    return flips


def minimize_alternating(problem: OnePhaseProblem, u_init: GridFunction | None = None,
                         max_sweeps: int = 10_000, tol: float = 1e-12) -> MinimizerResult:
    """Harmonic replacement on the positivity set alternated with single-node flips.

    A sweep switches a node off when zeroing it (other values frozen) lowers I
    against the measure credit ``M h``, and on when its best positive value
    lowers I.  When sweeps stall, a greedy descent over single flips whose
    energy change includes the re-solve on the new positivity set (exact
    rank-one updates of the inverse) continues until no flip lowers I.  Every
    step is non-increasing in I.
    """
    C, r, h, M = problem.C, problem.r, problem.h, problem.M
    n = problem.idx.size
    if u_init is None:
        P = np.ones(n, bool)
    else:
        if u_init.grid != problem.grid:
            raise ValueError("grid mismatch")
        P = u_init.values[problem.idx] > 0
    diagC = np.diag(C).copy()
    u = _replace(problem, P)
    P = u > 0
    trace = [problem.functional(u)]
    for sweep in range(1, max_sweeps + 1):
        rho = C @ u - r
        flips = 0
        for i in range(n):
            if P[i]:
                ui = u[i]
                if h * (diagC[i] * ui * ui - 2 * ui * rho[i]) < M * h * (1 - 1e-12):
                    rho -= C[:, i] * ui
                    u[i] = 0.0
                    P[i] = False
                    flips += 1
            elif rho[i] < 0 and rho[i] * rho[i] / diagC[i] > M * (1 + 1e-12):
                t = -rho[i] / diagC[i]
                rho += C[:, i] * t
                u[i] = t
                P[i] = True
                flips += 1
        u = _replace(problem, P)
        P = u > 0
        trace.append(problem.functional(u))
        if trace[-1] > trace[-2] + 1e-12 * max(1.0, abs(trace[-2])):
            raise MinimizationError("energy increased during a sweep", trace)
        if flips == 0 and trace[-2] - trace[-1] < tol * max(1.0, abs(trace[-1])):
            if not _relaxed_descent(problem, P, trace):
                return _result(problem, u, trace, sweep)
            u = _replace(problem, P)
            P = u > 0
            trace.append(problem.functional(u))
    raise MinimizationError(f"no convergence within {max_sweeps} sweeps", trace)


def minimize_bruteforce_1d(problem: OnePhaseProblem, max_nodes: int = 64) -> MinimizerResult:
    """Best contact set among all unions of at most two intervals (exhaustive).

    Every candidate is the Dirichlet solve on the complement of the contact
    set, so its energy is ``-h r_P^T C_PP^{-1} r_P + M h |P|``.  Candidates are
    generated as chains of single-node removals from the positivity set; each
    removal is an exact rank-one downdate of ``C_PP^{-1}``.  Above
    ``max_nodes`` free nodes only contact sets ``[left end, x0]`` are scanned
    and ``exhaustive`` is False.
    """
    n = problem.idx.size
    if n > max_nodes:
        return _interval_ansatz(problem)
    C, r, h, M = problem.C, problem.r, problem.h, problem.M
    G0 = linalg.inv(C)
    u0 = G0 @ r
    E0 = -h * float(r @ u0)
    best = [E0 + M * h * n, ()]

    def offer(val, key):
        if val < best[0]:
            best[0], best[1] = val, key

    for a1 in range(n):
        G, u, E = G0.copy(), u0.copy(), E0
        for b1 in range(a1, n):
            # remove node b1: contact [a1, b1]
            gi = G[:, b1].copy()
            E += h * u[b1] ** 2 / gi[b1]
            u = u - gi * (u[b1] / gi[b1])
            G = G - np.outer(gi, gi) / gi[b1]
            len1 = b1 - a1 + 1
            offer(E + M * h * (n - len1), ((a1, b1),))
            a2 = np.arange(b1 + 2, n)
            if a2.size == 0:
                continue
            B = a2.size
            Gb = np.broadcast_to(G, (B, n, n)).copy()
            ub = np.broadcast_to(u, (B, n)).copy()
            Eb = np.full(B, E)
            rows = np.arange(B)
            for k in range(n - a2[0]):
                act = a2 + k < n
                if not np.any(act):
                    break
                ra = rows[act]
                node = a2[act] + k
                gi = Gb[ra, :, node]  # (b, n)
                piv = gi[np.arange(ra.size), node]
                ui = ub[ra, node]
                Eb[ra] += h * ui * ui / piv
                ub[ra] -= gi * (ui / piv)[:, None]
                Gb[ra] -= gi[:, :, None] * gi[:, None, :] / piv[:, None, None]
                vals = Eb[ra] + M * h * (n - len1 - (k + 1))
                j = int(np.argmin(vals))
                offer(float(vals[j]), ((a1, b1), (int(a2[act][j]), int(node[j]))))
    P = np.ones(n, bool)
    for a, b in best[1]:
        P[a:b + 1] = False
    u = _replace(problem, P)
    return _result(problem, u, [problem.functional(u)], 0, exhaustive=True)


def _interval_ansatz(problem: OnePhaseProblem) -> MinimizerResult:
    """Scan contact sets [first node, k]: positivity on the trailing nodes."""
    C, r, h, M = problem.C, problem.r, problem.h, problem.M
    n = r.size
    Crev = C[::-1, ::-1]
    rrev = r[::-1]
    Lc = linalg.cholesky(Crev, lower=True, check_finite=False)
    y = linalg.solve_triangular(Lc, rrev, lower=True, check_finite=False)
    # positivity on the last m nodes: E = -h |y[:m]|^2 (+ const), measure M h m
    m = np.arange(n + 1)
    vals = -h * np.concatenate([[0.0], np.cumsum(y * y)]) + M * h * m
    k = int(np.argmin(vals))
    P = np.zeros(n, bool)
    if k:
        P[n - k:] = True
    u = _replace(problem, P)
    return _result(problem, u, [problem.functional(u)], 0, exhaustive=False)


# ---------------------------------------------------------------------------
# free boundary and reports
# ---------------------------------------------------------------------------

def free_boundary_points(result: MinimizerResult) -> list[float]:
    """Contact nodes of Omega adjacent to a positivity node."""
    pos = result.positivity.mask
    con = result.contact.mask
    x = result.problem.grid.x
    out = []
    for i in np.flatnonzero(con):
        if (i > 0 and pos[i - 1]) or (i + 1 < pos.size and pos[i + 1]):
            out.append(float(x[i]))
    return out


def _ball(x, x0, r, h):
    return np.abs(x - x0) <= r + 1e-9 * h


def density_report(result: MinimizerResult, x0: float, radii) -> list[tuple]:
    """(r, |{u > 0} cap B_r(x0)| / |B_r|, resolved) per radius."""
    u = result.u
    x, h = u.grid.x, u.grid.h
    out = []
    for r in radii:
        sel = _ball(x, x0, r, h)
        ratio = h * np.count_nonzero(u.values[sel] > 0) / (2 * r)
        out.append((float(r), float(ratio), bool(r >= 4 * h)))
    return out


def nondegeneracy_report(result: MinimizerResult, x0: float, radii) -> list[tuple]:
    """(r, sup_{B_r(x0)} u / r^s) per radius."""
    u = result.u
    s = result.problem.kernel.s
    x, h = u.grid.x, u.grid.h
    return [(float(r), float(np.max(u.values[_ball(x, x0, r, h)]) / r**s)) for r in radii]


def interior_growth_constant(result: MinimizerResult, min_cells: int = 4) -> float:
    """min over positivity nodes of u(x) / dist(x, {u = 0})^s (distances >= min_cells h)."""
    u = result.u
    s = result.problem.kernel.s
    x, h = u.grid.x, u.grid.h
    zero = x[result.contact.mask]
    pos = np.flatnonzero(result.positivity.mask)
    if zero.size == 0 or pos.size == 0:
        return math.nan
    d = np.min(np.abs(x[pos][:, None] - zero[None, :]), axis=1)
    sel = d >= min_cells * h
    if not np.any(sel):
        return math.nan
    return float(np.min(u.values[pos][sel] / d[sel] ** s))


def optimal_regularity_report(result: MinimizerResult, x0: float, radii) -> ExponentFit:
    u = result.u
    x, h = u.grid.x, u.grid.h
    return fit_growth([(r, float(np.max(u.values[_ball(x, x0, r, h)]))) for r in radii])


def energy_ball_report(result: MinimizerResult, x0: float, radii) -> list[tuple]:
    """(R, E_{B_R x B_R}(u,u) / (R (M + R^{-2s} mean_{B_R} u^2))) per radius."""
    p = result.problem
    op = operator_for(p.kernel, p.grid)
    u = result.u.values
    x, h, s = p.grid.x, p.h, p.kernel.s
    out = []
    for R in radii:
        idx = np.flatnonzero(_ball(x, x0, R, h))
        d = np.abs(idx[:, None] - idx[None, :])
        diff = u[idx][:, None] - u[idx][None, :]
        e = 0.5 * float(np.sum(op.c[d] * diff * diff)) * h
        out.append((float(R), e / (R * (p.M + R ** (-2 * s) * float(np.mean(u[idx] ** 2))))))
    return out


def energy_comparison(result: MinimizerResult, center: float, radius: float) -> tuple[float, float]:
    """``(E(u - v), M |{u = 0} cap B|)`` for v the harmonic replacement of u in ``B = B_r(center)``.

    Minimality of u against the competitor v forces the first entry to be at
    most the second.
    """
    from .dirichlet import harmonic_replacement

    p = result.problem
    B = Region.ball(p.grid, center, radius) & p.omega
    if B.count == 0:
        raise ValueError("ball holds no node of Omega")
    v = harmonic_replacement(p.kernel, result.u, B)
    w = result.u.values - v.values
    lhs = p.stiffness.bilinear(w, w)
    rhs = p.M * p.h * int(np.count_nonzero(B.mask & (result.u.values <= 0)))
    return float(lhs), float(rhs)


def minimizer_certificate(result: MinimizerResult, tol: float = 1e-6) -> dict:
    """Discrete subsolution and harmonicity checks of a minimiser."""
    p = result.problem
    u = result.u.values[p.idx]
    Lu = p.C @ u - p.r
    pos = u > 0
    interior = pos.copy()
    interior[1:] &= pos[:-1]
    interior[:-1] &= pos[1:]
    rep = {
        "nonnegative": bool(np.all(result.u.values >= 0)),
        "max_Lu": float(np.max(Lu)),
        "max_abs_Lu_positive": float(np.max(np.abs(Lu[interior]))) if np.any(interior) else 0.0,
        "sup_u": float(np.max(result.u.values)),
    }
    rep["passed"] = rep["nonnegative"] and rep["max_Lu"] <= tol and rep["max_abs_Lu_positive"] <= tol
    return rep


def minmax_identity(a, b, c, d):
    """Both sides of ``(a v b - c v d)^2 + (a ^ b - c ^ d)^2 = (a-c)^2 + (b-d)^2 - 2 X``.

    ``X = (a-b)_+ (c-d)_- + (a-b)_- (c-d)_+`` with ``t_- = max(-t, 0)``.  The
    second product vanishes whenever ``a >= b`` or ``c <= d``; dropping it in
    the remaining case breaks the identity (``(0, 1, 2, 0)`` gives 1 vs 5).
    """
    a, b, c, d = (np.asarray(v, float) for v in (a, b, c, d))
    lhs = (np.maximum(a, b) - np.maximum(c, d)) ** 2 + (np.minimum(a, b) - np.minimum(c, d)) ** 2
    cross = np.maximum(a - b, 0) * np.maximum(d - c, 0) + np.maximum(b - a, 0) * np.maximum(c - d, 0)
    rhs = (a - c) ** 2 + (b - d) ** 2 - 2 * cross
    return lhs, rhs


def minmax_competitor_gap(result: MinimizerResult, phi_omega: np.ndarray) -> float:
    """I(u ^ phi) + I(u v phi) - 2 I(u) for a non-negative competitor on Omega."""
    p = result.problem
    u = result.u.values[p.idx]
    phi = np.asarray(phi_omega, float)
    if np.any(phi < 0):
        raise ValueError("competitors must be non-negative")
    return p.functional(np.minimum(u, phi)) + p.functional(np.maximum(u, phi)) - 2 * p.functional(u)


# ---------------------------------------------------------------------------
# the Step-1 fixture
# ---------------------------------------------------------------------------

def step1_problem(K: KernelSpec, nodes: int, M: float) -> OnePhaseProblem:
    """Omega = (-1, 0) with ``nodes`` free nodes; data 0 left of -1, 1 on [0, inf)."""
    h = 1.0 / (nodes + 1)
    grid = Grid.line(-1.0, 0.0, nodes + 2)
    vals = np.zeros(nodes + 2)
    vals[-1] = 1.0
    ext = ExteriorDescriptor(Exterior(), Exterior("constant", c=1.0))
    g = GridFunction(grid, vals, ext)
    omega = Region.interval(grid, -1.0, 0.0)
    assert abs(grid.h - h) < 1e-14
    return OnePhaseProblem(K, grid, omega, M, g)


@dataclass
class Step1Fixture:
    M: float
    result: MinimizerResult
    x0: float
    sweep: list  # (M, contact count)


def step1_fixture(K: KernelSpec, nodes: int, M_values=None, max_M: float = 2.0**20) -> Step1Fixture:
    """Smallest M in {2, 4, 8, ...} whose minimiser has a contact point.

    The free boundary point returned is the rightmost contact node with
    positivity to its right.
    """
    Ms = list(M_values) if M_values is not None else [2.0**k for k in range(1, int(math.log2(max_M)) + 1)]
    sweep = []
    for M in Ms:
        res = minimize_alternating(step1_problem(K, nodes, M))
        nc = res.contact.count
        sweep.append((M, nc))
        if 0 < nc < res.problem.omega.count:
            pts = [x for x in free_boundary_points(res)
                   if res.positivity.mask[res.problem.grid.index_of(x) + 1]]
            if pts:
                return Step1Fixture(M, res, max(pts), sweep)
    raise MinimizationError("no M in the sweep produced a contact point", sweep)
