"""Uniform grids, grid functions with analytic exterior data, and regions."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .kernels import KernelSpec, power_kernel


class MeshError(ValueError):
    pass


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid in one or two dimensions.

    ``axes`` holds one ``(min, max, nodes)`` triple per dimension; all axes
    share the same spacing.
    """

    axes: tuple

    def __post_init__(self):
        if len(self.axes) not in (1, 2):
            raise MeshError("grids are one- or two-dimensional")
        spacings = []
        for lo, hi, n in self.axes:
            if not lo < hi:
                raise MeshError(f"axis needs min < max, got {lo}, {hi}")
            if n < 8:
                raise MeshError("at least 8 nodes per axis")
            spacings.append((hi - lo) / (n - 1))
        if len(spacings) == 2 and not math.isclose(spacings[0], spacings[1], rel_tol=1e-9):
            raise MeshError("axes must share one spacing")

    @classmethod
    def line(cls, lo: float, hi: float, nodes: int) -> "Grid":
        return cls(((float(lo), float(hi), int(nodes)),))

    @classmethod
    def with_spacing(cls, lo: float, hi: float, h: float) -> "Grid":
        n = int(round((hi - lo) / h)) + 1
        return cls.line(lo, lo + (n - 1) * h, n)

    @property
    def dimension(self) -> int:
        return len(self.axes)

    @property
    def h(self) -> float:
        lo, hi, n = self.axes[0]
        return (hi - lo) / (n - 1)

    @property
    def shape(self) -> tuple:
        return tuple(n for _, _, n in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def lo(self) -> float:
        return self.axes[0][0]

    @property
    def hi(self) -> float:
        return self.axes[0][1]

    def coords(self, axis: int = 0) -> np.ndarray:
        lo, hi, n = self.axes[axis]
        return lo + self.h * np.arange(n)

    @property
    def x(self) -> np.ndarray:
        return self.coords(0)

    def points(self) -> np.ndarray:
        if self.dimension == 1:
            return self.x
        X, Y = np.meshgrid(self.coords(0), self.coords(1), indexing="ij")
        return np.stack([X, Y], axis=-1)

    def index_of(self, x: float) -> int:
        """Nearest node index (1D)."""
        i = int(round((x - self.lo) / self.h))
        return min(max(i, 0), self.shape[0] - 1)

    def contains(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        tol = 1e-12 * max(1.0, abs(self.lo), abs(self.hi))
        if self.dimension == 1:
            return bool(self.lo - tol <= x[0] <= self.hi + tol)
        return all(lo - tol <= xi <= hi + tol for (lo, hi, _), xi in zip(self.axes, x))


# ---------------------------------------------------------------------------
# exterior data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Exterior:
    """Values of a function on one side of the grid window.

    ``zero``, ``constant`` (c), ``power`` (A |x - origin|^beta) or
    ``sampled``: piecewise linear through ``(xs, values)`` followed by the
    ``tail`` rule beyond the sampled range.
    """

    kind: str = "zero"
    c: float = 0.0
    A: float = 0.0
    beta: float = 0.0
    origin: float = 0.0
    xs: tuple = ()
    values: tuple = ()
    tail: "Exterior | None" = None
    outward: int = 1  # sampled rules: tail applies beyond xs[-1] (+1) or below xs[0] (-1)

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "power", "sampled"):
            raise MeshError(f"unknown exterior kind {self.kind!r}")
        if not math.isfinite(self.c):
            raise MeshError("constant exterior must be finite")
        if self.kind == "power" and (self.A < 0 or self.beta < 0):
            raise MeshError("power exterior needs A >= 0 and beta >= 0")
        if self.kind == "sampled":
            if len(self.xs) < 2 or len(self.xs) != len(self.values):
                raise MeshError("sampled exterior needs matching xs/values (>= 2 points)")
            if not np.all(np.isfinite(self.values)):
                raise MeshError("exterior values must be finite")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "constant":
            return np.full_like(x, self.c)
        if self.kind == "power":
            return self.A * np.abs(x - self.origin) ** self.beta
        xs = np.asarray(self.xs)
        vals = np.asarray(self.values)
        out = np.interp(x, xs, vals)
        if self.tail is not None:
            beyond = x > xs[-1] if self.outward > 0 else x < xs[0]
            out = np.where(beyond, self.tail(x), out)
        return out

    @property
    def growth(self) -> float:
        """Exponent of the far-field growth."""
        if self.kind == "power":
            return self.beta
        if self.kind == "sampled":
            return self.tail.growth if self.tail is not None else 0.0
        return 0.0

    def transformed(self, x0: float, r: float, s: float) -> "Exterior":
        """Rule for y -> F(x0 + r y) / r^s."""
        k = r**-s
        if self.kind == "zero":
            return self
        if self.kind == "constant":
            return replace(self, c=self.c * k)
        if self.kind == "power":
            return replace(self, A=self.A * r**self.beta * k, origin=(self.origin - x0) / r)
        xs = (np.asarray(self.xs) - x0) / r
        vals = np.asarray(self.values) * k
        order = np.argsort(xs)
        tail = self.tail.transformed(x0, r, s) if self.tail is not None else None
        return Exterior("sampled", xs=tuple(xs[order]), values=tuple(vals[order]), tail=tail,
                        outward=self.outward)

    def mirrored(self) -> "Exterior":
        """Rule for y -> F(-y)."""
        if self.kind in ("zero", "constant"):
            return self
        if self.kind == "power":
            return replace(self, origin=-self.origin)
        xs = -np.asarray(self.xs)[::-1]
        vals = np.asarray(self.values)[::-1]
        tail = self.tail.mirrored() if self.tail is not None else None
        return Exterior("sampled", xs=tuple(xs), values=tuple(vals), tail=tail, outward=-self.outward)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "constant":
            d["c"] = self.c
        elif self.kind == "power":
            d.update(A=self.A, beta=self.beta, origin=self.origin)
        elif self.kind == "sampled":
            d.update(xs=list(map(float, self.xs)), values=list(map(float, self.values)),
                     tail=self.tail.to_dict() if self.tail is not None else None,
                     outward=self.outward)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Exterior":
        kind = d["kind"]
        if kind == "sampled":
            tail = cls.from_dict(d["tail"]) if d.get("tail") else None
            return cls("sampled", xs=tuple(d["xs"]), values=tuple(d["values"]), tail=tail,
                       outward=int(d.get("outward", 1)))
        return cls(kind, c=d.get("c", 0.0), A=d.get("A", 0.0), beta=d.get("beta", 0.0),
                   origin=d.get("origin", 0.0))


@dataclass(frozen=True)
class ExteriorDescriptor:
    """Exterior data left and right of a 1D window (2D grids use ``right`` radially
    and support only zero/constant rules)."""

    left: Exterior = field(default_factory=Exterior)
    right: Exterior = field(default_factory=Exterior)

    @classmethod
    def zero(cls) -> "ExteriorDescriptor":
        return cls()

    @classmethod
    def constant(cls, c: float) -> "ExteriorDescriptor":
        e = Exterior("constant", c=float(c))
        return cls(e, e)

    @classmethod
    def power(cls, A: float, beta: float, side: str = "right", origin: float = 0.0) -> "ExteriorDescriptor":
        p = Exterior("power", A=float(A), beta=float(beta), origin=float(origin))
        if side == "right":
            return cls(Exterior(), p)
        if side == "left":
            return cls(p, Exterior())
        if side == "both":
            return cls(p, p)
        raise MeshError(f"unknown side {side!r}")

    @property
    def growth(self) -> float:
        return max(self.left.growth, self.right.growth)

    def check_integrable(self, s: float):
        if self.growth >= 2 * s:
            raise MeshError(f"exterior growth {self.growth} >= 2s = {2 * s}: not in L^1_2s")

    def to_dict(self) -> dict:
        return {"left": self.left.to_dict(), "right": self.right.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "ExteriorDescriptor":
        return cls(Exterior.from_dict(d["left"]), Exterior.from_dict(d["right"]))


# ---------------------------------------------------------------------------
# grid functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray
    exterior: ExteriorDescriptor = field(default_factory=ExteriorDescriptor)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise MeshError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise MeshError("grid values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.grid.dimension == 2:
            for side in (self.exterior.left, self.exterior.right):
                if side.kind not in ("zero", "constant"):
                    raise MeshError("2D grid functions support zero/constant exterior data only")

    @classmethod
    def from_function(cls, grid: Grid, f: Callable, exterior: ExteriorDescriptor | None = None):
        return cls(grid, np.asarray(f(grid.points()), dtype=float) * np.ones(grid.shape),
                   exterior or ExteriorDescriptor())

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values, self.exterior)

    def __call__(self, x):
        """Piecewise (bi)linear inside the window; exterior rules outside."""
        g = self.grid
        if g.dimension == 1:
            x = np.asarray(x, dtype=float)
            out = np.interp(x, g.x, self.values)
            out = np.where(x > g.hi, self.exterior.right(x), out)
            out = np.where(x < g.lo, self.exterior.left(x), out)
            return out
        from scipy.interpolate import RegularGridInterpolator

        pts = np.asarray(x, dtype=float)
        interp = RegularGridInterpolator((g.coords(0), g.coords(1)), self.values,
                                         bounds_error=False, fill_value=np.nan)
        out = interp(pts)
        outside = np.isnan(out)
        if np.any(outside):
            out[outside] = self.exterior.right(np.zeros(np.count_nonzero(outside)))
        return out

    # -- serialisation -------------------------------------------------------
    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            if self.grid.dimension == 1:
                w.writerow(["x", "value"])
                for x, v in zip(self.grid.x, self.values):
                    w.writerow([repr(float(x)), repr(float(v))])
            else:
                w.writerow(["x", "y", "value"])
                P = self.grid.points().reshape(-1, 2)
                for (x, y), v in zip(P, self.values.ravel()):
                    w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])
        sidecar = {"axes": [list(a) for a in self.grid.axes], "exterior": self.exterior.to_dict()}
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))

    @classmethod
    def from_csv(cls, path) -> "GridFunction":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        grid = Grid(tuple((float(a), float(b), int(n)) for a, b, n in meta["axes"]))
        with path.open() as fh:
            rows = list(csv.reader(fh))[1:]
        vals = np.array([float(r[-1]) for r in rows]).reshape(grid.shape)
        return cls(grid, vals, ExteriorDescriptor.from_dict(meta["exterior"]))


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Region:
    """Set of grid nodes (boolean mask) standing for an open or closed set."""

    grid: Grid
    mask: np.ndarray
    closed: bool = False

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.shape != self.grid.shape:
            raise MeshError("region mask does not match grid")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @classmethod
    def interval(cls, grid: Grid, a: float, b: float, closed: bool = False) -> "Region":
        x = grid.x
        eps = 1e-9 * grid.h
        if closed:
            m = (x >= a - eps) & (x <= b + eps)
        else:
            m = (x > a + eps) & (x < b - eps)
        return cls(grid, m, closed)

    @classmethod
    def ball(cls, grid: Grid, center, radius: float, closed: bool = False) -> "Region":
        P = grid.points()
        c = np.asarray(center, dtype=float)
        d = np.abs(P - c) if grid.dimension == 1 else np.linalg.norm(P - c, axis=-1)
        eps = 1e-9 * grid.h
        m = d <= radius + eps if closed else d < radius - eps
        return cls(grid, m, closed)

    @classmethod
    def box(cls, grid: Grid, lo: Sequence[float], hi: Sequence[float], closed: bool = False) -> "Region":
        P = grid.points()
        eps = 1e-9 * grid.h
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        if closed:
            m = np.all((P >= lo - eps) & (P <= hi + eps), axis=-1)
        else:
            m = np.all((P > lo + eps) & (P < hi - eps), axis=-1)
        return cls(grid, m, closed)

    @classmethod
    def from_indices(cls, grid: Grid, idx) -> "Region":
        m = np.zeros(grid.shape, dtype=bool)
        m[np.asarray(idx, dtype=int)] = True
        return cls(grid, m)

    def __or__(self, other: "Region") -> "Region":
        return Region(self.grid, self.mask | other.mask, self.closed and other.closed)

    def __and__(self, other: "Region") -> "Region":
        return Region(self.grid, self.mask & other.mask, self.closed and other.closed)

    def __sub__(self, other: "Region") -> "Region":
        return Region(self.grid, self.mask & ~other.mask, self.closed)

    def complement(self) -> "Region":
        return Region(self.grid, ~self.mask, not self.closed)

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    @property
    def measure(self) -> float:
        return self.count * self.grid.h**self.grid.dimension

    def components(self) -> list[tuple[int, int]]:
        """Sorted disjoint index ranges ``(first, last)`` (1D)."""
        if self.grid.dimension != 1:
            raise MeshError("components are defined for 1D regions")
        idx = self.indices
        if idx.size == 0:
            return []
        breaks = np.flatnonzero(np.diff(idx) > 1)
        starts = np.concatenate([[idx[0]], idx[breaks + 1]])
        ends = np.concatenate([idx[breaks], [idx[-1]]])
        return [(int(a), int(b)) for a, b in zip(starts, ends)]


# ---------------------------------------------------------------------------
# integrals against kernels on the exterior
# ---------------------------------------------------------------------------

_GL_X, _GL_W = leggauss(16)


def exterior_kernel_integral(rule: Exterior, x0, start, K: KernelSpec, side: str = "right",
                             panel: float = 0.25, power: int = 1):
    """int_{t >= start} F(x0 +/- t)^power K(t) dt for a one-sided exterior rule ``F``.

    Vectorised over arrays ``x0`` and ``start`` (both 1D, start > 0);
    ``power`` is 1 or 2.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    start = np.broadcast_to(np.asarray(start, dtype=float), x0.shape).copy()
    if side == "left":
        return exterior_kernel_integral(rule.mirrored(), -x0, start, K, "right", panel, power)
    if rule.kind == "zero":
        return np.zeros_like(x0)
    if rule.kind == "constant":
        return rule.c**power * K.moment(0.0, start, np.inf)
    if rule.kind == "power":
        if power == 2:
            rule = replace(rule, A=rule.A**2, beta=2 * rule.beta)
        return _power_rule_integral(rule, x0, start, K, panel)
    # sampled: exact moments against the piecewise linear segment
    xs = np.asarray(rule.xs)
    vs = np.asarray(rule.values)
    t_lo = xs[None, :-1] - x0[:, None]
    t_hi = xs[None, 1:] - x0[:, None]
    slope = (vs[1:] - vs[:-1]) / (xs[1:] - xs[:-1])
    a = np.maximum(t_lo, start[:, None])
    b = t_hi
    active = b > a
    total = np.zeros_like(x0)
    if np.any(active):
        aa = np.where(active, a, 1.0)
        bb = np.where(active, b, 1.0)
        m0 = K.moment(0.0, aa, bb)
        m1 = K.moment(1.0, aa, bb)
        base = vs[None, :-1] - t_lo * slope[None, :]
        if power == 1:
            contrib = base * m0 + slope[None, :] * m1
        else:
            m2 = K.moment(2.0, aa, bb)
            contrib = base**2 * m0 + 2 * base * slope[None, :] * m1 + slope[None, :] ** 2 * m2
        total += np.where(active, contrib, 0.0).sum(axis=1)
    # before the first sample (clamped constant) -- only if start precedes it
    first = xs[0] - x0
    pre = start < first
    if np.any(pre):
        total[pre] += vs[0] ** power * K.moment(0.0, start[pre], first[pre])
    last = np.maximum(xs[-1] - x0, start)
    if rule.tail is not None:
        total += exterior_kernel_integral(rule.tail, x0, last, K, "right", panel, power)
    return total


def _power_rule_integral(rule: Exterior, x0, start, K: KernelSpec, panel: float):
    """int_{t>=start} A |x0 + t - origin|^beta K(t) dt."""
    A, beta = rule.A, rule.beta
    if A == 0.0:
        return np.zeros_like(x0)
    c = x0 - rule.origin  # y - origin = t + c
    if beta == 0.0:
        return A * K.moment(0.0, start, np.inf)
    if np.any(start + c < -1e-12 * np.maximum(1.0, np.abs(c))):
        raise MeshError("power exterior origin lies inside the exterior range")
    T = np.maximum(start, np.abs(c)) * 1e3
    T = np.maximum(T, start * 1.0001)
    out = np.zeros_like(x0)
    lo_log = np.log(start)
    hi_log = np.log(T)
    npan = np.maximum(1, np.ceil((hi_log - lo_log) / panel).astype(int))
    maxp = int(npan.max())
    # uniform panels per node in log t
    width = (hi_log - lo_log) / npan
    for jj in range(maxp):
        use = jj < npan
        a = lo_log + jj * width
        mid = a + width / 2
        for xg, wg in zip(_GL_X, _GL_W):
            tau = mid + xg * width / 2
            t = np.exp(tau)
            vals = A * np.abs(t + c) ** beta * K.density(t) * t
            out += np.where(use, wg * width / 2 * vals, 0.0)
    # asymptotic tail: (t + c)^beta = t^beta (1 + c/t)^beta
    tail = (K.moment(beta, T, np.inf) + beta * c * K.moment(beta - 1.0, T, np.inf)
            + 0.5 * beta * (beta - 1.0) * c * c * K.moment(beta - 2.0, T, np.inf))
    return out + A * tail


# ---------------------------------------------------------------------------
# tail functional, seminorm, blow-ups
# ---------------------------------------------------------------------------

def tail(u: GridFunction, R: float, x0, s: float) -> float:
    """R^{2s} int_{|y - x0| > R} |u(y)| |y - x0|^{-n-2s} dy."""
    if R <= 0:
        raise MeshError("tail radius must be positive")
    u.exterior.check_integrable(s)
    g = u.grid
    if g.dimension == 2:
        return _tail_2d(u, R, np.asarray(x0, float), s)
    x0 = float(x0)
    W = power_kernel(1, s, 1.0)
    x = g.x
    v = np.abs(u.values)
    total = 0.0
    # window part: exact power-weight moments against the linear interpolant of |u|
    for sgn in (1.0, -1.0):
        t_a = sgn * (x[:-1] - x0)
        t_b = sgn * (x[1:] - x0)
        lo = np.minimum(t_a, t_b)
        hi = np.maximum(t_a, t_b)
        a = np.maximum(lo, R)
        ok = hi > a
        if not np.any(ok):
            continue
        # linear in t on each cell: value = va + (t - ta)(vb - va)/(tb - ta)
        va = np.where(t_a <= t_b, v[:-1], v[1:])
        vb = np.where(t_a <= t_b, v[1:], v[:-1])
        slope = (vb - va) / (hi - lo)
        m0 = W.moment(0.0, a[ok], hi[ok])
        m1 = W.moment(1.0, a[ok], hi[ok])
        total += float(np.sum((va[ok] - lo[ok] * slope[ok]) * m0 + slope[ok] * m1))
    # exterior parts
    for side, edge in (("right", g.hi), ("left", g.lo)):
        rule = u.exterior.right if side == "right" else u.exterior.left
        dist = (edge - x0) if side == "right" else (x0 - edge)
        start = max(R, dist)
        if start <= 0:
            start = R
        absrule = _abs_rule(rule)
        total += float(exterior_kernel_integral(absrule, np.array([x0]), np.array([start]), W, side)[0])
    return R ** (2 * s) * total


def _abs_rule(rule: Exterior) -> Exterior:
    if rule.kind == "constant":
        return replace(rule, c=abs(rule.c))
    if rule.kind == "sampled":
        return replace(rule, values=tuple(abs(v) for v in rule.values),
                       tail=_abs_rule(rule.tail) if rule.tail is not None else None)
    return rule


def _tail_2d(u: GridFunction, R, x0, s):
    g = u.grid
    h = g.h
    P = g.points()
    d = np.linalg.norm(P - x0, axis=-1)
    w = np.full(g.shape, h * h)
    w[0, :] *= 0.5
    w[-1, :] *= 0.5
    w[:, 0] *= 0.5
    w[:, -1] *= 0.5
    inside = d > R
    with np.errstate(divide="ignore"):
        total = float(np.sum(np.where(inside, np.abs(u.values) * d ** (-2 - 2 * s) * w, 0.0)))
    c = abs(u.exterior.right.c) if u.exterior.right.kind == "constant" else 0.0
    if c:
        # exterior of the box: radial integral beyond the box minus the box part
        from scipy import integrate

        (xa, xb, _), (ya, yb, _) = g.axes

        def outside_box(theta):
            ct, st = math.cos(theta), math.sin(theta)
            rs = []
            for lim, comp in ((xb - x0[0], ct), (xa - x0[0], ct), (yb - x0[1], st), (ya - x0[1], st)):
                if comp != 0 and lim / comp > 0:
                    rs.append(lim / comp)
            rb = max(min(rs), R)
            return rb ** (-2 * s) / (2 * s)

        total += c * integrate.quad(outside_box, 0, 2 * math.pi, limit=200)[0]
    return R ** (2 * s) * total


def hs_seminorm(u: GridFunction, A: Region, B: Region, s: float) -> float:
    """(sum over node pairs in A x B of (u_i - u_j)^2 |x_i - x_j|^{-n-2s} w_i w_j)^{1/2}.

    Pair weights are exact power-kernel moments against hat functions, the
    same construction as the stiffness assembly, so that the divergence of
    the seminorm for jump functions shows up as growth under refinement.
    """
    g = u.grid
    if g.dimension == 2:
        P = g.points().reshape(-1, 2)
        v = u.values.ravel()
        ia = np.flatnonzero(A.mask.ravel())
        ib = np.flatnonzero(B.mask.ravel())
        D = np.linalg.norm(P[ia, None, :] - P[None, ib, :], axis=-1)
        with np.errstate(divide="ignore"):
            W = np.where(D > 0, D ** (-2 - 2 * s), 0.0)
        return float(math.sqrt(np.sum((v[ia, None] - v[None, ib]) ** 2 * W) * g.h**4))
    from .nonlocal_op import pair_weights

    W = power_kernel(1, s, 1.0)
    w = pair_weights(W, g.h, g.shape[0])
    ia = A.indices
    ib = B.indices
    d = np.abs(ia[:, None] - ib[None, :])
    v = u.values
    total = np.sum((v[ia, None] - v[None, ib]) ** 2 * w[d]) * g.h
    return float(math.sqrt(total))


def blow_up(u: GridFunction, x0, r: float, target: Grid, s: float) -> GridFunction:
    """u(x0 + r x) / r^s resampled on ``target``; grid data of ``u`` that falls
    outside the target window is kept as a sampled exterior."""
    if r <= 0:
        raise MeshError("blow-up scale must be positive")
    g = u.grid
    if not g.contains(x0):
        raise MeshError("blow-up centre outside the grid")
    if g.dimension == 2:
        x0 = np.asarray(x0, float)
        lo = x0 + r * np.array([a[0] for a in target.axes])
        hi = x0 + r * np.array([a[1] for a in target.axes])
        src_lo = np.array([a[0] for a in g.axes])
        src_hi = np.array([a[1] for a in g.axes])
        if np.any(lo > src_lo + 1e-12) or np.any(hi < src_hi - 1e-12):
            raise MeshError("2D blow-up must cover the source window (no sampled exteriors in 2D)")
        vals = u(x0 + r * target.points().reshape(-1, 2)).reshape(target.shape) * r**-s
        ext = ExteriorDescriptor(u.exterior.left.transformed(0.0, r, s),
                                 u.exterior.right.transformed(0.0, r, s))
        return GridFunction(target, vals, ext)
    x0 = float(x0)
    vals = u(x0 + r * target.x) * r**-s
    x = g.x
    k = r**-s
    sides = {}
    for side in ("right", "left"):
        rule = getattr(u.exterior, side)
        new_rule = rule.transformed(x0, r, s)
        y = (x - x0) / r
        if side == "right":
            keep = y >= target.hi
            if np.any(keep):
                i0 = max(int(np.argmax(keep)) - 1, 0)
                ys = np.concatenate([[target.hi], y[i0 + 1:]]) if y[i0 + 1] > target.hi else y[i0 + 1:]
                vs = u(x0 + r * ys) * k
                if ys.size >= 2:
                    new_rule = Exterior("sampled", xs=tuple(ys), values=tuple(vs), tail=new_rule)
        else:
            keep = y <= target.lo
            if np.any(keep):
                i1 = int(np.flatnonzero(keep)[-1])
                ys = y[: i1 + 1]
                if ys[-1] < target.lo:
                    ys = np.concatenate([ys, [target.lo]])
                vs = u(x0 + r * ys) * k
                if ys.size >= 2:
                    new_rule = Exterior("sampled", xs=tuple(ys), values=tuple(vs), tail=new_rule,
                                        outward=-1)
        sides[side] = new_rule
    return GridFunction(target, vals, ExteriorDescriptor(sides["left"], sides["right"]))
