"""Growth-exponent fits, discrete Hölder seminorms and radius ladders."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import GridFunction, Region


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class ExponentFit:
    exponent: float
    coefficient: float
    r2: float
    r_range: tuple
    count: int
    dropped: int = 0

    def within(self, target: float, tol: float) -> bool:
        return abs(self.exponent - target) <= tol

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "coefficient": self.coefficient, "r2": self.r2,
                "r_min": self.r_range[0], "r_max": self.r_range[1], "count": self.count,
                "dropped": self.dropped}


def fit_growth(samples) -> ExponentFit:
    """Least-squares fit of ``value ~ C r^alpha`` on log-log axes.

    Samples whose value is at most ten machine epsilons are dropped (and
    counted); at least four usable samples are required.
    """
    arr = np.asarray(list(samples), dtype=float).reshape(-1, 2)
    r, v = arr[:, 0], arr[:, 1]
    if np.any(r <= 0):
        raise FitError("radii must be positive")
    if np.any(v < 0):
        raise FitError("values must be non-negative")
    keep = v > 10 * np.finfo(float).eps
    if keep.sum() < 4:
        raise FitError(f"need at least 4 positive samples, got {int(keep.sum())}")
    x = np.log(r[keep])
    y = np.log(v[keep])
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0:
        raise FitError("radii must not all coincide")
    slope = np.sum((x - xm) * (y - ym)) / sxx
    icpt = ym - slope * xm
    ss_res = np.sum((y - icpt - slope * x) ** 2)
    ss_tot = np.sum((y - ym) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ExponentFit(float(slope), float(math.exp(icpt)), float(min(max(r2, 0.0), 1.0)),
                       (float(r[keep].min()), float(r[keep].max())), int(keep.sum()),
                       int((~keep).sum()))


def dyadic_ladder(r_min: float, r_max: float) -> list[float]:
    """Radii ``r_max * 2^-k`` down to (and including) the first one >= ``r_min``."""
    if not 0 < r_min <= r_max:
        raise FitError("need 0 < r_min <= r_max")
    out = []
    r = r_max
    while r >= r_min * (1 - 1e-12):
        out.append(r)
        r /= 2
    return out[::-1]


def holder_seminorm(u: GridFunction, A: Region, alpha: float, max_pairs: int = 1_000_000,
                    seed: int = 0) -> float:
    """max over node pairs in A of |u(x) - u(y)| / |x - y|^alpha.

    All pairs are used when there are at most ``max_pairs``; otherwise pairs
    are drawn with a seeded generator, an equal share per distance (1D) or per
    dyadic distance band (2D).
    """
    if not 0 < alpha <= 1:
        raise FitError("alpha must lie in (0, 1]")
    idx = A.indices
    m = idx.size
    if m < 2:
        return 0.0
    vals = u.values.ravel()[idx]
    pts = u.grid.points().reshape(-1, u.grid.dimension)[idx]
    total = m * (m - 1) // 2
    if total <= max_pairs:
        best = 0.0
        step = max(1, max_pairs // m)
        for a in range(0, m, step):
            sl = slice(a, a + step)
            d = _dist(pts[sl, None, :], pts[None, :, :])
            with np.errstate(divide="ignore", invalid="ignore"):
                q = np.where(d > 0, np.abs(vals[sl, None] - vals[None, :]) / d**alpha, 0.0)
            best = max(best, float(q.max()))
        return best
    rng = np.random.default_rng(seed)
    if u.grid.dimension == 1:
        # positions of A are sorted; stratify by index offset
        per = max(1, max_pairs // (m - 1))
        best = 0.0
        for off in range(1, m):
            n_here = m - off
            if n_here <= per:
                i = np.arange(n_here)
            else:
                i = rng.choice(n_here, size=per, replace=False)
            d = np.abs(pts[i + off, 0] - pts[i, 0])
            q = np.abs(vals[i + off] - vals[i]) / d**alpha
            best = max(best, float(q.max()))
        return best
    i = rng.integers(0, m, size=4 * max_pairs)
    j = rng.integers(0, m, size=4 * max_pairs)
    d = _dist(pts[i], pts[j])
    ok = d > 0
    i, j, d = i[ok], j[ok], d[ok]
    band = np.floor(np.log2(d / d.min())).astype(int)
    best = 0.0
    nb = band.max() + 1
    per = max(1, max_pairs // nb)
    for b in range(nb):
        sel = np.flatnonzero(band == b)[:per]
        if sel.size:
            q = np.abs(vals[i[sel]] - vals[j[sel]]) / d[sel] ** alpha
            best = max(best, float(q.max()))
    return best


def _dist(a, b):
    return np.sqrt(np.sum((a - b) ** 2, axis=-1))


def convergence_order(hs, errors) -> float:
    """Observed order of ``errors ~ h^p`` (log-log slope)."""
    return fit_growth(zip(hs, errors)).exponent
