"""Jump kernels in the ellipticity class with power envelope |h|^{-n-2s}.

Every kernel is stored as ``K(h) = m(h) |h|^{-n-2s}`` with a bounded
modulation ``m`` taking values in ``[lam, Lam]``.  The built-in families have
radial modulations whose radial moments are available in closed form, which
is what the grid discretisation in :mod:`nonlocal_lab.nonlocal_op` consumes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import gamma

FAMILIES = ("fractional-laplacian", "power-envelope-oscillating", "dyadic-piecewise", "custom")

# Log-frequency for which the oscillating kernel is invariant under h -> 2h.
DYADIC_FREQUENCY = 2.0 * math.pi / math.log(2.0)


class KernelError(ValueError):
    pass


def fractional_laplacian_constant(n: int, s: float) -> float:
    """c_{n,s} such that 2 p.v. int (u(x)-u(x+h)) c/2 |h|^{-n-2s} dh = (-Delta)^s u."""
    return 4.0**s * gamma(n / 2.0 + s) / (math.pi ** (n / 2.0) * abs(gamma(-s)))


def _expm1(z):
    z = np.asarray(z)
    if not np.iscomplexobj(z):
        return np.expm1(z)
    x, y = z.real, z.imag
    # exp(x+iy) - 1 without cancellation for small |z|
    re = np.expm1(x) * np.cos(y) - 2.0 * np.sin(y / 2.0) ** 2
    im = np.exp(x) * np.sin(y)
    return re + 1j * im


def _powint(a, b, e):
    """int_a^b t^(e-1) dt for 0 < a <= b <= inf, e real or complex (vectorised)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    e = complex(e) if isinstance(e, complex) else float(e)
    a, b = np.broadcast_arrays(a, b)
    finite = np.isfinite(b)
    out = np.zeros(a.shape, dtype=complex if isinstance(e, complex) else float)
    if e == 0:
        if not np.all(finite):
            raise KernelError("divergent tail integral (exponent 0)")
        return np.log(b / a)
    zero = a == 0.0
    if np.any(zero) and np.real(e) <= 0:
        raise KernelError("divergent integral at the origin")
    aa = np.where(zero, 1.0, a)
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.where(finite, np.log(np.where(finite, b, 1.0) / aa), 0.0)
        fin = aa**e * _expm1(e * lr) / e
        if np.any(zero):
            fin = np.where(zero, np.where(finite, b, 1.0) ** e / e, fin)
    if not np.all(finite):
        if np.real(e) >= 0:
            raise KernelError("divergent tail integral")
        inf = -(a**e) / e
        out = np.where(finite, fin, inf)
    else:
        out = fin
    return out


@dataclass(frozen=True)
class KernelSpec:
    """Symmetric kernel ``K(h) = m(h)|h|^{-n-2s}`` with ``lam <= m <= Lam``.

    ``modulation`` is only used by the ``custom`` family; it receives an array
    of displacements (shape ``(..., n)``, or ``(...)`` when ``n == 1``).
    """

    dimension: int
    s: float
    lam: float
    Lam: float
    family: str
    log_frequency: float = 0.0
    log_shift: float = 0.0
    modulation_fn: Callable | None = field(default=None, compare=False, repr=False)
    radial: bool = True

    def __post_init__(self):
        if not (0.0 < self.s < 1.0):
            raise KernelError(f"order s must lie in (0,1), got {self.s}")
        if self.dimension < 1:
            raise KernelError("dimension must be a positive integer")
        if not (0.0 < self.lam <= self.Lam):
            raise KernelError(f"need 0 < lam <= Lam, got {self.lam}, {self.Lam}")
        if self.family not in FAMILIES:
            raise KernelError(f"unknown kernel family {self.family!r}")
        if self.family == "custom" and self.modulation_fn is None:
            raise KernelError("custom kernels need a modulation function")

    # -- pointwise evaluation ------------------------------------------------
    def _norm(self, h):
        h = np.asarray(h, dtype=float)
        if self.dimension == 1:
            return np.abs(h)
        return np.linalg.norm(h, axis=-1)

    def radial_modulation(self, r):
        """m as a function of |h| (radial families only)."""
        r = np.asarray(r, dtype=float)
        if self.family == "fractional-laplacian":
            return np.full(r.shape, self.lam)
        if self.family == "power-envelope-oscillating":
            phase = self.log_frequency * (np.log(r) + self.log_shift)
            return self.lam + (self.Lam - self.lam) * (1.0 + np.sin(phase)) / 2.0
        if self.family == "dyadic-piecewise":
            level = np.floor(np.log2(r) + self.log_shift / math.log(2.0))
            return np.where(np.mod(level, 2.0) == 0.0, self.lam, self.Lam)
        if self.dimension == 1:
            return np.asarray(self.modulation_fn(r), dtype=float)
        raise KernelError("radial modulation of a non-radial custom kernel")

    def modulation(self, h):
        if self.family == "custom":
            return np.asarray(self.modulation_fn(np.asarray(h, dtype=float)), dtype=float)
        return self.radial_modulation(self._norm(h))

    def density(self, h):
        """K(h); undefined (inf) at h = 0."""
        r = self._norm(h)
        with np.errstate(divide="ignore"):
            return self.modulation(h) * r ** (-self.dimension - 2.0 * self.s)

    def __call__(self, h):
        return self.density(h)

    # -- 1D radial moments -----------------------------------------------------
    def moment(self, p: float, a, b):
        """int_a^b t^p K(t) dt for 0 < a <= b <= inf (one-dimensional kernels).

        Closed form for the built-in families; adaptive quadrature otherwise.
        """
        if self.dimension != 1:
            raise KernelError("radial moments are defined for one-dimensional kernels")
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        e = p - 2.0 * self.s  # t^p K = m t^(e-1)
        fam = self.family
        if fam == "fractional-laplacian":
            return self.lam * _powint(a, b, e)
        if fam == "power-envelope-oscillating":
            mean = 0.5 * (self.lam + self.Lam)
            amp = 0.5 * (self.Lam - self.lam)
            if amp == 0.0 or self.log_frequency == 0.0:
                return self.radial_modulation(np.ones(1))[0] * _powint(a, b, e)
            w = self.log_frequency
            osc = np.exp(1j * w * self.log_shift) * _powint(a, b, e + 1j * w)
            return mean * _powint(a, b, e) + amp * np.imag(osc)
        if fam == "dyadic-piecewise":
            return self._dyadic_moment(e, a, b)
        return self._quad_moment(p, a, b)

    def _dyadic_moment(self, e, a, b):
        a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
        zero = a == 0.0
        if np.any(zero):
            if e <= 0:
                raise KernelError("divergent integral at the origin")
            # the modulation repeats after two dyadic levels
            out = np.empty(a.shape)
            bz = b[zero]
            out[zero] = self._dyadic_moment(e, bz / 4.0, bz) / (1.0 - 4.0**-e)
            if np.any(~zero):
                out[~zero] = self._dyadic_moment(e, a[~zero], b[~zero])
            return out
        sigma = self.log_shift / math.log(2.0)
        t0 = 2.0 ** (-sigma)
        a, b = np.broadcast_arrays(a, b)
        ka = np.floor(np.log2(a) + sigma)
        fb = np.isfinite(b)
        kb = np.where(fb, np.floor(np.log2(np.where(fb, b, 1.0)) + sigma), np.inf)

        def m_of(k):
            return np.where(np.mod(k, 2.0) == 0.0, self.lam, self.Lam)

        def cum(k):
            # sum_{j<k, j>=0} L_j, continued to negative k
            rho = 2.0**e
            unit = t0**e * _powint(1.0, 2.0, e)
            ne = np.ceil(k / 2.0)
            no = np.floor(k / 2.0)
            if e == 0:
                return unit * (self.lam * ne + self.Lam * no)
            r2 = rho * rho
            even = (1.0 - r2**ne) / (1.0 - r2)
            odd = rho * (1.0 - r2**no) / (1.0 - r2)
            return unit * (self.lam * even + self.Lam * odd)

        def cum_inf():
            rho = 2.0**e
            unit = t0**e * _powint(1.0, 2.0, e)
            return unit * (self.lam + self.Lam * rho) / (1.0 - rho * rho)

        out = np.empty(a.shape)
        same = fb & (ka == kb)
        out[same] = m_of(ka[same]) * _powint(a[same], b[same], e)
        diff = ~same
        if np.any(diff):
            ka_d = ka[diff]
            ta_next = t0 * 2.0 ** (ka_d + 1)
            head = m_of(ka_d) * _powint(a[diff], ta_next, e)
            fb_d = fb[diff]
            kb_d = kb[diff]
            tail = np.zeros(ka_d.shape)
            mid = np.zeros(ka_d.shape)
            if np.any(fb_d):
                kbf = kb_d[fb_d]
                tb = t0 * 2.0**kbf
                tail[fb_d] = m_of(kbf) * _powint(tb, b[diff][fb_d], e)
                mid[fb_d] = cum(kbf) - cum(ka_d[fb_d] + 1)
            if np.any(~fb_d):
                if e >= 0:
                    raise KernelError("divergent tail integral")
                mid[~fb_d] = cum_inf() - cum(ka_d[~fb_d] + 1)
            out[diff] = head + mid + tail
        return out

    def _quad_moment(self, p, a, b):
        a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
        out = np.empty(a.shape)
        for idx in np.ndindex(a.shape):
            lo, hi = a[idx], b[idx]
            f = lambda t: t**p * np.asarray(self.density(np.array(t))).item()
            if np.isfinite(hi):
                out[idx] = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-11, limit=200)[0]
            else:
                out[idx] = integrate.quad(f, lo, np.inf, epsabs=0.0, epsrel=1e-11, limit=400)[0]
        return out

    @property
    def is_homogeneous(self) -> bool:
        if self.family == "fractional-laplacian":
            return True
        return self.lam == self.Lam


# -- constructors ---------------------------------------------------------------

def fractional_laplacian_kernel(n: int, s: float) -> KernelSpec:
    """Kernel ``(c_{n,s} / 2) |h|^{-n-2s}``.

    The operator integrates over t > 0 with a factor 2, so halving the usual
    constant makes L agree with the Fourier definition of (-Delta)^s.
    """
    if not (0.0 < s < 1.0):
        raise KernelError(f"order s must lie in (0,1), got {s}")
    c = fractional_laplacian_constant(n, s) / 2.0
    return KernelSpec(n, s, c, c, "fractional-laplacian")


def power_kernel(n: int, s: float, c: float = 1.0) -> KernelSpec:
    """c |h|^{-n-2s} (a degenerate oscillating kernel with zero amplitude)."""
    return KernelSpec(n, s, c, c, "power-envelope-oscillating")


def oscillating_kernel(n: int, s: float, lam: float, Lam: float,
                       log_frequency: float = DYADIC_FREQUENCY) -> KernelSpec:
    """|h|^{-n-2s} (lam + (Lam-lam)(1 + sin(w log|h|))/2)."""
    return KernelSpec(n, s, lam, Lam, "power-envelope-oscillating", log_frequency=log_frequency)


def dyadic_kernel(n: int, s: float, lam: float, Lam: float) -> KernelSpec:
    """|h|^{-n-2s} times lam on even dyadic shells [2^k, 2^{k+1}) and Lam on odd ones."""
    return KernelSpec(n, s, lam, Lam, "dyadic-piecewise")


def custom_kernel(n: int, s: float, lam: float, Lam: float, modulation: Callable,
                  radial: bool = False) -> KernelSpec:
    return KernelSpec(n, s, lam, Lam, "custom", modulation_fn=modulation, radial=radial)


def kernel_from_config(block: dict) -> KernelSpec:
    tag = block["tag"]
    n = int(block.get("n", 1))
    s = float(block["s"])
    if tag == "fractional-laplacian":
        return fractional_laplacian_kernel(n, s)
    lam = float(block.get("lambda", 1.0))
    Lam = float(block.get("Lambda", lam))
    if tag == "power-envelope-oscillating":
        return oscillating_kernel(n, s, lam, Lam, float(block.get("log_frequency", DYADIC_FREQUENCY)))
    if tag == "dyadic-piecewise":
        return dyadic_kernel(n, s, lam, Lam)
    raise KernelError(f"kernel tag {tag!r} cannot be built from a config")


# -- transformations ------------------------------------------------------------

def rescale_kernel(K: KernelSpec, r: float) -> KernelSpec:
    """K_r(h) = r^{n+2s} K(r h); same envelope constants."""
    if r <= 0:
        raise KernelError("rescaling factor must be positive")
    if r == 1.0:
        return K
    if K.family in ("power-envelope-oscillating", "dyadic-piecewise"):
        return replace(K, log_shift=K.log_shift + math.log(r))
    if K.family == "fractional-laplacian":
        return K
    m = K.modulation_fn
    return replace(K, modulation_fn=lambda h, _m=m, _r=r: _m(_r * np.asarray(h)))


def _hyperplane_weight(n: int, s: float) -> float:
    """c0 = int_{R^{n-1}} (|y|^2 + 1)^{-(n+2s)/2} dy."""
    if n == 2:
        val, _ = integrate.quad(lambda u: (1.0 + u * u) ** (-(2.0 + 2.0 * s) / 2.0), 0.0, np.inf,
                                epsabs=0.0, epsrel=1e-13, limit=200)
        return 2.0 * val
    raise KernelError("dimension reduction is implemented for n = 2")


def reduce_to_1d(K: KernelSpec, e, tol: float = 1e-10) -> KernelSpec:
    """Integrate K over hyperplanes orthogonal to the unit vector ``e``.

    The hyperplane integral is truncated where the Lam-envelope bound on the
    discarded tail drops below 1e-8 of the integral; the remainder is added
    with the mid-envelope constant (its error is bounded by the half-width of
    the envelope times the same tiny tail).
    """
    if K.dimension < 2:
        raise KernelError("reduce_to_1d needs a kernel of dimension >= 2")
    if K.dimension != 2:
        raise KernelError("dimension reduction is implemented for n = 2")
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    eperp = np.array([-e[1], e[0]])
    s = K.s
    q = (2.0 + 2.0 * s) / 2.0
    c0 = _hyperplane_weight(2, s)
    mid = 0.5 * (K.lam + K.Lam)

    def reduced_density(t: float) -> float:
        t = abs(float(t))
        # tail bound: Lam int_U^inf (u^2+t^2)^{-q} du <= Lam U^{1-2q}/(2q-1)
        target = 1e-8 * K.lam * c0 * t ** (-1.0 - 2.0 * s)
        U = max(4.0 * t, (K.Lam / ((2 * q - 1) * target)) ** (1.0 / (2 * q - 1)))
        # log-spaced breakpoints resolve oscillating modulations
        pts = np.concatenate([[0.0], t * np.geomspace(1e-2, U / t, 40)])
        pts = np.unique(np.minimum(pts, U))
        inner = 0.0
        for sign in (1.0, -1.0):
            f = lambda u, sg=sign: float(K.density(sg * u * eperp + t * e))
            for lo, hi in zip(pts[:-1], pts[1:]):
                inner += integrate.quad(f, lo, hi, epsabs=0.0, epsrel=tol, limit=100)[0]
        tail_env = integrate.quad(lambda u: (u * u + t * t) ** (-q), U, np.inf,
                                  epsabs=0.0, epsrel=1e-12)[0]
        return inner + 2.0 * mid * tail_env

    def modulation(tt):
        tt = np.atleast_1d(np.abs(np.asarray(tt, dtype=float)))
        if K.radial and K.family in ("power-envelope-oscillating", "fractional-laplacian"):
            return _radial_reduced_modulation(K, tt)
        vals = np.array([reduced_density(t) for t in tt.ravel()]).reshape(tt.shape)
        return vals * tt ** (1.0 + 2.0 * s)

    red = custom_kernel(1, s, c0 * K.lam, c0 * K.Lam, modulation, radial=True)
    if K.family == "fractional-laplacian" or (K.family == "power-envelope-oscillating" and K.lam == K.Lam):
        # exact for homogeneous radial kernels
        c = c0 * K.lam
        if K.family == "fractional-laplacian":
            return KernelSpec(1, s, c, c, "fractional-laplacian")
        return power_kernel(1, s, c)
    return red


_SIGMA_GL = np.polynomial.legendre.leggauss(16)


def _radial_reduced_modulation(K: KernelSpec, t: np.ndarray) -> np.ndarray:
    """2 int_0^inf m(t cosh u) cosh(u)^{-1-2s} du for smooth radial modulations.

    With v = sinh(u) this is the hyperplane integral of a radial kernel,
    divided by the homogeneous factor t^{-1-2s}.  Composite Gauss-Legendre in u;
    the remainder beyond the cut-off is taken with the mean modulation.
    """
    s = K.s
    cut = 36.0 / (2.0 * s)
    panels = int(math.ceil(cut / 0.1))
    edges = np.linspace(0.0, cut, panels + 1)
    xg, wg = _SIGMA_GL
    half = (edges[1] - edges[0]) / 2
    u = ((edges[1:] + edges[:-1]) / 2)[:, None] + half * xg[None, :]
    u = u.ravel()
    w = np.broadcast_to(half * wg[None, :], (panels, 16)).ravel() * np.cosh(u) ** (-1.0 - 2.0 * s)
    flat = t.ravel()
    out = np.empty(flat.shape)
    chunk = max(1, 4_000_000 // u.size)
    for k in range(0, flat.size, chunk):
        tk = flat[k:k + chunk]
        out[k:k + chunk] = K.radial_modulation(tk[:, None] * np.cosh(u)[None, :]) @ w
    rest = 0.5 * (K.lam + K.Lam) * 2.0 ** (1.0 + 2.0 * s) * math.exp(-2.0 * s * cut) / (2.0 * s)
    return (2.0 * (out + rest)).reshape(t.shape)


def check_envelope(K: KernelSpec, samples: int = 1000, seed: int = 0) -> bool:
    """Symmetry and ellipticity on log-uniformly sampled displacements."""
    rng = np.random.default_rng(seed)
    r = 10.0 ** rng.uniform(-6, 6, samples)
    if K.dimension == 1:
        h = r * rng.choice([-1.0, 1.0], samples)
    else:
        d = rng.normal(size=(samples, K.dimension))
        h = r[:, None] * d / np.linalg.norm(d, axis=1, keepdims=True)
    ratio = K.density(h) * r ** (K.dimension + 2 * K.s)
    sym = np.allclose(K.density(h), K.density(-h), rtol=1e-13, atol=0.0)
    lo = K.lam * (1 - 1e-12)
    hi = K.Lam * (1 + 1e-12)
    return bool(sym and np.all(ratio >= lo) and np.all(ratio <= hi))
