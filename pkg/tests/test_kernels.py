import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.special import gamma

from nonlocal_lab.kernels import (DYADIC_FREQUENCY, KernelError, check_envelope, custom_kernel, dyadic_kernel,
                                  fractional_laplacian_constant, fractional_laplacian_kernel,
                                  kernel_from_config, oscillating_kernel, power_kernel, reduce_to_1d,
                                  rescale_kernel)


def gamma_constant(n, s):
    # c_{n,s} = 4^s Gamma(n/2 + s) / (pi^{n/2} |Gamma(-s)|)
    return 4**s * gamma(n / 2 + s) / (math.pi ** (n / 2) * abs(gamma(-s)))


def fourier_symbol_constant(s):
    # 1D: c_{1,s} int (1 - cos xi h)|h|^{-1-2s} dh = |xi|^{2s}; solve for c at xi = 1
    val, _ = integrate.quad(lambda h: (1 - math.cos(h)) * h ** (-1 - 2 * s), 0, 1, limit=200)
    tail, _ = integrate.quad(lambda h: h ** (-1 - 2 * s), 1, np.inf)
    osc, _ = integrate.quad(lambda h: h ** (-1 - 2 * s), 1, np.inf, weight="cos", wvar=1.0)
    return 1.0 / (2 * (val + tail - osc))


def test_fractional_constant_half():
    assert fractional_laplacian_constant(1, 0.5) == pytest.approx(1 / math.pi, rel=1e-14)
    K = fractional_laplacian_kernel(1, 0.5)
    assert K.density(2.0) == pytest.approx(1 / (2 * math.pi) / 4.0, rel=1e-14)
    assert K.lam == K.Lam


@pytest.mark.parametrize("s", [0.2, 0.5, 0.75])
def test_fractional_constant_oracles(s):
    assert fractional_laplacian_constant(1, s) == pytest.approx(gamma_constant(1, s), rel=1e-12)
    assert fractional_laplacian_constant(1, s) == pytest.approx(fourier_symbol_constant(s), rel=1e-6)
    assert fractional_laplacian_constant(2, s) == pytest.approx(gamma_constant(2, s), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(1e-4, 1e4))
def test_symmetry_and_envelope(s, h):
    for K in (fractional_laplacian_kernel(1, s), oscillating_kernel(1, s, 1, 2), dyadic_kernel(1, s, 1, 3)):
        assert K.density(h) == K.density(-h)
        ratio = K.density(h) * h ** (1 + 2 * s)
        assert K.lam * (1 - 1e-12) <= ratio <= K.Lam * (1 + 1e-12)


def test_check_envelope_families():
    for K in (oscillating_kernel(1, 0.4, 1, 2), oscillating_kernel(2, 0.4, 1, 2), dyadic_kernel(1, 0.6, 1, 4)):
        assert check_envelope(K)


def test_oscillating_degenerate_amplitude_is_power():
    K = oscillating_kernel(1, 0.3, 1.5, 1.5)
    h = np.geomspace(1e-3, 1e3, 17)
    assert np.allclose(K.density(h), power_kernel(1, 0.3, 1.5).density(h), rtol=1e-15)


def test_oscillating_attains_upper_envelope():
    K = oscillating_kernel(1, 0.5, 1.0, 2.0, log_frequency=3.0)
    h = math.exp(math.pi / (2 * 3.0))
    assert K.density(h) * h**2 == pytest.approx(2.0, abs=1e-12)


def test_rescale_identity_and_homogeneous():
    K = oscillating_kernel(1, 0.5, 1, 2)
    assert rescale_kernel(K, 1.0) == K
    P = power_kernel(1, 0.4, 2.0)
    Q = rescale_kernel(P, 3.0)
    h = np.geomspace(1e-2, 1e2, 9)
    assert np.allclose(Q.density(h), P.density(h), rtol=1e-13)


def test_rescale_shifts_phase():
    w = 3.0
    K = oscillating_kernel(1, 0.5, 1, 2, log_frequency=w)
    K2 = rescale_kernel(K, 2.0)
    h = np.geomspace(1e-2, 1e2, 11)
    expected = 1 + (1 + np.sin(w * np.log(h) + w * math.log(2.0))) / 2
    assert np.allclose(K2.density(h) * h**2, expected, rtol=1e-13)
    # direct definition K_r(h) = r^{n+2s} K(r h)
    assert np.allclose(K2.density(h), 2.0**2 * K.density(2.0 * h), rtol=1e-13)


def test_dyadic_frequency_invariance():
    K = oscillating_kernel(1, 0.5, 1, 2)
    assert K.log_frequency == DYADIC_FREQUENCY
    h = np.geomspace(1e-2, 1e2, 11)
    assert np.allclose(rescale_kernel(K, 0.5).density(h), K.density(h), rtol=1e-10)


@pytest.mark.parametrize("K", [oscillating_kernel(1, 0.4, 1, 3), dyadic_kernel(1, 0.6, 1, 2),
                               fractional_laplacian_kernel(1, 0.3)])
def test_moments_match_quadrature(K):
    for p, a, b in [(2.0, 0.01, 0.7), (1.0, 0.5, 9.0), (0.0, 3.0, np.inf)]:
        brk = [2.0**k for k in range(-8, 48) if a < 2.0**k < b]
        f = lambda t: t**p * float(K.density(t))
        edges = [a, *brk, b]
        val = sum(integrate.quad(f, lo, hi, limit=400, epsabs=0, epsrel=1e-12)[0]
                  for lo, hi in zip(edges[:-1], edges[1:]))
        assert float(K.moment(p, a, b)) == pytest.approx(val, rel=1e-8)


def test_reduce_power_kernel_constant_two():
    c0, _ = integrate.quad(lambda u: (1 + u * u) ** -1.5, -np.inf, np.inf)
    assert c0 == pytest.approx(2.0, abs=1e-12)
    K1 = reduce_to_1d(power_kernel(2, 0.5, 1.0), (1.0, 0.0))
    t = np.array([0.3, 1.0, 4.0])
    assert np.allclose(K1.density(t), 2.0 * t**-2.0, rtol=1e-10)


def test_reduce_symmetric_and_rotation_invariant():
    K = fractional_laplacian_kernel(2, 0.4)
    a = reduce_to_1d(K, (1.0, 0.0))
    b = reduce_to_1d(K, (0.0, 1.0))
    t = np.array([0.2, 1.0, 3.0])
    assert np.allclose(a.density(t), b.density(t), rtol=1e-12)
    Ko = reduce_to_1d(oscillating_kernel(2, 0.5, 1, 2), (1.0, 0.0))
    assert np.allclose(Ko.density(t), Ko.density(-t), rtol=1e-14)


def test_reduce_oscillating_against_direct_quadrature():
    K = oscillating_kernel(2, 0.5, 1, 2)
    K1 = reduce_to_1d(K, (0.6, 0.8))
    e = np.array([0.6, 0.8])
    ep = np.array([-0.8, 0.6])
    t = 0.7
    f = lambda u: float(K.density(u * ep + t * e))
    edges = [0.0] + list(t * np.geomspace(1e-3, 1e6, 200))
    direct = 2 * sum(integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-11)[0] for lo, hi in zip(edges[:-1], edges[1:]))
    assert float(K1.density(np.array([t]))[0]) == pytest.approx(direct, rel=1e-6)


def test_invalid_parameters():
    with pytest.raises(KernelError):
        fractional_laplacian_kernel(1, 1.2)
    with pytest.raises(KernelError):
        oscillating_kernel(1, 0.5, 2.0, 1.0)
    with pytest.raises(KernelError):
        reduce_to_1d(fractional_laplacian_kernel(1, 0.5), (1.0,))


def test_kernel_from_config():
    K = kernel_from_config({"tag": "power-envelope-oscillating", "s": 0.5, "lambda": 1, "Lambda": 2,
                            "log_frequency": 3.0})
    assert (K.lam, K.Lam, K.log_frequency) == (1.0, 2.0, 3.0)
    with pytest.raises(KernelError):
        kernel_from_config({"tag": "custom", "s": 0.5})


def test_custom_kernel_moment_quadrature():
    K = custom_kernel(1, 0.5, 1.0, 2.0, lambda h: 1.5 + 0.5 * np.cos(np.asarray(h)))
    val, _ = integrate.quad(lambda t: t * (1.5 + 0.5 * math.cos(t)) * t**-2, 0.5, 2.0)
    assert float(K.moment(1.0, 0.5, 2.0)) == pytest.approx(val, rel=1e-9)
