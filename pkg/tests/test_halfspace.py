import numpy as np
import pytest

from nonlocal_lab.halfspace import (HalfSpaceError, HalfSpaceSolution, build_halfspace_pipeline,
                                    build_halfspace_truncated, derivative_bounds_report,
                                    dimensional_reduction_check, growth_fit, monotonicity_defect,
                                    oscillation_amplitude, profile_difference, quotient_oscillation_probe,
                                    residual_certificate)
from nonlocal_lab.kernels import dyadic_kernel, fractional_laplacian_kernel, oscillating_kernel
from nonlocal_lab.mesh import Grid, GridFunction

HALF = fractional_laplacian_kernel(1, 0.5)


def _exact(s=0.5, R=8.0, nodes=4097):
    g = Grid.line(0.0, R, nodes)
    return HalfSpaceSolution(fractional_laplacian_kernel(1, s), GridFunction(g, g.x**s), "exact",
                             1.0, 1.0, s, s)


@pytest.fixture(scope="module")
def truncated():
    return build_halfspace_truncated(HALF, 8.0, 128)


def test_truncated_matches_sqrt(truncated):
    b = truncated
    x = b.x[b.x <= 1]
    assert float(b(1.0)) == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(b(x) - np.sqrt(x))) < 2e-2
    assert float(b(-0.3)) == 0.0 and np.all(b.values[1:] > 0)
    assert monotonicity_defect(b) >= 0
    assert residual_certificate(b)["passed"]
    assert 0 < b.c1 <= b.c2


def test_truncation_radius_study(truncated):
    half_R = build_halfspace_truncated(HALF, 4.0, 128)
    assert profile_difference(truncated, half_R) < 1e-3


def test_pipeline_low_resolution():
    b = build_halfspace_pipeline(HALF, 128, 513)
    x = b.x[b.x <= 1]
    assert float(b(1.0)) == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(b(x) - np.sqrt(x))) < 3e-2
    assert monotonicity_defect(b) >= 0
    assert b.provenance == "pipeline" and len(b.trace) >= 2


def test_routes_agree_oscillating_low_resolution():
    K = oscillating_kernel(1, 0.5, 1, 2)
    a = build_halfspace_truncated(K, 8.0, 128)
    b = build_halfspace_pipeline(K, 128, 513)
    assert profile_difference(a, b) < 3e-2
    assert growth_fit(a).within(0.5, 0.05)


def test_derivative_bounds_exact_profile():
    c1, c2 = derivative_bounds_report(_exact())
    # central differences at x = 4h carry a relative error of about h^2 / (8 x^2)
    assert c1 == pytest.approx(0.5, abs=5e-3) and c2 == pytest.approx(0.5, abs=5e-3)


def test_quotient_probe_controls(truncated):
    exact = quotient_oscillation_probe(_exact())
    assert all(q == pytest.approx(1.0, rel=1e-12) for _, q in exact)
    assert oscillation_amplitude(exact) == pytest.approx(0.0, abs=1e-12)
    assert oscillation_amplitude(quotient_oscillation_probe(truncated)) < 0.05


def test_dyadic_probe_is_finite():
    b = build_halfspace_truncated(dyadic_kernel(1, 0.5, 1, 3), 8.0, 128)
    probe = quotient_oscillation_probe(b)
    assert len(probe) >= 4 and np.isfinite(oscillation_amplitude(probe))


def test_dimensional_reduction():
    red = dimensional_reduction_check(fractional_laplacian_kernel(2, 0.5))
    assert red["c0"] == pytest.approx(2.0, abs=1e-6)
    assert red["max_rel"] < 1e-6
    with pytest.raises(HalfSpaceError):
        dimensional_reduction_check(HALF)
