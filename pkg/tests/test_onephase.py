from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nonlocal_lab.dirichlet import harmonic_replacement
from nonlocal_lab.kernels import fractional_laplacian_kernel, oscillating_kernel
from nonlocal_lab.mesh import Grid, GridFunction, Region
from nonlocal_lab.onephase import (OnePhaseProblem, density_report, energy, energy_ball_report,
                                   energy_comparison, free_boundary_points, minimizer_certificate,
                                   minimize_alternating, minimize_bruteforce_1d, minmax_competitor_gap,
                                   minmax_identity, nondegeneracy_report, optimal_regularity_report,
                                   step1_fixture, step1_problem)

OSC = oscillating_kernel(1, 0.5, 1, 2)


@pytest.fixture(scope="module")
def fixture64():
    return step1_fixture(OSC, 64)


@pytest.fixture(scope="module")
def oracle64(fixture64):
    return minimize_bruteforce_1d(fixture64.result.problem)


def _zero_problem(M=1.0):
    g = Grid.line(-1, 0, 101)
    return OnePhaseProblem(OSC, g, Region.interval(g, -1, 0), M, GridFunction(g, np.zeros(101)))


def test_energy_trivial_cases():
    p = _zero_problem(10.0)
    assert energy(p, p.g) == (0.0, 0.0)
    ones = p.extend(np.ones(p.idx.size))
    d, m = energy(p, ones)
    assert m == pytest.approx(10.0, abs=p.h * p.M)
    assert d > 0


def test_energy_rejects_wrong_exterior():
    p = _zero_problem()
    with pytest.raises(ValueError):
        energy(p, GridFunction(p.grid, np.ones(101)))


def test_zero_data_gives_zero():
    p = _zero_problem()
    res = minimize_alternating(p)
    assert np.all(res.u.values == 0) and res.total == 0.0
    g = Grid.line(-1, 0, 34)
    small = OnePhaseProblem(OSC, g, Region.interval(g, -1, 0), 1.0, GridFunction(g, np.zeros(34)))
    bf = minimize_bruteforce_1d(small)
    assert bf.contact.count == small.omega.count
    assert np.all(bf.u.values == 0)


def test_invalid_problems():
    g = Grid.line(-1, 0, 11)
    om = Region.interval(g, -1, 0)
    with pytest.raises(ValueError):
        OnePhaseProblem(OSC, g, om, 0.0, GridFunction(g, np.zeros(11)))
    with pytest.raises(ValueError):
        OnePhaseProblem(OSC, g, om, 1.0, GridFunction(g, -np.ones(11)))


def test_step1_has_contact_point(fixture64):
    res = fixture64.result
    assert 0 < res.contact.count < res.problem.omega.count
    assert -1 < fixture64.x0 < 0
    assert res.exhaustive is None


def test_oracle_agreement(fixture64, oracle64):
    res = fixture64.result
    bf = oracle64
    assert bf.exhaustive
    assert np.array_equal(bf.contact.mask, res.contact.mask)
    assert abs(bf.total - res.total) <= 1e-8
    # the exhaustive optimum is a single interval at this scale
    assert len(bf.contact.components()) == 1


def test_oracle_beats_empty_contact(fixture64, oracle64):
    p = fixture64.result.problem
    bf = oracle64
    full = harmonic_replacement(p.kernel, p.g, p.omega)
    assert bf.total <= sum(energy(p, full)) + 1e-12


def test_trace_is_monotone(fixture64):
    tr = np.array(fixture64.result.trace)
    assert np.all(np.diff(tr) <= 1e-12 * np.maximum(1.0, np.abs(tr[:-1])))


def test_certificate(fixture64):
    cert = minimizer_certificate(fixture64.result)
    assert cert["passed"] and cert["nonnegative"]


def test_energy_comparison_on_fixture(fixture64):
    res = fixture64.result
    scale = abs(res.dirichlet)
    for c, r in [(fixture64.x0, 0.1), (fixture64.x0, 0.3), (-0.5, 0.25), (-0.2, 0.1)]:
        lhs, rhs = energy_comparison(res, c, r)
        assert lhs <= rhs + 1e-10 * scale


def test_minmax_competitors(fixture64):
    res = fixture64.result
    rng = np.random.default_rng(5)
    n = res.problem.idx.size
    for _ in range(50):
        phi = np.maximum(rng.normal(scale=0.5, size=n), 0.0)
        assert minmax_competitor_gap(res, phi) >= -1e-9


def test_energy_ball_report_finite(fixture64):
    rows = energy_ball_report(fixture64.result, fixture64.x0, [0.05, 0.1, 0.2])
    assert all(np.isfinite(v) and v > 0 for _, v in rows)


def _synthetic(values, grid, s=0.5):
    return SimpleNamespace(u=GridFunction(grid, values),
                           problem=SimpleNamespace(kernel=fractional_laplacian_kernel(1, s), h=grid.h))


def test_reports_on_power_profile():
    g = Grid.line(-1, 1, 2049)
    s = 0.5
    res = _synthetic(np.maximum(g.x, 0) ** s, g, s)
    radii = [2.0**-k for k in range(6, 1, -1)]
    for r, ratio, ok in density_report(res, 0.0, radii):
        assert ratio == pytest.approx(0.5, abs=g.h / (2 * r)) and ok
    assert not density_report(res, 0.0, [2 * g.h])[0][2]
    for r, q in nondegeneracy_report(res, 0.0, radii):
        assert q == pytest.approx(1.0, rel=1e-12)
    fit = optimal_regularity_report(res, 0.0, radii)
    assert fit.exponent == pytest.approx(s, abs=1e-12)


def test_regularity_negative_control():
    g = Grid.line(-1, 1, 2049)
    res = _synthetic(np.maximum(g.x, 0) ** 1.0, g, 0.5)
    fit = optimal_regularity_report(res, 0.0, [2.0**-k for k in range(6, 1, -1)])
    assert fit.exponent == pytest.approx(1.0, abs=1e-12)
    assert not fit.within(0.5, 0.05)


def test_nondegeneracy_zero_region():
    g = Grid.line(-1, 1, 401)
    res = _synthetic(np.maximum(g.x - 0.5, 0), g)
    assert all(q == 0 for _, q in nondegeneracy_report(res, -0.5, [0.05, 0.1, 0.2]))


def test_free_boundary_points(fixture64):
    pts = free_boundary_points(fixture64.result)
    assert fixture64.x0 in pts


def test_minmax_worked_instance():
    lhs, rhs = minmax_identity(3, 1, 0, 2)
    assert float(lhs) == 2.0 and float(rhs) == 10.0 - 8.0


@settings(max_examples=200, deadline=None)
@given(*[st.floats(-1e3, 1e3, allow_nan=False) for _ in range(4)])
def test_minmax_identity_property(a, b, c, d):
    lhs, rhs = minmax_identity(a, b, c, d)
    assert abs(float(lhs) - float(rhs)) <= 1e-12 * max(1.0, float(lhs), (a - c) ** 2 + (b - d) ** 2)


def test_minmax_one_sided_form_needs_both_terms():
    # the single cross term alone fails when a < b and c > d
    a, b, c, d = 0.0, 1.0, 2.0, 0.0
    lhs, rhs = minmax_identity(a, b, c, d)
    one_sided = (a - c) ** 2 + (b - d) ** 2 - 2 * max(a - b, 0) * max(d - c, 0)
    assert float(lhs) == float(rhs) == 1.0 and one_sided == 5.0


def test_step1_problem_layout():
    p = step1_problem(OSC, 30, 4.0)
    assert p.idx.size == 30
    assert p.g.values[-1] == 1.0 and p.g.values[0] == 0.0
