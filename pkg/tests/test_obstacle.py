import math

import numpy as np
import pytest

from nonlocal_lab.analysis import FitError, fit_growth
from nonlocal_lab.halfspace import HalfSpaceSolution
from nonlocal_lab.kernels import fractional_laplacian_kernel, oscillating_kernel
from nonlocal_lab.mesh import Grid, GridFunction, Region
from nonlocal_lab.obstacle import (ObstacleError, _centre, _sup_gap, ObstacleProblem, ObstacleResult, bump_obstacle,
                                   classify_free_boundary_point, expansion_fit, obstacle_regularity_report,
                                   profile_antiderivative, second_difference_growth, solve_obstacle)

HALF = fractional_laplacian_kernel(1, 0.5)


@pytest.fixture(scope="module")
def coarse():
    g = Grid.line(-8, 8, 801)
    return solve_obstacle(ObstacleProblem(HALF, g, bump_obstacle(g)))


def test_negative_obstacle_gives_zero():
    g = Grid.line(-2, 2, 201)
    res = solve_obstacle(ObstacleProblem(HALF, g, GridFunction(g, -np.ones(201) + 0.0 * g.x)))
    assert np.all(res.u.values == 0) and res.contact.count == 0


def test_invalid_obstacles():
    g = Grid.line(-1, 1, 21)
    with pytest.raises(ObstacleError):
        ObstacleProblem(HALF, g, GridFunction(g, np.ones(21)))


def test_coarse_fixture_structure(coarse):
    res = coarse
    x = res.problem.grid.x
    assert res.residual <= 1e-8
    assert np.all(res.gap >= 0)
    idx = res.contact.indices
    assert idx.size > 0 and np.all(np.diff(idx) == 1)  # one compact interval
    assert np.all(np.abs(x[idx]) < 0.25)
    assert np.all(res.gap[~res.contact.mask & (res.problem.phi.values > 0)] > 0)
    assert res.u.values[0] < 0.05 * res.u.values.max()
    assert np.max(np.abs(res.u.values - res.u.values[::-1])) < 1e-10
    assert len(res.free_boundary) == 2


def test_lcp_monotonicity():
    g = Grid.line(-4, 4, 401)
    K = oscillating_kernel(1, 0.5, 1, 2)
    p1 = bump_obstacle(g, 0.5, 1.0)
    p2 = GridFunction(g, np.maximum(p1.values, bump_obstacle(g, 0.8, 0.7).values))
    u1 = solve_obstacle(ObstacleProblem(K, g, p1)).u.values
    u2 = solve_obstacle(ObstacleProblem(K, g, p2)).u.values
    assert np.all(u1 <= u2 + 1e-12)


def _synthetic(gap):
    g = Grid.line(-1, 1, 2001)
    prob = ObstacleProblem(HALF, g, GridFunction(g, np.zeros(2001)))
    contact = Region(g, g.x <= 1e-12)
    return ObstacleResult(prob, GridFunction(g, gap(g.x - 0.5 * g.h)), contact, 0.0, [0.0],
                          np.zeros(2001), 0, "synthetic")


def test_classifier_synthetic():
    cls, fit = classify_free_boundary_point(_synthetic(lambda t: np.maximum(t, 0) ** 1.5), 0.0)
    assert cls == "regular" and fit.exponent == pytest.approx(1.5, abs=1e-10)
    cls, fit = classify_free_boundary_point(_synthetic(lambda t: np.maximum(t, 0) ** 2), 0.0)
    assert cls == "degenerate" and fit.exponent == pytest.approx(2.0, abs=1e-10)
    with pytest.raises(FitError):
        classify_free_boundary_point(_synthetic(lambda t: np.maximum(t, 0) ** 1.0), 0.0)


def test_holder_fit_synthetic():
    fit = obstacle_regularity_report(_synthetic(lambda t: np.maximum(t, 0) ** 1.5))
    assert fit.exponent == pytest.approx(0.5, abs=0.05)
    smooth = obstacle_regularity_report(_synthetic(lambda t: np.exp(-t * t)))
    assert smooth.exponent >= 0.95  # saturates at the Lipschitz cap


def _sqrt_profile(nodes):
    g = Grid.line(0, 4, nodes)
    return HalfSpaceSolution(HALF, GridFunction(g, np.sqrt(g.x)), "exact", 1.0, 1.0, 0.5, 0.5)


def test_expansion_exact_barrier():
    b = _sqrt_profile(4001)
    B = profile_antiderivative(b)
    c, fit = expansion_fit(_synthetic(lambda t: B(t)), 0.0, b)
    assert c == pytest.approx(1.0, abs=1e-12)
    assert math.isinf(fit.exponent)


def test_expansion_closed_form_antiderivative():
    # B(x) = x^{3/2} / (3/2); the tabulated antiderivative converges to it under refinement
    c, fit = expansion_fit(_synthetic(lambda t: np.maximum(t, 0) ** 1.5 / 1.5), 0.0, _sqrt_profile(32001))
    assert c == pytest.approx(1.0, abs=5e-3)


def test_expansion_degenerate_point():
    c, _ = expansion_fit(_synthetic(lambda t: np.maximum(t, 0) ** 2.5), 0.0, _sqrt_profile(4001))
    assert abs(c) < 1e-2


def test_second_differences_blow_up_at_regular_point():
    fit = second_difference_growth(_synthetic(lambda t: np.maximum(t, 0) ** 1.5), 0.0)
    assert fit.exponent == pytest.approx(-0.5, abs=0.05)


def test_coarse_fixture_gap_growth(coarse):
    # h = 0.02 is too coarse to resolve the 1+s rate; the full-resolution
    # classification runs in the acceptance suite.
    h = coarse.problem.grid.h
    for x0 in coarse.free_boundary:
        fit = fit_growth(_sup_gap(GridFunction(coarse.problem.grid, coarse.gap), _centre(coarse, x0),
                                  [(4 * 2**k + 0.5) * h for k in range(4)]))
        assert fit.exponent > 0.5 and fit.coefficient > 0
