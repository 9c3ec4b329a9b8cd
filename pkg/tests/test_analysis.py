import math

import numpy as np
import pytest

from nonlocal_lab.analysis import FitError, convergence_order, dyadic_ladder, fit_growth, holder_seminorm
from nonlocal_lab.mesh import Grid, GridFunction, Region


def test_exact_power():
    r = dyadic_ladder(2**-8, 1.0)
    fit = fit_growth([(x, x**0.5) for x in r])
    assert fit.exponent == pytest.approx(0.5, abs=1e-13)
    assert fit.r2 == pytest.approx(1.0)
    fit = fit_growth([(x, 3 * x**1.5) for x in r])
    assert fit.exponent == pytest.approx(1.5, abs=1e-13)
    assert fit.coefficient == pytest.approx(3.0, rel=1e-12)


def test_perturbed_power():
    r = dyadic_ladder(2**-10, 1.0)
    fit = fit_growth([(x, x**0.5 * (1 + 0.1 * math.sin(math.log(x)))) for x in r])
    assert abs(fit.exponent - 0.5) <= 0.03
    assert fit.r2 < 1.0


def test_scale_covariance():
    r = dyadic_ladder(2**-6, 1.0)
    v = [x**0.7 * (1 + 0.05 * np.cos(3 * x)) for x in r]
    a = fit_growth(list(zip(r, v)))
    b = fit_growth([(x, 5.0 * y) for x, y in zip(r, v)])
    c = fit_growth([(4.0 * x, y) for x, y in zip(r, v)])
    assert a.exponent == pytest.approx(b.exponent, abs=1e-13)
    assert a.exponent == pytest.approx(c.exponent, abs=1e-13)
    assert b.coefficient == pytest.approx(5 * a.coefficient, rel=1e-12)


def test_fit_errors_and_dropping():
    with pytest.raises(FitError):
        fit_growth([(0.1, 1.0), (0.2, 2.0), (0.4, 3.0)])
    with pytest.raises(FitError):
        fit_growth([(-0.1, 1.0)] * 4)
    fit = fit_growth([(0.1, 0.0), (0.2, 0.2), (0.4, 0.4), (0.8, 0.8), (1.6, 1.6)])
    assert fit.dropped == 1 and fit.exponent == pytest.approx(1.0)


def test_ladder():
    assert dyadic_ladder(0.1, 0.8) == [0.1, 0.2, 0.4, 0.8]
    with pytest.raises(FitError):
        dyadic_ladder(1.0, 0.5)


def test_holder_seminorm_examples():
    g = Grid.line(-1, 1, 401)
    A = Region.interval(g, -1.01, 1.01)
    assert holder_seminorm(GridFunction(g, np.full(401, 2.0)), A, 0.5) == 0.0
    g1 = Grid.line(0, 1, 201)
    A1 = Region.interval(g1, -0.1, 1.1)
    assert holder_seminorm(GridFunction(g1, g1.x), A1, 1.0) == pytest.approx(1.0, rel=1e-12)
    u = GridFunction(g, np.sqrt(np.maximum(g.x, 0)))
    assert holder_seminorm(u, A, 0.5) == pytest.approx(1.0, rel=1e-12)


def test_holder_subsampled_is_seeded_and_monotone():
    g = Grid.line(0, 1, 3001)
    rng = np.random.default_rng(1)
    u = GridFunction(g, rng.uniform(size=3001))
    A = Region.interval(g, -0.1, 1.1)
    a = holder_seminorm(u, A, 0.5, max_pairs=20000, seed=3)
    assert a == holder_seminorm(u, A, 0.5, max_pairs=20000, seed=3)
    small = Region.interval(g, 0.2, 0.4)
    full_small = holder_seminorm(u, small, 0.5)
    assert full_small <= holder_seminorm(u, Region.interval(g, 0.1, 0.5), 0.5)
    assert holder_seminorm(u, small, 0.9) >= holder_seminorm(u, small, 0.5)


def test_convergence_order():
    hs = [0.1, 0.05, 0.025, 0.0125]
    assert convergence_order(hs, [3 * h**2 for h in hs]) == pytest.approx(2.0)
