import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lamelab.grid import GridSpec, l2_inner, l2_norm_sq
from lamelab.model import (
    ForcingSymbol, ModelError, ModelSpec, Nonlinearity, TimeCoefficient, f_apply,
    fhat_integral, hull_net, lb2_norm_estimate, validate_assumptions,
)
from conftest import ONE, benchmark_model


def test_coefficients_bounds_and_lipschitz():
    c = TimeCoefficient("sinusoidal", (1.0, 0.3, 2.0))
    ts = np.linspace(0, 5, 1000)
    vals = np.array([c(t) for t in ts])
    assert c.lo <= vals.min() and vals.max() <= c.hi
    assert np.max(np.abs(np.diff(vals)) / np.diff(ts)) <= c.lipschitz * (1 + 1e-12)
    r = TimeCoefficient("ramp-clamped", (1.0, 2.0, 1.0, 3.0))
    assert r(0.0) == 1.0 and r(10.0) == 2.0 and r(2.0) == pytest.approx(1.5)
    assert r.lipschitz == pytest.approx(0.5)
    with pytest.raises(ModelError):
        TimeCoefficient("sinusoidal", (0.1, 0.5, 1.0))
    with pytest.raises(ModelError):
        TimeCoefficient("cubic", (1.0,))


def test_power_nonlinearity_values():
    f = Nonlinearity("power", 1.0, 2.0)
    xi = np.array([[3.0], [4.0]])
    assert f.pointwise(xi)[:, 0] == pytest.approx([15.0, 20.0])
    assert f.potential(xi)[0] == pytest.approx(125 / 3)
    with pytest.raises(ModelError):
        Nonlinearity("power", 1.0, 1.0)


def test_f_apply_and_fhat_examples(rng):
    g = GridSpec.uniform(1, 3)
    u = np.full(g.vshape, 2.0)
    assert fhat_integral(g, Nonlinearity("power", 1.0, 2.0), u) == pytest.approx(2.0)
    assert not f_apply(Nonlinearity(), u).any()
    assert fhat_integral(g, Nonlinearity(), u) == 0.0


def test_fhat_gradient_consistency(rng):
    f = Nonlinearity("power", 1.3, 2.5)
    for g in (GridSpec.uniform(1, 15), GridSpec.uniform(2, 7)):
        for _ in range(10):
            u = rng.standard_normal(g.vshape)
            du = rng.standard_normal(g.vshape)
            eps = 1e-6
            fd = (fhat_integral(g, f, u + eps * du) - fhat_integral(g, f, u - eps * du)) / (2 * eps)
            exact = l2_inner(g, f_apply(f, u), du)
            assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))


def test_overflow_names_the_node():
    g = GridSpec.uniform(1, 5)
    u = g.vzeros()
    u[0, 2] = 1e200
    with pytest.raises(FloatingPointError, match="node"):
        f_apply(Nonlinearity("power", 1.0, 3.0), u)


def test_assumptions_zero_and_power():
    g = GridSpec.uniform(1, 31)
    rep = validate_assumptions(benchmark_model(g, c=0.0), g)
    assert rep.passed and rep.constants["C_growth"] == 0.0
    rep = validate_assumptions(benchmark_model(g, c=1.0), g)
    assert rep.passed, rep.violations
    for key in ("potential_lower", "potential_upper", "conservativity"):
        assert rep.violations[key] == 0.0


def test_assumptions_hard_failures():
    g = GridSpec.uniform(3, 3)
    m = ModelSpec(1.0, 0.0, ONE, ONE, Nonlinearity("power", 1.0, 4.0), ForcingSymbol.zero(g))
    rep = validate_assumptions(m, g)
    assert not rep.passed
    assert any("rho" in h for h in rep.hard_failures)
    g = GridSpec.uniform(1, 31)
    m = benchmark_model(g).with_nonlinearity(Nonlinearity("power", 1.0, 2.0, eta=50.0))
    assert any("eta" in h for h in validate_assumptions(m, g).hard_failures)
    with pytest.raises(ValueError):
        validate_assumptions(m, g, sample_count=10)


def test_second_derivative_bound_only_for_quadratic_growth():
    g = GridSpec.uniform(1, 15)
    for rho, ok in ((1.5, False), (2.0, True), (3.0, False)):
        m = benchmark_model(g).with_nonlinearity(Nonlinearity("power", 1.0, rho))
        rep = validate_assumptions(m, g)
        assert (rep.violations["second_derivative"] == 0.0) is ok


def test_forcing_shift_and_hull():
    g = GridSpec.uniform(1, 15)
    x = g.axes()[0]
    g0 = ForcingSymbol("time-periodic", np.sin(np.pi * x), (1.0,))
    net = hull_net(g0, [0.0, 1.0, 0.25])
    for t in np.linspace(0, 3, 17):
        assert np.array_equal(net[0](t), g0(t))
        assert np.max(np.abs(net[1](t) - g0(t))) <= 1e-12
        assert net[2](t) == pytest.approx(g0(t + 0.25))
    with pytest.raises(ModelError):
        hull_net(g0, [-0.5])
    with pytest.raises(ModelError):
        g0.shifted(-1.0)


def test_lb2_estimates():
    g = GridSpec.uniform(1, 31)
    x = g.axes()[0]
    prof = np.sin(np.pi * x)
    mass = l2_norm_sq(g, prof)
    static = ForcingSymbol("static", prof)
    assert lb2_norm_estimate(static, 4, 1e-3, g) == pytest.approx(mass, rel=1e-12)
    assert lb2_norm_estimate(ForcingSymbol.zero(g), 4, 1e-3, g) == 0.0
    per = ForcingSymbol("time-periodic", prof, (1.0,))
    assert abs(lb2_norm_estimate(per, 4, 1e-3, g) - mass / 2) <= 1e-3
    assert lb2_norm_estimate(static.shifted(0.37), 4, 1e-3, g) == pytest.approx(mass)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 3.0))
def test_lb2_shift_invariant_for_periodic(s):
    g = GridSpec.uniform(1, 15)
    per = ForcingSymbol("time-periodic", np.sin(np.pi * g.axes()[0]), (1.0,))
    a = lb2_norm_estimate(per, 4, 1e-3, g)
    b = lb2_norm_estimate(per.shifted(s), 4, 1e-3, g)
    assert b == pytest.approx(a, rel=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.floats(1.05, 3.0), st.floats(0.1, 5.0),
       st.lists(st.floats(-100, 100), min_size=2, max_size=2))
def test_potential_sandwich(rho, c, xi):
    f = Nonlinearity("power", c, rho, eta=1.0)
    p = np.array(xi)[:, None]
    fh = f.potential(p)[0]
    fxi = float(np.sum(f.pointwise(p)[:, 0] * p[:, 0]))
    sq = float(np.sum(p**2))
    assert fh >= -f.C_f - 0.5 * f.eta * sq
    assert fh <= fxi + 0.5 * f.eta * sq + 1e-12 * max(1.0, abs(fxi))
    assert fh == pytest.approx(fxi / (rho + 1), rel=1e-12, abs=1e-300)
