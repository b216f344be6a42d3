import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lamelab.grid import (
    GridMismatchError, GridSpec, State, first_eigenfunction, first_eigenvalue, l2_inner,
    l2_norm_sq,
)
from lamelab.operators import grad_norm_sq, h01_inner, hc_norm_sq


def test_rejects_small_or_degenerate_grids():
    with pytest.raises(ValueError):
        GridSpec((1.0,), (2,))
    with pytest.raises(ValueError):
        GridSpec((0.0,), (5,))
    with pytest.raises(ValueError):
        GridSpec((1.0, 1.0), (5,))


def test_node_count_and_spacing():
    g = GridSpec((1.0, 2.0), (3, 7))
    assert g.node_count == 21
    assert g.spacings == pytest.approx((0.25, 0.25))


def test_constant_quadrature():
    g = GridSpec.uniform(1, 3)
    one = np.ones(g.shape)
    assert l2_inner(g, one, one) == pytest.approx(0.75, rel=1e-15)
    assert l2_inner(g, one, g.zeros()) == 0.0


def test_sine_quadrature():
    g = GridSpec.uniform(1, 63)
    s = np.sin(np.pi * g.axes()[0])
    assert abs(l2_norm_sq(g, s) - 0.5) / 0.5 <= 1e-3


def test_mismatched_fields_rejected():
    g = GridSpec.uniform(1, 7)
    with pytest.raises(GridMismatchError):
        l2_inner(g, np.ones(7), np.ones(8))
    with pytest.raises(GridMismatchError):
        State(0.0, np.zeros((1, 7)), np.zeros((1, 7)), np.zeros(8), g)


def test_first_eigenvalue_values():
    assert first_eigenvalue(GridSpec.uniform(1, 3)) == pytest.approx(
        64 * math.sin(math.pi / 8) ** 2, rel=1e-14)
    assert abs(first_eigenvalue(GridSpec.uniform(1, 511)) - math.pi**2) <= 1e-4
    assert first_eigenvalue(GridSpec.uniform(2, 15)) == pytest.approx(
        2 * first_eigenvalue(GridSpec.uniform(1, 15)), rel=1e-14)


def test_h01_collapses_in_1d(rng):
    g = GridSpec.uniform(1, 31)
    u = rng.standard_normal(g.vshape)
    assert h01_inner(g, u, u, 1.0, 0.0) == pytest.approx(2 * grad_norm_sq(g, u), rel=1e-12)
    assert h01_inner(g, 0 * u, 0 * u, 1.0, 0.0) == 0.0


def test_h01_norm_equivalence_2d(rng):
    g = GridSpec.uniform(2, 9)
    mu, lam = 1.0, 0.5
    for _ in range(100):
        u = rng.standard_normal(g.vshape)
        gn = grad_norm_sq(g, u)
        val = h01_inner(g, u, u, mu, lam)
        assert mu * gn <= val * (1 + 1e-12)
        assert val <= (mu + 2 * (lam + mu)) * gn * (1 + 1e-12)


def test_hc_norm_examples(rng):
    g = GridSpec.uniform(1, 3)
    assert hc_norm_sq(State.zeros(g), 1.0, 0.0, g) == 0.0
    s = State(0.0, g.vzeros(), g.vzeros(), np.ones(g.shape), g)
    assert hc_norm_sq(s, 1.0, 0.0, g) == pytest.approx(0.75, rel=1e-15)
    g = GridSpec.uniform(2, 7)
    s = State(0.0, rng.standard_normal(g.vshape), rng.standard_normal(g.vshape),
              rng.standard_normal(g.shape), g)
    assert hc_norm_sq(s.scaled(2.0), 1.0, 0.3, g) == pytest.approx(
        4 * hc_norm_sq(s, 1.0, 0.3, g), rel=1e-13)


def test_discrete_poincare(rng):
    for g in (GridSpec.uniform(1, 31), GridSpec.uniform(2, 9)):
        lam1 = first_eigenvalue(g)
        for _ in range(100):
            s = rng.standard_normal(g.shape)
            assert lam1 * l2_norm_sq(g, s) <= grad_norm_sq(g, s) * (1 + 1e-12)
        e1 = first_eigenfunction(g)
        assert grad_norm_sq(g, e1) == pytest.approx(lam1 * l2_norm_sq(g, e1), rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 20), st.integers(0, 2**31 - 1))
def test_quadrature_linearity(n, seed):
    g = GridSpec.uniform(1, n)
    r = np.random.default_rng(seed)
    a, b, c = (r.standard_normal(g.shape) for _ in range(3))
    lhs = l2_inner(g, a + b, c)
    rhs = l2_inner(g, a, c) + l2_inner(g, b, c)
    scale = l2_norm_sq(g, a + b) ** 0.5 * l2_norm_sq(g, c) ** 0.5 + 1e-300
    assert abs(lhs - rhs) <= 1e-12 * max(scale, abs(lhs))
