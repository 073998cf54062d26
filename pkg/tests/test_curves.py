import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcslab.curves import Affine, Constant, PiecewiseConstant, Tabulated, as_curve, curve_from_spec
from mcslab.errors import ConfigError
from mcslab.quadrature import integrate


def test_constant_antiderivative():
    c = Constant(0.03)
    assert c.antiderivative(10.0) == pytest.approx(0.3, abs=1e-15)
    assert c.is_constant


def test_affine_between():
    a = Affine.between(0.0, 0.6, 20.0, 0.1)
    assert a(0.0) == pytest.approx(0.6)
    assert a(20.0) == pytest.approx(0.1)
    assert a.integral(0.0, 20.0) == pytest.approx(7.0, abs=1e-13)


def test_piecewise_integral_and_breakpoints():
    p = PiecewiseConstant((5.0,), (0.01, 0.03))
    assert p.integral(0.0, 20.0) == pytest.approx(0.05 + 0.45, abs=1e-14)
    assert 5.0 in p.discontinuities


def test_tabulated_is_linear_between_knots():
    tab = Tabulated((0.0, 10.0, 20.0), (0.0, 1.0, 0.0))
    assert tab(5.0) == pytest.approx(0.5)
    assert tab.integral(0.0, 20.0) == pytest.approx(10.0, abs=1e-13)


def test_arithmetic_stays_closed_form():
    s = Constant(0.02) + Affine(0.01, 0.001)
    assert isinstance(s, Affine)
    assert s(10.0) == pytest.approx(0.04)


def test_spec_round_trip():
    for c in (Constant(0.02), Affine(0.1, -0.005), PiecewiseConstant((1.0,), (0.1, 0.2))):
        back = curve_from_spec(c.to_spec())
        t = np.linspace(0, 2, 7)
        np.testing.assert_allclose(back(t), c(t), rtol=0, atol=1e-15)


def test_bad_specs():
    with pytest.raises(ConfigError, match="market.r"):
        curve_from_spec({"kind": "wiggly"}, "market.r")
    with pytest.raises(ConfigError, match="missing field"):
        curve_from_spec({"kind": "affine", "start": 1.0})
    with pytest.raises(ConfigError):
        as_curve([0.01, 0.02])


def test_quadrature_exact_for_polynomials():
    assert integrate(lambda x: x**5, 0.0, 2.0) == pytest.approx(64 / 6, rel=1e-14)


def test_quadrature_splits_at_breakpoints():
    step = lambda x: np.where(x < 1.3, 1.0, 3.0)
    assert integrate(step, 0.0, 2.0, breakpoints=(1.3,)) == pytest.approx(1.3 + 2.1, abs=1e-13)


@given(
    st.floats(-0.1, 0.1), st.floats(-0.01, 0.01), st.floats(0, 10), st.floats(0, 10)
)
def test_affine_antiderivative_matches_quadrature(c0, c1, a, b):
    f = Affine(c0, c1)
    assert f.integral(a, b) == pytest.approx(integrate(f, a, b), abs=1e-12)
