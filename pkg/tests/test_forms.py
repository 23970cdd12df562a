import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from nlpencil.errors import ContractError, DomainError
from nlpencil.forms import apply_measure_form, apply_point_form, form_weights, restricted_quadrature
from nlpencil.model import BoundaryMeasure, Coefficients, truncate_measure
from nlpencil.ode import fundamental_X, fundamental_Z

from conftest import PI, trig_coeffs

FREE = Coefficients(PI)


def test_examples():
    X1, X2 = fundamental_X(FREE, 1.0)
    assert apply_measure_form(BoundaryMeasure.point(0.0, PI), X1) == pytest.approx(1.0, abs=1e-12)
    assert apply_measure_form(BoundaryMeasure.point(PI / 2, PI), X2) == pytest.approx(1.0, abs=1e-10)
    _, X2 = fundamental_X(FREE, 2.0)
    uniform = BoundaryMeasure(PI, density=np.ones(1025))
    assert abs(apply_measure_form(uniform, X2)) < 1e-8


def test_point_forms():
    Z1, _ = fundamental_Z(FREE, 1.7 + 0.3j)
    assert apply_point_form(1, Z1) == 1
    assert apply_point_form(2, Z1) == 0
    _, X2 = fundamental_X(FREE, 1.0)
    assert abs(apply_point_form(1, X2)) < 1e-10
    with pytest.raises(ContractError):
        apply_point_form(3, X2)


@pytest.mark.parametrize("t", [0.1234, 1.0, 2.5, PI])
@pytest.mark.parametrize("lam", [1.3, 6.0 + 1j])
def test_off_grid_atom(t, lam):
    X1, _ = fundamental_X(FREE, lam)
    assert abs(apply_measure_form(BoundaryMeasure.point(t, PI, 0.7), X1) - 0.7 * np.cos(lam * t)) < 1e-9 * max(1, abs(np.cos(lam * t)))


@pytest.mark.parametrize("n", [1025, 513, 300])
def test_density_against_quadrature(n):
    """Oracle: scipy.quad of the closed-form X1 against the linearly interpolated density."""
    lam = 2.2
    xd = np.linspace(0, PI, n)
    dens = np.exp(-xd) * (1 + 0.5j)
    m = BoundaryMeasure(PI, density=dens)
    X1, _ = fundamental_X(FREE, lam)

    def g(t, part):
        d = np.interp(t, xd, dens.real) + 1j * np.interp(t, xd, dens.imag)
        return getattr(d * np.cos(lam * t), part)

    kw = dict(points=xd[1:-1], limit=4 * n)
    ref = complex(quad(g, 0, PI, args=("real",), **kw)[0], quad(g, 0, PI, args=("imag",), **kw)[0])
    # trapezoid on the trace grid: O(h^2)
    assert abs(apply_measure_form(m, X1) - ref) < 2e-5


def test_grid_mismatch():
    m = BoundaryMeasure.point(0.0, 2.0)
    X1, _ = fundamental_X(FREE, 1.0)
    with pytest.raises(ContractError):
        apply_measure_form(m, X1)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-8, 8), st.floats(-2, 2))
def test_linearity(al, be, re, im):
    lam = complex(re, im)
    X1, X2 = fundamental_X(trig_coeffs(), lam)
    m = BoundaryMeasure(PI, ((0.0, 1.0), (1.1, -0.4j)), np.linspace(1, 2, 1025))
    comb = X1.combine(X2, al, be)
    lhs = apply_measure_form(m, comb)
    a, b = apply_measure_form(m, X1), apply_measure_form(m, X2)
    rhs = al * a + be * b
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(al * a) + abs(be * b))


def test_full_truncation_exact():
    m = BoundaryMeasure(PI, ((0.0, 1.0), (2.0, 0.5)), np.cos(np.linspace(0, PI, 1025)))
    X1, _ = fundamental_X(trig_coeffs(), 3 + 1j)
    assert apply_measure_form(truncate_measure(m, PI), X1) == apply_measure_form(m, X1)


@given(st.floats(0.05, PI))
def test_restricted_quadrature_matches_truncation(a):
    m = BoundaryMeasure(PI, ((0.0, 1.0), (1.1, 0.4), (2.9, -0.3j)), np.linspace(1, 2, 1025) * (1 - 0.2j))
    _, Z2 = fundamental_Z(trig_coeffs(), 2.5 + 0.5j)
    diff = apply_measure_form(truncate_measure(m, a), Z2) - apply_measure_form(truncate_measure(m, a / 2), Z2)
    q = restricted_quadrature(m, Z2, a / 2, a)
    assert abs(diff - q) < 1e-11 * max(1.0, abs(q))


def test_restricted_quadrature_domain():
    X1, _ = fundamental_X(FREE, 1.0)
    with pytest.raises(DomainError):
        restricted_quadrature(BoundaryMeasure.point(0.0, PI), X1, 1.0, 0.5)


def test_weights_shape():
    x = np.linspace(0, PI, 1025)
    wy, wd = form_weights(BoundaryMeasure(PI, ((0.5, 1.0),), np.ones(33)), x)
    assert wy.shape == wd.shape == x.shape
    assert np.sum(wy.real) == pytest.approx(1.0 + PI, rel=1e-12)
