import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from nlpencil.charfns import (
    COMBINED,
    Evaluator,
    build_combined,
    dirichlet_function,
    eval_char,
    identity_suite,
    lambda_grid,
    natural_scale,
    omega_identically_zero,
    scan,
    truncated_deltas,
)
from nlpencil.errors import ContractError, PoleError
from nlpencil.forms import apply_measure_form, apply_point_form
from nlpencil.model import BoundaryMeasure, Coefficients, ProblemSpec, random_problem

from conftest import PI, constant_problem, trig_coeffs

LAMS = np.array([0.5, 1.3 + 0.2j, -2.7 + 1j, 4.1 - 2j, 7.9 + 3j, 0.3j])


def free_closed_forms(lam):
    """U1 = delta_0, U2 = delta_{pi/2}, p = q = 0."""
    return {
        "omega": np.sin(lam * PI / 2) / lam,
        "delta1": np.sin(lam * PI) / lam,
        "delta2": np.sin(lam * PI / 2) / lam,
        "delta11": np.cos(lam * PI),
        "weylM": np.sin(lam * PI / 2) / np.sin(lam * PI),
        "bigN": np.tan(lam * PI) / lam,
    }


def test_spec_examples(free):
    assert eval_char(free, "delta1", 0.5).value == pytest.approx(2.0, abs=1e-9)
    assert eval_char(free, "delta11", 1.0).value == pytest.approx(-1.0, abs=1e-9)
    assert eval_char(free, "weylM", 0.5).value == pytest.approx(math.sqrt(2) / 2, abs=1e-9)


@pytest.mark.parametrize("path", ["det_of_X", "via_Z"])
def test_free_closed_forms(free, path):
    ev = Evaluator(free, LAMS)
    ref = free_closed_forms(LAMS)
    for name in ("omega", "delta1", "delta2", "delta11"):
        got = ev.entire(name, path)
        assert np.max(np.abs(got - ref[name]) / np.maximum(1, np.abs(ref[name]))) < 1e-9, name


@pytest.mark.parametrize("path", ["det_of_X", "via_Z", "ratio"])
def test_free_ratios(free, path):
    lams = LAMS[1:]  # 0.5 is a pole of N
    ev = Evaluator(free, lams)
    ref = free_closed_forms(lams)
    for name in ("weylM", "bigN"):
        got, pole = ev.ratio(name, path)
        assert not pole.any()
        assert np.max(np.abs(got - ref[name]) / np.maximum(1, np.abs(ref[name]))) < 1e-8


def test_constant_coefficients_closed_form():
    p, q = 0.4, -0.7
    prob = constant_problem(p, q)
    for lam in LAMS:
        k = np.sqrt(lam * lam - 2 * lam * p - q)
        assert abs(eval_char(prob, "delta1", lam).value - np.sin(k * PI) / k) < 1e-9 * max(1, abs(np.sin(k * PI) / k))
        assert abs(eval_char(prob, "delta11", lam).value - np.cos(k * PI)) < 1e-9 * max(1, abs(np.cos(k * PI)))


def test_density_measure_closed_form():
    """U1 = delta_0 + uniform density on [0, T]: D1 = sin(lam T)/lam + (1 - cos(lam T))/lam^2."""
    u1 = BoundaryMeasure(PI, ((0.0, 1.0),), np.ones(1025))
    prob = ProblemSpec(Coefficients(PI), u1, BoundaryMeasure.point(1.0, PI, label=2))
    for lam in (0.7, 2.0 + 0.5j, 5.5):
        ref = np.sin(lam * PI) / lam + (1 - np.cos(lam * PI)) / lam**2
        # the trapezoid rule on the 1024-cell trace grid: O(h^2)
        assert abs(eval_char(prob, "delta1", lam).value - ref) < 1e-5


def test_poles(free):
    with pytest.raises(PoleError):
        eval_char(free, "weylM", 1.0)
    with pytest.raises(PoleError):
        eval_char(free, "bigN", 0.5)
    rows = scan(free, ["weylM", "delta1"], [1.0, 1.5])
    flagged = {(r.name, r.lam.real): r.pole for r in rows}
    assert flagged[("weylM", 1.0)] and not flagged[("weylM", 1.5)]
    assert not flagged[("delta1", 1.0)]


def test_unknown_names(free):
    with pytest.raises(ContractError):
        eval_char(free, "delta3", 1.0)
    with pytest.raises(ContractError):
        eval_char(free, "delta1", 1.0, path="sideways")


# ---- combined solutions ----


def test_phi_is_sine(free):
    tr = build_combined(free, "phi", 1.0)
    y, _ = tr.values()
    assert np.max(np.abs(y - np.sin(tr.x))) < 1e-9


@pytest.mark.parametrize("which", COMBINED)
@pytest.mark.parametrize("lam", [1.7 + 0.3j, -4.2 + 2j, 9.5 - 1j])
def test_defining_conditions_random_problem(which, lam):
    prob = random_problem(np.random.default_rng(11))
    tr = build_combined(prob, which, lam)  # raises ConsistencyError on failure
    if which == "psi":
        assert apply_point_form(2, tr) == pytest.approx(-1.0, abs=1e-8)
    if which == "Phi":
        assert apply_measure_form(prob.u1, tr) == pytest.approx(1.0, abs=1e-7)
    if which == "v2":
        nval = eval_char(prob, "bigN", lam).value
        assert apply_point_form(2, tr) == pytest.approx(1.0, abs=1e-8)
        assert abs(apply_point_form(1, tr) - nval) < 1e-7 * max(1, abs(nval))


@given(st.floats(-10, 10), st.floats(-3, 3), st.sampled_from(["psi", "Phi", "v2"]))
def test_routes_agree(re, im, which):
    prob = constant_problem(0.3, 0.2)
    lam = complex(re, im)
    ev = Evaluator(prob, [lam])
    xa, ya, da, sa, pa = ev.combined(which, "stable")
    xb, yb, db, sb, pb = ev.combined(which, "definition")
    if pa[0] or pb[0]:
        return
    a = ya[0] * np.exp(sa[0])
    b = yb[0] * np.exp(sb[0])
    assert np.max(np.abs(a - b)) <= 1e-6 * max(1.0, np.max(np.abs(a)))


def test_combined_pole(free):
    with pytest.raises(PoleError):
        build_combined(free, "Phi", 2.0)


# ---- truncation ----


def test_truncation_examples(free):
    lam = 1.3 + 0.4j
    d1, d11 = truncated_deltas(free, PI, lam)
    assert d1 == pytest.approx(eval_char(free, "delta1", lam).value, abs=1e-14)
    assert d11 == pytest.approx(eval_char(free, "delta11", lam).value, abs=1e-14)
    assert truncated_deltas(free, 0.3, lam) == truncated_deltas(free, 2.9, lam)
    xs = np.linspace(0, PI, 1025)
    u1 = BoundaryMeasure(PI, ((0.0, 1.0),), np.where(xs > PI / 2, 1.0, 0.0))
    prob = ProblemSpec(Coefficients(PI), u1, BoundaryMeasure.point(1.0, PI, label=2))
    d1, _ = truncated_deltas(prob, PI / 2, lam)
    assert abs(d1 - np.sin(lam * PI) / lam) < 1e-10


# ---- Dirichlet functions ----


def test_dirichlet_free():
    a = PI / 2
    lam = np.array([0.9, 2.3 + 0.5j])
    c = Coefficients(PI)
    assert np.allclose(dirichlet_function(c, "L0p", a)(lam), np.sin(lam * a) / lam, atol=1e-10)
    assert np.allclose(dirichlet_function(c, "L1p", a)(lam), np.sin(lam * PI) / lam, atol=1e-10)
    assert np.allclose(dirichlet_function(c, "L2p", a)(lam), np.sin(lam * (a - PI)) / lam, atol=1e-10)
    with pytest.raises(ContractError):
        dirichlet_function(c, "L0p", PI)


# ---- identity suite and related invariants ----


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_identity_suite_random(seed, cplx):
    prob = random_problem(np.random.default_rng(seed), complex_coeffs=cplx)
    lams = lambda_grid((-10, 10, 8), (-5, 5, 5))
    for c in identity_suite(prob, lams, rng=np.random.default_rng(seed)):
        assert c.passed, (c.name, c.max_error)


def test_identity_suite_names(free):
    names = [c.name for c in identity_suite(free, lambda_grid((-3, 3, 4), (-1, 1, 3)))]
    assert names == [
        "paths_agree_omega",
        "paths_agree_delta1",
        "paths_agree_delta2",
        "paths_agree_delta11",
        "wronskian_theta_phi",
        "wronskian_psi_phi",
        "wronskian_Phi_phi",
        "weylM_equals_U2_Phi",
        "truncation_identity",
    ]


def test_omega_identically_zero():
    u = BoundaryMeasure.point(0.0, PI, 1.0, 1)
    prob = ProblemSpec(trig_coeffs(), u, BoundaryMeasure.point(0.0, PI, 1.0, 2))
    ev = Evaluator(prob, LAMS)
    assert omega_identically_zero(ev.entire("omega", "det_of_X"))
    assert not omega_identically_zero(Evaluator(constant_problem(), LAMS).entire("omega"))


def test_natural_scale_bounds_value(free):
    ev = Evaluator(free, LAMS)
    for name in ("omega", "delta1", "delta2", "delta11"):
        for path in ("det_of_X", "via_Z"):
            assert np.all(natural_scale(name, ev, path) >= np.abs(ev.entire(name, path)) * (1 - 1e-12))
