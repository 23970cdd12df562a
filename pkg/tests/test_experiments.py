import json
import math

import numpy as np
import pytest

from nlpencil.errors import ConditionViolation, ConfigurationError
from nlpencil.experiments import (
    ScenarioReport,
    example1_coefficients,
    run_example1,
    run_example2,
    run_scenario,
    run_three_spectra,
    three_spectra_truth,
)
from nlpencil.model import Coefficients, PiecewiseLinear

from conftest import PI

pytestmark = pytest.mark.slow

EX1_CHECKS = {
    "M_equals_reflected",
    "omega_equals_reflected",
    "delta1_equals_reflected",
    "delta2_equals_reflected",
    "omega_equals_delta2",
    "condition_S_fails",
    "p_differs_from_reflection",
    "q_differs_from_reflection",
}
EX2_CHECKS = {
    "Lambda2_equals_pi_n_over_alpha",
    "Lambda1_Lambda2_disjoint",
    "condition_S_holds",
    "M_equals_reflected",
    "delta1_equals_reflected",
    "delta2_equals_reflected",
    "omega_differs_from_reflected",
    "coefficients_differ_from_reflection",
}


def test_report_rejects_duplicate_check(tmp_path):
    rep = ScenarioReport("example1")
    rep.add("a", True, 1.0)
    with pytest.raises(ValueError):
        rep.add("a", False, 2.0)
    rep.add("b", False, 0.5)
    assert not rep.passed and rep.check("b") == ("b", False, 0.5)
    rep.write(tmp_path, {"t.csv": "x\n1\n"})
    assert rep.artifacts == ["t.csv", "report.json"]
    assert json.loads((tmp_path / "report.json").read_text())["checks"][0]["name"] == "a"


# ---- example 1 ----


def test_example1_report(example1_run):
    rep = example1_run.value
    assert {c[0] for c in rep.checks} == EX1_CHECKS and len(rep.checks) == len(EX1_CHECKS)
    assert rep.passed, rep.checks
    for name in ("M_equals_reflected", "omega_equals_reflected", "delta1_equals_reflected", "omega_equals_delta2"):
        assert rep.check(name)[2] <= 1e-6
    c = example1_coefficients()
    xs = np.linspace(0, PI, 201)
    assert np.max(np.abs(c.p(xs) - c.p(PI - xs))) > 0.01


@pytest.mark.parametrize("choice", ["zero", "sin2"])
def test_example1_precondition(choice):
    with pytest.raises(ConfigurationError):
        run_example1(choice)


def test_example1_relaxed_accepts_q_only():
    with pytest.raises(ConfigurationError):
        run_example1("q_only")
    # the relaxed variant passes the precondition; its outcome is diagnostic only
    rep = run_example1("q_only", relaxed=True, box=(0.25, 2.25, -1.0, 1.0))
    assert not rep.check("p_differs_from_reflection")[1]


# ---- example 2 ----


def test_example2_report(example2_run):
    rep = example2_run.value
    assert {c[0] for c in rep.checks} == EX2_CHECKS and len(rep.checks) == len(EX2_CHECKS)
    assert rep.passed, rep.checks
    got = sorted(complex(*r[:2]).real for r in rep.details["Lambda2"])
    assert np.allclose(got, [4.0, 8.0, 12.0], atol=1e-6)


@pytest.mark.parametrize("alpha,alpha0", [(PI / 3, PI / 3), (0.0, PI / 3), (PI / 4, PI / 2)])
def test_example2_precondition(alpha, alpha0):
    with pytest.raises(ConfigurationError):
        run_example2(alpha, alpha0)


def test_example2_coefficients_must_vanish_at_ends():
    q = PiecewiseLinear.through([(0.0, 0.5), (PI, 0.0)])
    with pytest.raises(ConfigurationError):
        run_example2(coeff_choice=Coefficients(PI, q=q))
    with pytest.raises(ConfigurationError):
        run_example2(coeff_choice="zero")


# ---- three spectra ----


def test_three_spectra_report(three_spectra_run):
    rep = three_spectra_run.value
    assert [c[0] for c in rep.checks] == ["condition_S_prime_holds", "recovery_error_below_1e-4"]
    assert rep.passed, rep.checks
    assert rep.check("recovery_error_below_1e-4")[2] < 1e-4


def test_three_spectra_zero_truth_aborts():
    with pytest.raises(ConditionViolation) as exc:
        run_three_spectra(PI / 2, "zero", re_max=4.3)
    lam = exc.value.lam
    assert abs(lam.imag) < 1e-6 and abs(lam.real - 2 * round(lam.real / 2)) < 1e-6 and lam.real > 1


def test_three_spectra_zero_truth_reports_overlap():
    from nlpencil.inverse import dirichlet_problem
    from nlpencil.spectra import check_condition_S, spectrum

    par, x = three_spectra_truth("zero")
    prob = dirichlet_problem(par.coefficients(x), PI / 2)
    box = (0.25, 4.3, -1.0, 1.0)
    l0 = spectrum(prob, "L0p", box, a=PI / 2)
    l1 = spectrum(prob, "L1p", box, a=PI / 2)
    assert np.allclose(sorted(z.real for z in l0.values), [2.0, 4.0], atol=1e-8)
    assert np.allclose(sorted(z.real for z in l1.values), [1.0, 2.0, 3.0, 4.0], atol=1e-8)
    rep_pair = check_condition_S(l0, l1)
    assert rep_pair.status == "fails" and abs(rep_pair.pair[0] - 2.0) < 1e-8


def test_three_spectra_a_must_be_interior():
    with pytest.raises(ConfigurationError):
        run_three_spectra(PI)
    with pytest.raises(ConfigurationError):
        run_scenario("example3")


def test_scenario_deterministic(tmp_path):
    a = run_scenario("three_spectra", tmp_path / "a", truth="q_const", a=PI / 3, re_max=5.3, enforce_condition=False)
    b = run_scenario("three_spectra", tmp_path / "b", truth="q_const", a=PI / 3, re_max=5.3, enforce_condition=False)
    assert a.to_dict() == b.to_dict()
    for name in a.artifacts:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
