import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlpencil.asymptotics import (
    THRESHOLDS,
    AsymptoticModel,
    SectorSpec,
    bound_check,
    deviation_scan,
    model_value,
    non_increasing_tail,
    scan_csv,
    scan_rows,
)
from nlpencil.errors import ConfigurationError, ContractError
from nlpencil.model import BoundaryMeasure, Coefficients, Constant, ProblemSpec, free_problem

from conftest import PI

ARGS = (0.3, PI / 2, PI - 0.3)
RADII = (5.0, 10.0, 20.0, 40.0)


def model(kind, problem=None):
    return AsymptoticModel.for_problem(problem or free_problem(), kind)


def test_model_examples():
    assert model_value(model("Phi"), 0.0, 3 + 2j) == pytest.approx(1.0)
    assert model_value(model("delta1"), PI, 10j) == pytest.approx(math.exp(10 * PI) / 20, rel=1e-12)
    assert model_value(model("v1"), PI, 7 - 1j) == pytest.approx(0.5)


def test_model_contracts():
    with pytest.raises(ContractError):
        model_value(model("Phi"), 0.5, 0)
    with pytest.raises(ContractError):
        model_value(model("Phi"), 4.0, 1.0)
    with pytest.raises(ContractError):
        model_value(model("Phi"), 0.5, 1.0, nu=2)
    with pytest.raises(ContractError):
        AsymptoticModel("Y3", 1, PI, lambda s: 0)


@given(st.floats(0.0, PI), st.floats(-60, 60).filter(lambda r: abs(r) > 1e-3))
def test_y1_y2_product_modulus_constant_on_real_axis(x, lam):
    prob = ProblemSpec(Coefficients(PI, Constant(0.4)), BoundaryMeasure.point(0.0, PI), BoundaryMeasure.point(1.0, PI, label=2))
    prod = model_value(model("Y1", prob), x, lam) * model_value(model("Y2", prob), x, lam)
    assert abs(abs(prod) - 1.0) < 1e-12


def test_sector_validation():
    with pytest.raises(ContractError):
        SectorSpec(0.0, RADII, 1.0)
    with pytest.raises(ContractError):
        SectorSpec(0.3, (5, 5, 10), 1.0)
    with pytest.raises(ContractError):
        SectorSpec(0.3, RADII, 0.1)
    assert np.allclose(np.abs(SectorSpec(0.3, RADII, 1.0).lambdas()), RADII)


# ---- free-problem oracles ----


def oracle(kind, lam, x, T=PI):
    """Exact deviations for p = q = 0, U1 = delta_0, from closed-form solutions."""
    if kind == "delta1":
        exact = np.sin(lam * T) / lam
        lead = -1 / (2j * lam) * np.exp(-1j * lam * T)
    elif kind == "delta11":
        exact = np.cos(lam * T)
        lead = 0.5 * np.exp(-1j * lam * T)
    elif kind == "Phi":
        exact = np.sin(lam * (T - x)) / np.sin(lam * T)
        lead = np.exp(1j * lam * x)
    elif kind == "v1":
        exact = np.cos(lam * (T - x))
        lead = 0.5 * np.exp(-1j * lam * (T - x))
    return np.abs(exact / lead - 1)


@pytest.mark.parametrize("kind", ["delta1", "delta11", "Phi", "v1"])
@pytest.mark.parametrize("arg", ARGS)
def test_deviation_matches_closed_form(kind, arg):
    x = PI / 2
    sector = SectorSpec(0.3, RADII, arg)
    devs = deviation_scan(free_problem(), kind, sector, x)
    ref = oracle(kind, sector.lambdas(), x)
    got = np.array([d for _, d in devs])
    assert np.all(np.abs(got - ref) <= 1e-6 * np.maximum(1.0, ref) + 1e-9)


def test_delta1_imaginary_axis_example():
    devs = deviation_scan(free_problem(), "delta1", SectorSpec(0.3, RADII, PI / 2), PI)
    vals = [d for _, d in devs]
    # exact deviation exp(-2 r pi) is below 1e-13 from r = 5 on: only numerical error remains
    assert all(b <= max(a, 1e-6) for a, b in zip(vals, vals[1:]))
    assert max(vals) < 1e-8  # integration error grows mildly with |lam|
    assert vals[-1] < 0.02


def test_phi_at_zero_example():
    devs = deviation_scan(free_problem(), "Phi", SectorSpec(0.3, RADII, PI / 2), 0.0)
    assert max(d for _, d in devs) < 1e-6


def test_v1_at_endpoint_oracle():
    # v1(T) = 1 exactly and the leading term is 1/2, so the deviation is exactly 1
    devs = deviation_scan(free_problem(), "v1", SectorSpec(0.3, RADII, PI / 2), PI)
    assert all(d == pytest.approx(1.0, abs=1e-9) for _, d in devs)


@pytest.mark.xfail(strict=True, reason="v1(T) = 1 against a leading term 1/2: the deviation is exactly 1 at every radius")
def test_v1_at_endpoint_threshold():
    devs = deviation_scan(free_problem(), "v1", SectorSpec(0.3, RADII, PI / 2), PI)
    assert devs[-1][1] < 0.1


def test_phi_and_v2_need_constant_tail():
    prob = ProblemSpec(Coefficients(PI), BoundaryMeasure(PI, ((0.0, 1.0),), np.ones(1025)), BoundaryMeasure.point(1.0, PI, label=2))
    with pytest.raises(ConfigurationError):
        deviation_scan(prob, "phi", SectorSpec(0.3, RADII, 1.0), 2.0)
    with pytest.raises(ConfigurationError):
        bound_check(prob, "phi", [3 + 4j], 1e-3)


def test_non_increasing_tail():
    assert non_increasing_tail([(1, 0.5), (2, 0.1), (3, 0.05)])
    assert not non_increasing_tail([(1, 0.5), (2, 0.1), (3, 0.2)])
    assert non_increasing_tail([(1, 1e-9), (2, 3e-9)])  # both at the noise floor
    assert not non_increasing_tail([(1, 0.5), (2, float("nan"))])


def test_scan_csv():
    text = scan_csv(scan_rows("v1", 0.3, [(5.0, 0.1)]))
    assert text.splitlines() == ["kind,arg,radius,deviation", "v1,0.3,5.0,0.1"]


def test_thresholds_cover_scannable():
    assert set(THRESHOLDS) == {"Phi", "v1", "phi", "v2", "delta1", "delta11"}


# ---- growth bounds ----


def test_bound_v1_example():
    r = bound_check(free_problem(), "v1", [3 + 4j], 1e-3, x=PI / 2)
    assert r.passed and r.used == 1
    # |cos(lam (T - x))| / |exp(Im lam (T - x))| for lam = 3 + 4i
    lam = 3 + 4j
    assert r.max_ratio == pytest.approx(abs(np.cos(lam * PI / 2)) / math.exp(4 * PI / 2), rel=1e-8)


def test_bound_excludes_samples_near_roots():
    r = bound_check(free_problem(), "Phi", [2 + 5e-4j, 2.5 + 1j], 1e-3, roots=[1, 2, 3])
    assert r.excluded == 1 and r.used == 1


def test_bound_searches_roots_when_not_given():
    r = bound_check(free_problem(), "Phi", [1 + 1e-4j, 1.5 + 0.5j], 1e-3)
    assert r.excluded == 1


def test_bound_rejects_lower_half_plane():
    with pytest.raises(ContractError):
        bound_check(free_problem(), "v1", [1 - 1j], 1e-3)
