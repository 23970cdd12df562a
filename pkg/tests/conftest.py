import math
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nlpencil import config
from nlpencil.model import BoundaryMeasure, Coefficients, Constant, PiecewiseLinear, ProblemSpec, TrigSeries, free_problem

settings.register_profile(
    "pencil",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("pencil")

PI = math.pi


@pytest.fixture(autouse=True)
def _fresh_config():
    config.reset()
    yield
    config.reset()


@pytest.fixture
def free():
    return free_problem()


def constant_problem(p=0.0, q=0.0, T=PI, u2=None):
    coeffs = Coefficients(T, Constant(p), Constant(q))
    u1 = BoundaryMeasure.point(0.0, T, 1.0, 1)
    return ProblemSpec(coeffs, u1, u2 if u2 is not None else BoundaryMeasure.point(T / 2, T, 1.0, 2))


def trig_coeffs(T=PI):
    return Coefficients(T, TrigSeries(0.1, (("cos", 1.0, 0.4), ("sin", 2.0, -0.3))), TrigSeries(0.2, (("sin", 1.0, 0.5),)))


def pwl_coeffs(T=PI):
    return Coefficients(
        T,
        PiecewiseLinear((0.0, 1.0, T), (0.2, -0.4, 0.3)),
        PiecewiseLinear((0.0, 1.5, 1.5, T), (0.0, 0.8, -0.5, 0.1)),
    )


class Timed:
    """Result of a callable plus its wall time in seconds."""

    def __init__(self, fn, *args, **kw):
        t0 = time.perf_counter()
        self.value = fn(*args, **kw)
        self.seconds = time.perf_counter() - t0


# scenario runs are expensive; several test modules inspect the same reports


@pytest.fixture(scope="session")
def example1_run():
    from nlpencil.experiments import run_example1

    return Timed(run_example1)


@pytest.fixture(scope="session")
def example2_run():
    from nlpencil.experiments import run_example2

    return Timed(run_example2, PI / 4, PI / 3)


@pytest.fixture(scope="session")
def three_spectra_run():
    from nlpencil.experiments import run_three_spectra

    return Timed(run_three_spectra, PI / 2)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
