"""Leading-order asymptotics of the solutions and characteristic functions.

Each model is ``prefactor * exp(E)`` with E complex. Deviations are formed
as ``|y * exp(s - E) / prefactor - 1|`` from the stored mantissa y and
log-scale s of a computed value, so no intermediate ever overflows.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import config
from .charfns import Evaluator
from .errors import ConfigurationError, ContractError, IntegrationError
from .forms import form_weights
from .model import ProblemSpec
from .ode import hermite

KINDS = ("Y1", "Y2", "Phi", "v1", "phi", "v2", "delta1", "delta11")
SCANNABLE = ("Phi", "v1", "phi", "v2", "delta1", "delta11")

# final-radius thresholds for the free problem (U1 = delta_0, p = q = 0):
# the exact deviations are exp(-2 Im(lam) L) with L = T, x or T - x, so
# these are noise floors, except delta1/delta11 where the stated bound is kept
THRESHOLDS = {"delta1": 0.02, "delta11": 0.02, "Phi": 1e-6, "v1": 1e-6, "phi": 1e-6, "v2": 1e-6}


@dataclass(frozen=True)
class SectorSpec:
    delta: float
    radii: tuple[float, ...]
    arg: float

    def __post_init__(self):
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        if not (0.0 < self.delta < math.pi / 2):
            raise ContractError("delta must lie in (0, pi/2)")
        if not self.radii or any(r <= 0 for r in self.radii):
            raise ContractError("radii must be positive")
        if any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise ContractError("radii must be strictly increasing")
        if not (self.delta - 1e-12 <= self.arg <= math.pi - self.delta + 1e-12):
            raise ContractError(f"arg {self.arg} outside [delta, pi - delta]")

    def lambdas(self) -> np.ndarray:
        return np.array(self.radii) * np.exp(1j * self.arg)


@dataclass(frozen=True)
class AsymptoticModel:
    """Leading term of one asymptotic formula.

    ``tail_phase='wkb'`` replaces int_0^{T-x} p by int_x^T p in the v1, v2
    exponents (the two agree when p is constant or symmetric); a diagnostic.
    """

    kind: str
    H1: complex
    T: float
    P: object = field(repr=False)  # s -> int_0^s p
    tail_phase: str = "transcribed"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown model kind {self.kind!r}")
        if self.tail_phase not in ("transcribed", "wkb"):
            raise ContractError("tail_phase must be 'transcribed' or 'wkb'")

    @classmethod
    def for_problem(cls, problem: ProblemSpec, kind: str, tail_phase: str = "transcribed") -> "AsymptoticModel":
        c = problem.coeffs
        return cls(kind, problem.u1.H, problem.T, lambda s: complex(c.integral_p(s)), tail_phase)

    def _tail(self, x: float) -> complex:
        if self.tail_phase == "wkb":
            return self.P(self.T) - self.P(x)
        return self.P(self.T - x)

    def parts(self, x: float, lam, nu: int = 0):
        """(prefactor, exponent) arrays with model = prefactor * exp(exponent)."""
        if nu not in (0, 1):
            raise ContractError("nu must be 0 or 1")
        lam = np.asarray(lam, dtype=complex)
        if np.any(lam == 0):
            raise ContractError("models are undefined at lambda = 0")
        if not (0.0 <= x <= self.T):
            raise ContractError(f"x={x} outside [0, T]")
        k, H, T = self.kind, self.H1, self.T
        il = 1j * lam
        if k == "Y1":
            return il**nu, 1j * (lam * x - self.P(x))
        if k == "Y2":
            return (-il) ** nu, -1j * (lam * x - self.P(x))
        if k == "Phi":
            return il**nu / H, 1j * (lam * x - self.P(x))
        if k == "v1":
            return il**nu / 2, -1j * (lam * (T - x) - self._tail(x))
        if k == "phi":
            return H / 2 * (-il) ** (nu - 1), -1j * (lam * x - self.P(x))
        if k == "v2":
            return (-il) ** (nu - 1), 1j * (lam * (T - x) - self._tail(x))
        if k == "delta1":
            return -H / (2 * il), -1j * (lam * T - self.P(T))
        return H / 2 + 0 * lam, -1j * (lam * T - self.P(T))


def model_value(m: AsymptoticModel, x: float, lam, nu: int = 0):
    """Leading term of the model (no 1 + o(1) factor)."""
    pre, e = m.parts(x, lam, nu)
    out = pre * np.exp(e)
    return complex(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# computed values as (mantissa, log-scale)
# ---------------------------------------------------------------------------


def _computed(problem: ProblemSpec, kind: str, lams: np.ndarray, x: float, nu: int):
    ev = Evaluator(problem, lams)
    if kind in ("delta1", "delta11"):
        Z = ev.Z
        wy, wd = form_weights(problem.u1, Z.x)
        U = Z.y @ wy + Z.dy @ wd
        if kind == "delta1":
            return -U[:, 1], Z.scale_log[:, 1]
        return U[:, 0], Z.scale_log[:, 0]
    if kind == "v1":
        Z = ev.Z
        y, dy = hermite(Z.x, Z.y[:, 0], Z.dy[:, 0], x)
        return (y if nu == 0 else dy), Z.scale_log[:, 0]
    with np.errstate(over="ignore", invalid="ignore"):
        xs, y, dy, s, pole = ev.combined(kind)
    yy, dd = hermite(xs, y, dy, x)
    val = yy if nu == 0 else dd
    return np.where(pole, np.nan, val), s


def _deviation(mant, slog, pre, expo):
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        r = mant * np.exp(slog - expo) / pre
        d = np.abs(r - 1.0)
    return np.where(np.isfinite(d), d, np.nan)


def _constant_tail(problem: ProblemSpec) -> float:
    a = problem.u1.support_end()
    if a >= problem.T * (1 - 1e-12):
        raise ConfigurationError("sigma_1 must be constant on some [a, T] with a < T")
    return a


def deviation_scan(
    problem: ProblemSpec,
    kind: str,
    sector: SectorSpec,
    x: float,
    nu: int = 0,
    tail_phase: str = "transcribed",
) -> list[tuple[float, float]]:
    """(radius, |computed / model - 1|) along the ray; NaN where unavailable."""
    problem.require_strict("deviation_scan")
    if kind not in SCANNABLE:
        raise ContractError(f"{kind!r} has no computed counterpart (model only)")
    if kind in ("phi", "v2"):
        _constant_tail(problem)
    model = AsymptoticModel.for_problem(problem, kind, tail_phase)
    lams = sector.lambdas()
    pre, expo = model.parts(x, lams, nu)
    try:
        mant, slog = _computed(problem, kind, lams, x, nu)
        dev = _deviation(mant, slog, pre, expo)
    except IntegrationError:
        dev = np.full(lams.size, np.nan)
        for i, lam in enumerate(lams):
            try:
                m1, s1 = _computed(problem, kind, np.array([lam]), x, nu)
                dev[i] = _deviation(m1, s1, pre[i], expo[i])[0]
            except IntegrationError:
                warnings.warn(f"integration failed at radius {sector.radii[i]}; deviation unavailable")
    return [(r, float(d)) for r, d in zip(sector.radii, dev)]


def non_increasing_tail(devs, floor: float = 1e-6) -> bool:
    """Last deviation no larger than the one before it, or both at the noise floor."""
    vals = [d for _, d in devs] if devs and isinstance(devs[0], tuple) else list(devs)
    if len(vals) < 2 or not all(np.isfinite(vals[-2:])):
        return False
    return vals[-1] <= max(vals[-2], floor)


def scan_rows(kind: str, arg: float, devs):
    for r, d in devs:
        yield (kind, repr(float(arg)), repr(float(r)), repr(float(d)))


def scan_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("kind", "arg", "radius", "deviation"))
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# growth bounds in the upper half-plane
# ---------------------------------------------------------------------------


@dataclass
class BoundReport:
    kind: str
    x: float
    max_ratio: float
    bound: float
    used: int
    excluded: int
    passed: bool
    ratios: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "x": self.x,
            "max_ratio": self.max_ratio,
            "bound": self.bound,
            "used": self.used,
            "excluded": self.excluded,
            "passed": self.passed,
        }


_FILTER = {"Phi": "Lambda1", "v2": "Lambda11"}


def bound_check(
    problem: ProblemSpec,
    kind: str,
    lambda_samples,
    min_root_gap: float,
    x: float | None = None,
    roots=None,
    bound: float | None = None,
) -> BoundReport:
    """max |computed| / envelope over upper half-plane samples away from the filter roots.

    The envelope is |lam|^nu |exp(E)| with the exponent of the matching
    asymptotic model (lam^{nu-1} for phi and v2). Phi samples are kept away
    from Lambda1 roots, v2 samples from Lambda11 roots; pass ``roots`` to
    supply them, otherwise they are searched for in a box around the samples.
    """
    from .spectra import Box, spectrum

    problem.require_strict("bound_check")
    if kind not in ("v1", "Phi", "phi", "v2"):
        raise ContractError(f"no growth estimate for {kind!r}")
    T = problem.T
    x = T / 2 if x is None else float(x)
    if not (0.0 < x < T):
        raise ContractError("estimates hold for x in (0, T)")
    if kind in ("phi", "v2"):
        a = _constant_tail(problem)
        if kind == "phi" and x < a / 2:
            raise ConfigurationError(f"phi estimate needs x >= a/2 = {a / 2}")
    bound = config.current().bound_constant if bound is None else bound
    lams = np.atleast_1d(np.asarray(lambda_samples, dtype=complex))
    if np.any(lams.imag < 0):
        raise ContractError("samples must lie in the closed upper half-plane")
    keep = lams != 0
    if kind in _FILTER:
        if roots is None:
            box = Box(
                lams.real.min() - 1.0, lams.real.max() + 1.0, min(lams.imag.min(), 0.0) - 1.0, lams.imag.max() + 1.0
            )
            roots = spectrum(problem, _FILTER[kind], box).values
        roots = np.asarray(list(roots), dtype=complex)
        if roots.size:
            dist = np.min(np.abs(lams[:, None] - roots[None, :]), axis=1)
            keep &= dist >= min_root_gap
    used = lams[keep]
    ratios: list[float] = []
    if used.size:
        model = AsymptoticModel.for_problem(problem, kind)
        _, expo = model.parts(x, used, 0)
        power = 0 if kind in ("v1", "Phi") else -1
        mant, slog = _computed(problem, kind, used, x, 0)
        with np.errstate(over="ignore", invalid="ignore"):
            r = np.abs(mant) * np.exp(slog - expo.real) / np.abs(used) ** power
        ratios = [float(v) for v in r]
    mx = max(ratios, default=0.0)
    ok = bool(ratios) and all(np.isfinite(ratios)) and mx <= bound
    return BoundReport(kind, x, mx, bound, int(used.size), int(lams.size - used.size), ok, ratios)
