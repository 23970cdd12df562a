"""Problem data: coefficients p, q on [0, T] and the two boundary measures.

Coefficients come from three closed-form families (constant, piecewise
linear, finite trigonometric series) so that the running integral of p is
exact. A boundary measure is a list of atoms plus an absolutely continuous
part sampled on a uniform grid; the atom at t = 0 carries H.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import config
from .errors import ConfigurationError, DomainError

_SLACK = 1e-12


def _cpx(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    return complex(v)


def _pair(z: complex) -> list[float]:
    z = complex(z)
    return [float(z.real), float(z.imag)]


# ---------------------------------------------------------------------------
# coefficient families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    value: complex = 0j

    family = "constant"

    def __call__(self, x, side: int = 0):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape, complex(self.value))

    def integral(self, x):
        return complex(self.value) * np.asarray(x, dtype=float)

    def breakpoints(self) -> tuple[float, ...]:
        return ()

    def reflect(self, T: float) -> "Constant":
        return self

    def to_dict(self) -> dict:
        return {"family": self.family, "value": _pair(self.value)}


@dataclass(frozen=True)
class PiecewiseLinear:
    """Linear interpolation through knots ``(x_i, v_i)``.

    A repeated abscissa encodes a jump; ``side`` picks the one-sided limit
    there (``+1`` right, ``-1`` left, ``0`` right by convention).
    """

    xs: tuple[float, ...]
    values: tuple[complex, ...]

    family = "piecewise_linear"

    def __post_init__(self):
        if len(self.xs) != len(self.values) or len(self.xs) < 2:
            raise ConfigurationError("piecewise-linear needs >= 2 knots with matching values")
        if any(b < a for a, b in zip(self.xs, self.xs[1:])):
            raise ConfigurationError("knot abscissae must be non-decreasing")
        object.__setattr__(self, "xs", tuple(float(x) for x in self.xs))
        object.__setattr__(self, "values", tuple(complex(v) for v in self.values))

    @classmethod
    def through(cls, points: Iterable[Sequence[float]]) -> "PiecewiseLinear":
        pts = [tuple(p) for p in points]
        return cls(tuple(p[0] for p in pts), tuple(complex(p[1]) for p in pts))

    def _segment(self, x: np.ndarray, side: int) -> np.ndarray:
        xs = np.asarray(self.xs)
        how = "left" if side < 0 else "right"
        k = np.searchsorted(xs, x, side=how) - 1
        return np.clip(k, 0, len(xs) - 2)

    def __call__(self, x, side: int = 0):
        x = np.asarray(x, dtype=float)
        xs = np.asarray(self.xs)
        vs = np.asarray(self.values)
        k = self._segment(x, side)
        x0, x1 = xs[k], xs[k + 1]
        v0, v1 = vs[k], vs[k + 1]
        width = x1 - x0
        safe = np.where(width > 0, width, 1.0)
        s = np.where(width > 0, (x - x0) / safe, 0.0)
        return v0 + (v1 - v0) * s

    def integral(self, x):
        x = np.asarray(x, dtype=float)
        xs = np.asarray(self.xs)
        vs = np.asarray(self.values)
        seg = 0.5 * (vs[1:] + vs[:-1]) * np.diff(xs)
        cum = np.concatenate([[0j], np.cumsum(seg)])
        k = self._segment(x, 1)
        partial = (x - xs[k]) * 0.5 * (vs[k] + self(x, side=1))
        return cum[k] + partial

    def breakpoints(self) -> tuple[float, ...]:
        return tuple(sorted(set(self.xs)))

    def reflect(self, T: float) -> "PiecewiseLinear":
        return PiecewiseLinear(tuple(T - x for x in reversed(self.xs)), tuple(reversed(self.values)))

    def to_dict(self) -> dict:
        return {"family": self.family, "knots": [[x, *_pair(v)] for x, v in zip(self.xs, self.values)]}


@dataclass(frozen=True)
class TrigSeries:
    """``const + sum coef * sin(freq x)`` or ``cos(freq x)`` terms."""

    const: complex = 0j
    terms: tuple[tuple[str, float, complex], ...] = ()

    family = "trig"

    def __post_init__(self):
        clean = []
        for kind, freq, coef in self.terms:
            if kind not in ("sin", "cos"):
                raise ConfigurationError(f"unknown trig term kind {kind!r}")
            clean.append((kind, float(freq), complex(coef)))
        object.__setattr__(self, "terms", tuple(clean))
        object.__setattr__(self, "const", complex(self.const))

    def __call__(self, x, side: int = 0):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.const)
        for kind, w, c in self.terms:
            out = out + c * (np.sin(w * x) if kind == "sin" else np.cos(w * x))
        return out

    def integral(self, x):
        x = np.asarray(x, dtype=float)
        out = self.const * x
        for kind, w, c in self.terms:
            if w == 0.0:
                out = out + (0.0 if kind == "sin" else c * x)
            elif kind == "sin":
                out = out + c * (1.0 - np.cos(w * x)) / w
            else:
                out = out + c * np.sin(w * x) / w
        return out

    def breakpoints(self) -> tuple[float, ...]:
        return ()

    def reflect(self, T: float) -> "TrigSeries":
        acc: dict[tuple[str, float], complex] = {}
        for kind, w, c in self.terms:
            sw, cw = math.sin(w * T), math.cos(w * T)
            if kind == "sin":
                # sin(w(T - x)) = sin wT cos wx - cos wT sin wx
                acc[("cos", w)] = acc.get(("cos", w), 0j) + c * sw
                acc[("sin", w)] = acc.get(("sin", w), 0j) - c * cw
            else:
                acc[("cos", w)] = acc.get(("cos", w), 0j) + c * cw
                acc[("sin", w)] = acc.get(("sin", w), 0j) + c * sw
        terms = tuple((k, w, c) for (k, w), c in sorted(acc.items()))
        return TrigSeries(self.const, terms)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "const": _pair(self.const),
            "terms": [{"kind": k, "freq": w, "coef": _pair(c)} for k, w, c in self.terms],
        }


CoefficientFn = Constant | PiecewiseLinear | TrigSeries


def coefficient_from_dict(d: dict) -> CoefficientFn:
    fam = d.get("family")
    if fam == "constant":
        return Constant(_cpx(d.get("value", 0.0)))
    if fam == "piecewise_linear":
        knots = d["knots"]
        return PiecewiseLinear(
            tuple(float(k[0]) for k in knots),
            tuple(complex(float(k[1]), float(k[2]) if len(k) > 2 else 0.0) for k in knots),
        )
    if fam == "trig":
        terms = tuple((t["kind"], float(t["freq"]), _cpx(t["coef"])) for t in d.get("terms", []))
        return TrigSeries(_cpx(d.get("const", 0.0)), terms)
    raise ConfigurationError(f"unknown coefficient family {fam!r}")


@dataclass(frozen=True)
class Coefficients:
    T: float
    p: CoefficientFn = field(default_factory=Constant)
    q: CoefficientFn = field(default_factory=Constant)

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigurationError("T must be a positive finite real")
        object.__setattr__(self, "T", float(self.T))
        for name in ("p", "q"):
            fn = getattr(self, name)
            if isinstance(fn, PiecewiseLinear):
                if abs(fn.xs[0]) > _SLACK * self.T or abs(fn.xs[-1] - self.T) > _SLACK * self.T:
                    raise ConfigurationError(f"{name}: piecewise-linear knots must span [0, T]")
        if isinstance(self.p, PiecewiseLinear) and len(self.p.xs) != len(set(self.p.xs)):
            raise ConfigurationError("p must be continuous (no repeated knots)")

    def _check(self, x):
        xa = np.asarray(x, dtype=float)
        if np.any(xa < -_SLACK * self.T) or np.any(xa > self.T * (1 + _SLACK)):
            raise DomainError(f"x outside [0, {self.T}]")
        return np.clip(xa, 0.0, self.T)

    def evaluate(self, which: str, x, side: int = 0):
        fn = self._fn(which)
        return fn(self._check(x), side)

    def _fn(self, which: str) -> CoefficientFn:
        if which not in ("p", "q"):
            raise ValueError("which must be 'p' or 'q'")
        return getattr(self, which)

    def integral_p(self, x):
        return self.p.integral(self._check(x))

    def breakpoints(self) -> tuple[float, ...]:
        pts = set(self.p.breakpoints()) | set(self.q.breakpoints())
        return tuple(sorted(b for b in pts if 0.0 < b < self.T))

    def reflected(self) -> "Coefficients":
        """Coefficients of the mirrored problem, x -> T - x."""
        return Coefficients(self.T, self.p.reflect(self.T), self.q.reflect(self.T))

    def to_dict(self) -> dict:
        return {"T": self.T, "p": self.p.to_dict(), "q": self.q.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Coefficients":
        return cls(float(d["T"]), coefficient_from_dict(d["p"]), coefficient_from_dict(d["q"]))


def evaluate_coeff(coeffs: Coefficients, which: str, x: float) -> complex:
    """Value of p or q at a single point of [0, T]."""
    return complex(coeffs.evaluate(which, x))


def integral_p(coeffs: Coefficients, x: float) -> complex:
    """Closed-form integral of p over [0, x]."""
    return complex(coeffs.integral_p(x))


# ---------------------------------------------------------------------------
# boundary measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoundaryMeasure:
    """Complex measure on [0, T]: atoms plus a sampled density.

    ``density`` holds samples on ``linspace(0, T, len(density))``; the
    density is integrated over ``[0, density_end]`` only, which is how
    truncation is represented exactly.
    """

    T: float
    atoms: tuple[tuple[float, complex], ...] = ()
    density: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    density_end: float | None = None
    label: int = 1

    def __post_init__(self):
        T = float(self.T)
        object.__setattr__(self, "T", T)
        atoms = []
        for t, w in self.atoms:
            t = float(t)
            if t < -_SLACK * T or t > T * (1 + _SLACK):
                raise DomainError(f"atom location {t} outside [0, {T}]")
            atoms.append((min(max(t, 0.0), T), complex(w)))
        atoms.sort(key=lambda a: a[0])
        object.__setattr__(self, "atoms", tuple(atoms))
        dens = np.array(self.density, dtype=complex).ravel()
        if dens.size == 1:
            raise ConfigurationError("density needs at least two samples (or none)")
        dens.setflags(write=False)
        object.__setattr__(self, "density", dens)
        end = T if self.density_end is None else float(self.density_end)
        if not (0.0 <= end <= T * (1 + _SLACK)):
            raise DomainError("density_end outside [0, T]")
        object.__setattr__(self, "density_end", min(end, T))
        if self.label not in (1, 2):
            raise ConfigurationError("label must be 1 or 2")

    # -- constructors -----------------------------------------------------
    @classmethod
    def point(cls, t: float, T: float, weight: complex = 1.0, label: int = 1) -> "BoundaryMeasure":
        return cls(T, ((t, weight),), label=label)

    @classmethod
    def from_density_function(cls, fn, T: float, n: int = 1025, atoms=(), label: int = 1) -> "BoundaryMeasure":
        xs = np.linspace(0.0, T, n)
        return cls(T, tuple(atoms), np.asarray(fn(xs), dtype=complex) * np.ones(n), label=label)

    # -- accessors ----------------------------------------------------------
    @property
    def H(self) -> complex:
        """Weight of the atom at t = 0."""
        return sum((w for t, w in self.atoms if t == 0.0), 0j)

    @property
    def density_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.density.size) if self.density.size else np.zeros(0)

    @property
    def total_variation(self) -> float:
        tv = sum(abs(w) for _, w in self.atoms)
        if self.density.size:
            tv += float(np.sum(trapezoid_weights(self.density_grid, self.density_end) * np.abs(self.density)))
        return float(tv)

    def support_end(self) -> float:
        """Smallest a with sigma constant on [a, T] (0 when only an atom at 0)."""
        end = 0.0
        for t, w in self.atoms:
            if w != 0:
                end = max(end, t)
        if self.density.size:
            xs = self.density_grid
            nz = np.nonzero(self.density)[0]
            if nz.size:
                last = nz[-1]
                reach = xs[min(last + 1, xs.size - 1)]
                end = max(end, min(reach, self.density_end))
        return float(end)

    def truncate(self, a: float) -> "BoundaryMeasure":
        return truncate_measure(self, a)

    def to_dict(self) -> dict:
        d = {
            "atoms": [[t, *_pair(w)] for t, w in self.atoms],
            "density": [_pair(v) for v in self.density],
            "grid": int(self.density.size),
            "label": self.label,
        }
        if self.density_end != self.T:
            d["density_end"] = self.density_end
        return d

    @classmethod
    def from_dict(cls, d: dict, T: float, label: int | None = None) -> "BoundaryMeasure":
        dens = [complex(float(v[0]), float(v[1])) for v in d.get("density", [])]
        grid = int(d.get("grid", len(dens)))
        if grid != len(dens):
            raise ConfigurationError(f"density grid size {grid} does not match {len(dens)} samples")
        return cls(
            T,
            tuple((float(a[0]), complex(float(a[1]), float(a[2]) if len(a) > 2 else 0.0)) for a in d.get("atoms", [])),
            np.array(dens, dtype=complex),
            d.get("density_end"),
            int(d.get("label", label or 1)) if label is None else label,
        )

    def __eq__(self, other):
        if not isinstance(other, BoundaryMeasure):
            return NotImplemented
        return (
            self.T == other.T
            and self.atoms == other.atoms
            and self.density_end == other.density_end
            and self.label == other.label
            and np.array_equal(self.density, other.density)
        )

    __hash__ = None


def trapezoid_weights(xs: np.ndarray, end: float) -> np.ndarray:
    """Trapezoid weights on a uniform grid for the integral over ``[0, end]``.

    The last partial cell integrates the linear interpolant exactly, so the
    rule is additive in ``end``.
    """
    n = xs.size
    w = np.zeros(n)
    if n < 2 or end <= 0.0:
        return w
    h = xs[1] - xs[0]
    pos = end / h
    k = int(math.floor(pos + 1e-9))
    if k >= n - 1:
        w[:] = h
        w[0] = w[-1] = 0.5 * h
        return w
    if k > 0:
        w[: k + 1] = h
        w[0] = 0.5 * h
        w[k] = 0.5 * h
    r = pos - k
    if r > 1e-9:
        w[k] += h * r * (2.0 - r) / 2.0
        w[k + 1] += h * r * r / 2.0
    return w


def truncate_measure(m: BoundaryMeasure, a: float) -> BoundaryMeasure:
    """Restriction of ``m`` to ``[0, a]``; H is unchanged."""
    if not (a > 0.0) or a > m.T * (1 + _SLACK):
        raise DomainError(f"truncation point {a} outside (0, {m.T}]")
    a = min(float(a), m.T)
    if a == m.T:
        return m
    atoms = tuple((t, w) for t, w in m.atoms if t <= a)
    return BoundaryMeasure(m.T, atoms, m.density, min(a, m.density_end), m.label)


# ---------------------------------------------------------------------------
# problem
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    coeffs: Coefficients
    u1: BoundaryMeasure
    u2: BoundaryMeasure
    strict_mode: bool = True

    def __post_init__(self):
        for m in (self.u1, self.u2):
            if abs(m.T - self.coeffs.T) > _SLACK * self.coeffs.T:
                raise ConfigurationError("measure and coefficients disagree on T")
        if self.strict_mode and abs(self.u1.H) <= config.current().h1_floor:
            raise ConfigurationError("strict mode requires H1 != 0 (atom of U1 at t = 0)")

    @property
    def T(self) -> float:
        return self.coeffs.T

    def require_strict(self, what: str = "this operation"):
        if not self.strict_mode:
            raise ConfigurationError(f"{what} requires strict_mode (H1 != 0)")

    def with_coeffs(self, coeffs: Coefficients) -> "ProblemSpec":
        return ProblemSpec(coeffs, self.u1, self.u2, self.strict_mode)

    def reflected(self) -> "ProblemSpec":
        """Same boundary forms, mirrored coefficients."""
        return self.with_coeffs(self.coeffs.reflected())

    def to_dict(self) -> dict:
        return {
            "coefficients": self.coeffs.to_dict(),
            "measures": {"u1": self.u1.to_dict(), "u2": self.u2.to_dict()},
            "strict_mode": self.strict_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        coeffs = Coefficients.from_dict(d["coefficients"])
        ms = d["measures"]
        return cls(
            coeffs,
            BoundaryMeasure.from_dict(ms["u1"], coeffs.T, 1),
            BoundaryMeasure.from_dict(ms["u2"], coeffs.T, 2),
            bool(d.get("strict_mode", True)),
        )

    def __eq__(self, other):
        if not isinstance(other, ProblemSpec):
            return NotImplemented
        return (
            self.coeffs == other.coeffs
            and self.u1 == other.u1
            and self.u2 == other.u2
            and self.strict_mode == other.strict_mode
        )

    __hash__ = None


def dumps_problem(problem: ProblemSpec) -> str:
    return json.dumps(problem.to_dict(), indent=2, sort_keys=True)


def save_problem(problem: ProblemSpec, path) -> None:
    Path(path).write_text(dumps_problem(problem) + "\n")


def load_problem(path) -> ProblemSpec:
    return ProblemSpec.from_dict(json.loads(Path(path).read_text()))


def free_problem(T: float = math.pi, u2: BoundaryMeasure | None = None) -> ProblemSpec:
    """p = q = 0 with U1 = delta at 0 (and U2 = delta at T/2 unless given)."""
    return ProblemSpec(
        Coefficients(T),
        BoundaryMeasure.point(0.0, T, 1.0, label=1),
        u2 if u2 is not None else BoundaryMeasure.point(T / 2, T, 1.0, label=2),
    )


def random_problem(rng: np.random.Generator, T: float = math.pi, complex_coeffs: bool = False, n: int = 1025) -> ProblemSpec:
    """Problem drawn from the model families with every coefficient of modulus <= 1.

    Used by the identity suite and the property tests.
    """

    def c():
        if complex_coeffs:
            return complex(rng.uniform(-1, 1), rng.uniform(-1, 1)) / math.sqrt(2)
        return complex(rng.uniform(-1, 1))

    def trig():
        terms = tuple((str(rng.choice(["sin", "cos"])), float(rng.integers(1, 4)), c()) for _ in range(2))
        return TrigSeries(c(), terms)

    def pwl(jump: bool):
        xs = sorted(rng.uniform(0.1, 0.9, 3) * T)
        if jump:
            xs.insert(2, xs[1])
        xs = [0.0] + list(xs) + [T]
        return PiecewiseLinear(tuple(xs), tuple(c() for _ in xs))

    p = trig() if rng.random() < 0.5 else pwl(False)
    q = trig() if rng.random() < 0.5 else pwl(True)
    xs = np.linspace(0.0, T, n)
    H1 = complex(rng.uniform(0.5, 1.0)) * (1 if rng.random() < 0.5 else -1)
    a1 = float(rng.uniform(0.3, 0.8) * T)
    dens1 = np.where(xs <= a1, c() * np.cos(xs) + c(), 0.0)
    u1 = BoundaryMeasure(T, ((0.0, H1), (float(rng.uniform(0.1, 0.9) * T), c())), dens1, label=1)
    dens2 = c() + c() * xs / T
    u2 = BoundaryMeasure(T, ((float(rng.uniform(0.1, 0.9) * T), c()),), dens2, label=2)
    return ProblemSpec(Coefficients(T, p, q), u1, u2)
