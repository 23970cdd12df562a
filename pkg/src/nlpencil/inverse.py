"""Finite-dimensional inverse problems for the pencil.

The unknown (p, q) is a point in a small linear family. The integral of p
over [0, T] is fixed by construction: p = mean + sum c_k (b_k - mean(b_k)).
Data are matched through characteristic-function values, so a spectral
residual vanishes exactly when every target is an eigenvalue of the
candidate problem.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config
from .charfns import Evaluator, dirichlet_function
from .errors import ConfigurationError, ContractError, InverseError
from .model import BoundaryMeasure, Coefficients, Constant, PiecewiseLinear, ProblemSpec, TrigSeries

DATA_KINDS = ("weyl_and_omega", "two_spectra", "three_spectra")


# ---------------------------------------------------------------------------
# parametrization
# ---------------------------------------------------------------------------


def _trig_mean(kind: str, w: float, T: float) -> float:
    if w == 0.0:
        return 0.0 if kind == "sin" else 1.0
    if kind == "sin":
        return (1.0 - math.cos(w * T)) / (w * T)
    return math.sin(w * T) / (w * T)


@dataclass(frozen=True)
class Parametrization:
    """Linear family for (p, q).

    ``p_terms``/``q_terms`` are trig terms ``(kind, freq)`` (``("const", 0)``
    allowed for q) when the family is ``trig``; for ``pwlinear`` they are the
    knot abscissae and each parameter is the value of one hat function.
    With ``fixed_integral_p=None`` the mean of p becomes the first parameter.
    """

    T: float
    p_family: str = "trig"
    p_terms: tuple = ()
    q_family: str = "trig"
    q_terms: tuple = ()
    fixed_integral_p: complex | None = 0.0

    def __post_init__(self):
        for fam in (self.p_family, self.q_family):
            if fam not in ("trig", "pwlinear"):
                raise ConfigurationError(f"unknown family {fam!r}")
        object.__setattr__(self, "p_terms", tuple(tuple(t) if isinstance(t, (list, tuple)) else t for t in self.p_terms))
        object.__setattr__(self, "q_terms", tuple(tuple(t) if isinstance(t, (list, tuple)) else t for t in self.q_terms))
        if self.dim < 1:
            raise ConfigurationError("parametrization needs at least one parameter")

    @property
    def free_mean(self) -> bool:
        return self.fixed_integral_p is None

    @property
    def p_dim(self) -> int:
        return len(self.p_terms) + (1 if self.free_mean else 0)

    @property
    def q_dim(self) -> int:
        return len(self.q_terms)

    @property
    def dim(self) -> int:
        return self.p_dim + self.q_dim

    def _hat_values(self, knots, k):
        return tuple(1.0 if i == k else 0.0 for i in range(len(knots)))

    def _build(self, family, terms, coefs, mean_adjust: bool, mean: float):
        T = self.T
        if family == "trig":
            const = mean
            out = []
            for (kind, w), c in zip(terms, coefs):
                if kind == "const":
                    if mean_adjust:
                        raise ConfigurationError("p terms must not include a constant")
                    const += c
                    continue
                if mean_adjust:
                    const -= c * _trig_mean(kind, w, T)
                out.append((kind, float(w), c))
            return TrigSeries(const, tuple(out))
        knots = tuple(float(t) for t in terms)
        if knots[0] != 0.0 or abs(knots[-1] - T) > 1e-12 * T:
            raise ConfigurationError("pwlinear knots must start at 0 and end at T")
        vals = np.asarray(coefs, dtype=float)
        if mean_adjust:
            w = np.diff(knots)
            hat_mean = np.zeros(len(knots))
            hat_mean[:-1] += 0.5 * w
            hat_mean[1:] += 0.5 * w
            hat_mean /= T
            vals = vals - float(vals @ hat_mean) + mean
        else:
            vals = vals + mean
        return PiecewiseLinear(knots, tuple(vals))

    def coefficients(self, params) -> Coefficients:
        params = np.asarray(params, dtype=float)
        if params.size != self.dim:
            raise ContractError(f"expected {self.dim} parameters, got {params.size}")
        if self.free_mean:
            mean, pc = params[0], params[1 : self.p_dim]
        else:
            mean, pc = complex(self.fixed_integral_p) / self.T, params[: self.p_dim]
        qc = params[self.p_dim :]
        if self.p_terms:
            p = self._build(self.p_family, self.p_terms, pc, True, mean)
        else:
            p = Constant(mean)
        q = self._build(self.q_family, self.q_terms, qc, False, 0.0) if self.q_terms else Constant(0.0)
        return Coefficients(self.T, p, q)

    def to_dict(self) -> dict:
        fp = self.fixed_integral_p
        return {
            "T": self.T,
            "p_family": self.p_family,
            "p_terms": [list(t) if isinstance(t, tuple) else t for t in self.p_terms],
            "q_family": self.q_family,
            "q_terms": [list(t) if isinstance(t, tuple) else t for t in self.q_terms],
            "fixed_integral_p": None if fp is None else [complex(fp).real, complex(fp).imag],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Parametrization":
        fp = d.get("fixed_integral_p", 0.0)
        if isinstance(fp, list):
            fp = complex(fp[0], fp[1])
        return cls(
            float(d["T"]),
            d.get("p_family", "trig"),
            tuple(tuple(t) if isinstance(t, list) else t for t in d.get("p_terms", [])),
            d.get("q_family", "trig"),
            tuple(tuple(t) if isinstance(t, list) else t for t in d.get("q_terms", [])),
            fp,
        )


# ---------------------------------------------------------------------------
# configuration and result
# ---------------------------------------------------------------------------


def _cl(values) -> list[complex]:
    out = []
    for v in values:
        out.append(complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v))
    return out


def _pairs(values) -> list[list[float]]:
    return [[complex(v).real, complex(v).imag] for v in values]


@dataclass
class InverseConfig:
    parametrization: Parametrization
    data_kind: str
    data: dict
    start: tuple[float, ...]
    u1: BoundaryMeasure | None = None
    u2: BoundaryMeasure | None = None
    damping: float | None = None
    max_iter: int | None = None
    tol: float | None = None
    sample_gap: float = 1e-3
    report_box: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if self.data_kind not in DATA_KINDS:
            raise ConfigurationError(f"unknown data kind {self.data_kind!r}")
        self.start = tuple(float(v) for v in self.start)
        if len(self.start) != self.parametrization.dim:
            raise ConfigurationError("start vector does not match the parametrization")
        d = self.data
        if self.data_kind == "weyl_and_omega":
            need = ("lams", "M", "omega")
        elif self.data_kind == "two_spectra":
            need = ("lambda1", "lambda11")
        else:
            need = ("a", "L0p", "L1p", "L2p")
        for k in need:
            if k not in d:
                raise ConfigurationError(f"data payload lacks {k!r}")
        if self.data_kind == "weyl_and_omega":
            if not (len(d["lams"]) == len(d["M"]) == len(d["omega"]) and len(d["lams"])):
                raise ConfigurationError("weyl_and_omega needs matching, non-empty sample lists")
        if self.data_kind != "three_spectra" and (self.u1 is None or self.u2 is None):
            raise ConfigurationError(f"{self.data_kind} needs the boundary measures")
        if self.data_kind == "three_spectra":
            T = self.parametrization.T
            if not (0.0 < float(d["a"]) < T):
                raise ConfigurationError("a must lie strictly inside (0, T)")
        if self.data_kind != "weyl_and_omega" and sum(len(v) for k, v in d.items() if k != "a") == 0:
            raise ConfigurationError("no target roots")

    def problem(self, params) -> ProblemSpec:
        coeffs = self.parametrization.coefficients(params)
        if self.data_kind == "three_spectra":
            return dirichlet_problem(coeffs, float(self.data["a"]))
        return ProblemSpec(coeffs, self.u1, self.u2)

    def to_dict(self) -> dict:
        d = self.data
        if self.data_kind == "weyl_and_omega":
            data = {"lams": _pairs(d["lams"]), "M": _pairs(d["M"]), "omega": _pairs(d["omega"])}
        elif self.data_kind == "two_spectra":
            data = {"lambda1": _pairs(d["lambda1"]), "lambda11": _pairs(d["lambda11"])}
        else:
            data = {"a": float(d["a"]), "L0p": _pairs(d["L0p"]), "L1p": _pairs(d["L1p"]), "L2p": _pairs(d["L2p"])}
        out = {
            "parametrization": self.parametrization.to_dict(),
            "data_kind": self.data_kind,
            "data": data,
            "start": list(self.start),
            "damping": self.damping,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "sample_gap": self.sample_gap,
            "report_box": list(self.report_box) if self.report_box else None,
        }
        if self.u1 is not None:
            out["measures"] = {"u1": self.u1.to_dict(), "u2": self.u2.to_dict()}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "InverseConfig":
        par = Parametrization.from_dict(d["parametrization"])
        raw = d["data"]
        kind = d["data_kind"]
        if kind == "weyl_and_omega":
            data = {k: _cl(raw[k]) for k in ("lams", "M", "omega")}
        elif kind == "two_spectra":
            data = {k: _cl(raw[k]) for k in ("lambda1", "lambda11")}
        else:
            data = {"a": float(raw["a"]), **{k: _cl(raw[k]) for k in ("L0p", "L1p", "L2p")}}
        u1 = u2 = None
        if "measures" in d:
            u1 = BoundaryMeasure.from_dict(d["measures"]["u1"], par.T, 1)
            u2 = BoundaryMeasure.from_dict(d["measures"]["u2"], par.T, 2)
        return cls(
            par,
            kind,
            data,
            tuple(d["start"]),
            u1,
            u2,
            d.get("damping"),
            d.get("max_iter"),
            d.get("tol"),
            d.get("sample_gap", 1e-3),
            tuple(d["report_box"]) if d.get("report_box") else None,
        )


def load_config(path) -> InverseConfig:
    return InverseConfig.from_dict(json.loads(Path(path).read_text()))


def two_spectra_data(problem: ProblemSpec, n_roots: int = 15, height: float = 1.0) -> dict:
    """Lambda1 roots n = 1..n_roots and Lambda11 roots n = 0..n_roots-1 of a forward problem.

    The search windows come from the leading-order root locations; a window
    that does not hold exactly ``n_roots`` zeros is a configuration error.
    """
    from .spectra import spectrum, window_box

    out = {}
    for key, name, lo in (("lambda1", "Lambda1", 1), ("lambda11", "Lambda11", 0)):
        s = spectrum(problem, name, window_box(problem, name, lo, lo + n_roots - 1, height))
        vals = [z for z, m in s.roots for _ in range(m)]
        if len(vals) != n_roots or s.unresolved:
            raise ConfigurationError(f"{name} window holds {len(vals)} zeros, expected {n_roots}")
        out[key] = vals
    return out


def dirichlet_problem(coeffs: Coefficients, a: float) -> ProblemSpec:
    """U1 = y(0), U2 = y(a): then Xi, Lambda1, Lambda2 are the three Dirichlet spectra."""
    T = coeffs.T
    return ProblemSpec(coeffs, BoundaryMeasure.point(0.0, T, 1.0, 1), BoundaryMeasure.point(a, T, 1.0, 2))


@dataclass
class InverseResult:
    coefficients: Coefficients
    params: np.ndarray
    final_residual: float
    iterations: int
    condition_S_report: object = None
    log: list = field(default_factory=list)
    status: str = "converged"

    def to_dict(self) -> dict:
        rep = self.condition_S_report
        return {
            "coefficients": self.coefficients.to_dict(),
            "params": [float(v) for v in self.params],
            "final_residual": self.final_residual,
            "iterations": self.iterations,
            "status": self.status,
            "condition_S_report": rep.to_dict() if rep is not None else None,
        }

    def log_csv(self) -> str:
        return log_csv(self.log)


def log_csv(log) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    dim = len(log[0][3]) if log else 0
    w.writerow(["iter", "damping", "residual_norm"] + [f"param{k}" for k in range(dim)])
    for it, damp, norm, params in log:
        w.writerow([it, repr(float(damp)), repr(float(norm))] + [repr(float(v)) for v in params])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# residual
# ---------------------------------------------------------------------------


def _stack(*parts) -> np.ndarray:
    z = np.concatenate([np.asarray(p, dtype=complex).ravel() for p in parts])
    return np.concatenate([z.real, z.imag])


def _sample_mask(cfg: InverseConfig, params) -> np.ndarray:
    """Samples usable at ``params``: away from poles of M (zeros of D1)."""
    lams = np.asarray(cfg.data["lams"], dtype=complex)
    ev = Evaluator(cfg.problem(params), lams)
    _, pole = ev.ratio("weylM", "ratio")
    return ~pole


def residual(cfg: InverseConfig, params, mask: np.ndarray | None = None) -> np.ndarray:
    """Stacked real and imaginary parts of the data misfit at ``params``."""
    prob = cfg.problem(params)
    d = cfg.data
    if cfg.data_kind == "weyl_and_omega":
        lams = np.asarray(d["lams"], dtype=complex)
        ev = Evaluator(prob, lams)
        M, pole = ev.ratio("weylM", "ratio")
        om = ev.entire("omega", "via_Z")
        if mask is None:
            keep = ~pole
            for lam in lams[pole]:
                warnings.warn(f"sample lambda={lam} is a pole of M; dropped", RuntimeWarning, stacklevel=2)
        else:
            # frozen sample set: a pole of the candidate leaves a NaN, which rejects the step
            keep = mask
        return _stack(M[keep] - np.asarray(d["M"])[keep], om[keep] - np.asarray(d["omega"])[keep])
    if cfg.data_kind == "two_spectra":
        l1 = np.asarray(d["lambda1"], dtype=complex)
        l11 = np.asarray(d["lambda11"], dtype=complex)
        ev = Evaluator(prob, np.concatenate([l1, l11]))
        d1 = ev.entire("delta1", "via_Z")[: l1.size]
        d11 = ev.entire("delta11", "via_Z")[l1.size :]
        return _stack(d1, d11)
    a = float(d["a"])
    coeffs = prob.coeffs
    left = np.concatenate([np.asarray(d["L0p"], dtype=complex), np.asarray(d["L1p"], dtype=complex)])
    n0 = len(d["L0p"])
    f0 = dirichlet_function(coeffs, "L0p", a)
    f1 = dirichlet_function(coeffs, "L1p", a)
    r0 = f0(left[:n0]) if n0 else np.zeros(0)
    r1 = f1(left[n0:]) if left.size > n0 else np.zeros(0)
    r2 = dirichlet_function(coeffs, "L2p", a)(np.asarray(d["L2p"], dtype=complex)) if len(d["L2p"]) else np.zeros(0)
    return _stack(r0, r1, r2)


def jacobian(cfg: InverseConfig, params, r0=None, step: float | None = None, mask=None, central: bool = False):
    """Finite-difference Jacobian of :func:`residual`."""
    step = config.current().fd_step if step is None else step
    params = np.asarray(params, dtype=float)
    if r0 is None and not central:
        r0 = residual(cfg, params, mask)
    cols = []
    for k in range(params.size):
        e = np.zeros(params.size)
        e[k] = step
        if central:
            cols.append((residual(cfg, params + e, mask) - residual(cfg, params - e, mask)) / (2 * step))
        else:
            cols.append((residual(cfg, params + e, mask) - r0) / step)
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------


def solve(cfg: InverseConfig, condition_report: bool = True) -> InverseResult:
    """Levenberg-Marquardt on the residual; returns the fit and a condition-S report."""
    st = config.current()
    damping = st.damping if cfg.damping is None else cfg.damping
    max_iter = st.max_iter if cfg.max_iter is None else cfg.max_iter
    tol = st.inverse_tol if cfg.tol is None else cfg.tol
    x = np.array(cfg.start, dtype=float)
    mask = None
    if cfg.data_kind == "weyl_and_omega":
        mask = _sample_mask(cfg, x)
        for lam in np.asarray(cfg.data["lams"], dtype=complex)[~mask]:
            warnings.warn(f"sample lambda={lam} is a pole of M at the start; dropped", RuntimeWarning, stacklevel=2)
        if not mask.any():
            raise InverseError("every sample is a pole of M")
    r = residual(cfg, x, mask)
    norm = float(np.linalg.norm(r))
    log = [(0, damping, norm, x.copy())]
    it = 0
    growth = 0
    status = "converged"
    while norm >= tol:
        if it >= max_iter:
            status = "max_iter"
            break
        J = jacobian(cfg, x, r, mask=mask)
        A = J.T @ J
        g = J.T @ r
        diag = np.maximum(np.diag(A), 1e-12 * max(1.0, float(np.max(np.diag(A)))))
        accepted = False
        for _ in range(10):
            try:
                delta = np.linalg.solve(A + damping * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                damping *= 10.0
                continue
            x_new = x + delta
            r_new = residual(cfg, x_new, mask)
            n_new = float(np.linalg.norm(r_new))
            if np.isfinite(n_new) and n_new < norm:
                growth = growth + 1 if n_new > norm else 0
                x, r, norm = x_new, r_new, n_new
                damping = max(damping / 3.0, 1e-12)
                accepted = True
                break
            if np.linalg.norm(delta) <= 1e-14 * (1.0 + np.linalg.norm(x)):
                break
            damping *= 10.0
        it += 1
        log.append((it, damping, norm, x.copy()))
        if not accepted:
            if norm < 100 * tol:
                status = "stalled"
                break
            raise InverseError(f"no descent after 10 damping escalations (residual {norm:.3e})", log)
        if growth >= 5:
            raise InverseError("residual grew on 5 consecutive accepted steps", log)
    coeffs = cfg.parametrization.coefficients(x)
    report = condition_S_at(cfg, x) if condition_report else None
    return InverseResult(coeffs, x, norm, it, report, log, status)


def _data_box(cfg: InverseConfig):
    if cfg.report_box is not None:
        return cfg.report_box
    d = cfg.data
    pts = []
    for k, v in d.items():
        if k != "a" and k not in ("M", "omega"):
            pts.extend(complex(z) for z in v)
    re = [z.real for z in pts]
    lo, hi = min(re), max(re)
    return (min(lo, 0.0) + 0.25, hi + 0.5, -2.0, 2.0)


def condition_S_at(cfg: InverseConfig, params):
    """Condition S (Xi vs Lambda1) or S' (L0p vs L1p) for the fitted problem."""
    from .spectra import check_condition_S, spectrum

    prob = cfg.problem(params)
    box = _data_box(cfg)
    if cfg.data_kind == "three_spectra":
        a = float(cfg.data["a"])
        s0 = spectrum(prob, "L0p", box, a=a)
        s1 = spectrum(prob, "L1p", box, a=a)
    else:
        s0 = spectrum(prob, "Xi", box)
        s1 = spectrum(prob, "Lambda1", box)
    return check_condition_S(s0, s1)


# ---------------------------------------------------------------------------
# product representation from zeros
# ---------------------------------------------------------------------------


def char_from_zeros(roots, normalization, pairing: str = "symmetric"):
    """Finite product normalization * lam^m * prod(1 - lam/lam_n).

    ``m`` is the number of roots at 0; ``normalization`` (a complex number
    or an object with ``.value``) is the value of f(lam)/lam^m at 0. Roots
    should come in symmetric pairs (+-n, or pairs around the asymptotic
    centres) so the truncated product converges without exponential factors.
    """
    if pairing != "symmetric":
        raise ContractError("only symmetric pairing is supported")
    c = complex(getattr(normalization, "value", normalization))
    if c == 0:
        raise ContractError("normalization must be nonzero")
    rs = np.asarray([complex(z) for z in roots], dtype=complex)
    at_zero = np.abs(rs) < 1e-14
    m = int(at_zero.sum())
    rs = rs[~at_zero]

    def f(lam):
        lam = np.asarray(lam, dtype=complex)
        out = np.full(lam.shape, c, dtype=complex) * lam**m
        for r in rs:
            out = out * (1.0 - lam / r)
        return complex(out) if out.ndim == 0 else out

    f.multiplicity_at_zero = m
    return f
