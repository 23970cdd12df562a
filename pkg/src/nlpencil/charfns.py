"""Characteristic functions, the Weyl-type function and the combined solutions.

Every quantity has two routes: determinants of form values on the left
fundamental system X_1, X_2 (``det_of_X``) and the cheaper one-term
formulas on the right system Z_1, Z_2 (``via_Z``). Ratios M = D2/D1 and
N = D1/D11 are built from either (``ratio`` means the via_Z deltas).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import config
from .errors import ConsistencyError, ContractError, PoleError
from .forms import apply_weights, form_weights
from .model import BoundaryMeasure, ProblemSpec, truncate_measure
from .ode import SolutionTrace, TraceBatch, fundamental_batch

NAMES = ("omega", "delta1", "delta2", "delta11", "weylM", "bigN")
ENTIRE = ("omega", "delta1", "delta2", "delta11")
PATHS = ("det_of_X", "via_Z", "ratio")
COMBINED = ("phi", "theta", "psi", "Phi", "v1", "v2")


@dataclass(frozen=True)
class CharEvaluation:
    lam: complex
    name: str
    value: complex
    path: str
    pole: bool = False


class Evaluator:
    """Fundamental systems of one problem for a batch of lambda, computed lazily."""

    def __init__(self, problem: ProblemSpec, lams, n: int | None = None):
        self.problem = problem
        self.lams = np.atleast_1d(np.asarray(lams, dtype=complex)).ravel()
        self.n = n
        self._X: TraceBatch | None = None
        self._Z: TraceBatch | None = None
        self._weights: dict[int, tuple] = {}

    @property
    def X(self) -> TraceBatch:
        if self._X is None:
            self._X = fundamental_batch(self.problem.coeffs, self.lams, "left", self.n)
        return self._X

    @property
    def Z(self) -> TraceBatch:
        if self._Z is None:
            self._Z = fundamental_batch(self.problem.coeffs, self.lams, "right", self.n)
        return self._Z

    def _w(self, m: BoundaryMeasure, x: np.ndarray):
        key = id(m)
        if key not in self._weights:
            self._weights[key] = (m, form_weights(m, x))
        return self._weights[key][1]

    def form(self, batch: TraceBatch, m: BoundaryMeasure) -> np.ndarray:
        """True values U(y) for every (lambda, solution); shape (m, 2)."""
        return apply_weights(self._w(m, batch.x), batch.y, batch.dy) * np.exp(batch.scale_log)

    def point(self, batch: TraceBatch, j: int) -> np.ndarray:
        y, dy = batch.node_values(-1)
        return y if j == 1 else dy

    # -- characteristic functions ------------------------------------------
    def entire(self, name: str, path: str = "via_Z") -> np.ndarray:
        u1, u2 = self.problem.u1, self.problem.u2
        if path == "det_of_X":
            X = self.X
            U1 = self.form(X, u1)
            V1, V2 = self.point(X, 1), self.point(X, 2)
            if name == "omega":
                U2 = self.form(X, u2)
                return U1[:, 0] * U2[:, 1] - U1[:, 1] * U2[:, 0]
            if name == "delta1":
                return U1[:, 0] * V1[:, 1] - U1[:, 1] * V1[:, 0]
            if name == "delta2":
                U2 = self.form(X, u2)
                return U2[:, 0] * V1[:, 1] - U2[:, 1] * V1[:, 0]
            if name == "delta11":
                return U1[:, 0] * V2[:, 1] - U1[:, 1] * V2[:, 0]
        elif path == "via_Z":
            Z = self.Z
            if name == "omega":
                U1, U2 = self.form(Z, u1), self.form(Z, u2)
                return U1[:, 0] * U2[:, 1] - U1[:, 1] * U2[:, 0]
            if name == "delta1":
                return -self.form(Z, u1)[:, 1]
            if name == "delta2":
                return -self.form(Z, u2)[:, 1]
            if name == "delta11":
                return self.form(Z, u1)[:, 0]
        else:
            raise ContractError(f"path {path!r} does not apply to {name}")
        raise ContractError(f"unknown characteristic function {name!r}")

    def ratio(self, name: str, path: str = "ratio") -> tuple[np.ndarray, np.ndarray]:
        """(values, pole mask) of weylM = D2/D1 or bigN = D1/D11."""
        base = "via_Z" if path == "ratio" else path
        if name == "weylM":
            num, den = self.entire("delta2", base), self.entire("delta1", base)
        elif name == "bigN":
            num, den = self.entire("delta1", base), self.entire("delta11", base)
        else:
            raise ContractError(f"{name!r} is not a ratio")
        pole = np.abs(den) < config.current().pole_floor * (1.0 + np.abs(num))
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(pole, np.nan + 0j, num / np.where(pole, 1.0, den))
        return val, pole

    def values(self, name: str, path: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        if name in ENTIRE:
            v = self.entire(name, path or "via_Z")
            return v, np.zeros(v.shape, dtype=bool)
        return self.ratio(name, path or "ratio")

    # -- combined solutions ---------------------------------------------------
    def combined(self, which: str, route: str = "stable"):
        """(x, y, dy, scale_log, pole) of a combined solution for every lambda.

        ``route='definition'`` uses the defining combinations of X_1, X_2
        (Z_1, Z_2 for v2). ``route='stable'`` uses the equivalent forms
        psi = -Z_2, Phi = Z_2 / U_1(Z_2) and v2 = phi / phi'(T), which avoid
        subtracting exponentially large terms away from the real axis.
        """
        if route not in ("stable", "definition"):
            raise ContractError(f"unknown route {route!r}")
        n = self.lams.size
        zero = np.zeros(n, dtype=complex)
        one = np.ones(n, dtype=complex)
        pole = np.zeros(n, dtype=bool)
        floor = config.current().pole_floor
        u1, u2 = self.problem.u1, self.problem.u2
        if which == "phi" or which == "theta" or (route == "definition" and which in ("psi", "Phi")):
            B = self.X
            if which == "phi":
                U1 = self.form(B, u1)
                a, b = -U1[:, 1], U1[:, 0]
            elif which == "theta":
                U2 = self.form(B, u2)
                a, b = U2[:, 1], -U2[:, 0]
            else:
                V1 = self.point(B, 1)
                a, b = V1[:, 1], -V1[:, 0]
                if which == "Phi":
                    d1 = self.entire("delta1", "det_of_X")
                    pole = np.abs(d1) < floor * (np.abs(a) + np.abs(b))
                    d1 = np.where(pole, 1.0, d1)
                    a, b = a / d1, b / d1
        elif which in ("psi", "Phi"):
            B = self.Z
            a = zero
            if which == "psi":
                b = -one
            else:
                uz2 = self.form(B, u1)[:, 1]
                pole = np.abs(uz2) < floor * np.exp(B.scale_log[:, 1])
                b = 1.0 / np.where(pole, 1.0, uz2)
        elif which == "v1":
            B = self.Z
            a, b = one, zero
        elif which == "v2" and route == "definition":
            B = self.Z
            nval, pole = self.ratio("bigN", "via_Z")
            a = np.where(pole, 0.0, nval)
            b = one
        elif which == "v2":
            x, y, dy, s, _ = self.combined("phi")
            slope = dy[:, -1]
            d11 = slope * np.exp(s)
            U1 = self.form(self.X, u1)
            size = np.abs(U1[:, 0] * self.point(self.X, 2)[:, 1]) + np.abs(U1[:, 1] * self.point(self.X, 2)[:, 0])
            pole = np.abs(d11) < floor * (1.0 + size)
            slope = np.where(pole, 1.0, slope)
            return x, y / slope[:, None], dy / slope[:, None], np.zeros(n), pole
        else:
            raise ContractError(f"unknown combined solution {which!r}")
        s = np.max(B.scale_log, axis=1)
        fa = (a * np.exp(B.scale_log[:, 0] - s))[:, None]
        fb = (b * np.exp(B.scale_log[:, 1] - s))[:, None]
        y = fa * B.y[:, 0] + fb * B.y[:, 1]
        dy = fa * B.dy[:, 0] + fb * B.dy[:, 1]
        return B.x, y, dy, s, pole


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def eval_char(problem: ProblemSpec, name: str, lam: complex, path: str | None = None, n: int | None = None) -> CharEvaluation:
    """One characteristic value; raises :class:`PoleError` at a pole of M or N."""
    if name not in NAMES:
        raise ContractError(f"unknown characteristic function {name!r}")
    path = path or ("via_Z" if name in ENTIRE else "ratio")
    if path not in PATHS:
        raise ContractError(f"unknown path {path!r}")
    vals, pole = Evaluator(problem, [lam], n).values(name, path)
    if pole[0]:
        raise PoleError(lam, name)
    return CharEvaluation(complex(lam), name, complex(vals[0]), path)


def scan(problem: ProblemSpec, names, lams, paths=None, n: int | None = None) -> list[CharEvaluation]:
    """Evaluate several functions on a lambda grid; poles are flagged, not raised."""
    ev = Evaluator(problem, lams, n)
    out = []
    for name in names:
        for path in paths or [None]:
            use = path or ("via_Z" if name in ENTIRE else "ratio")
            if name in ENTIRE and use == "ratio":
                continue
            vals, pole = ev.values(name, use)
            for lam, v, pl in zip(ev.lams, vals, pole):
                out.append(CharEvaluation(complex(lam), name, complex(v), use, bool(pl)))
    return out


def char_function(problem: ProblemSpec, name: str, path: str = "via_Z", n: int | None = None):
    """Vectorized lambda -> value callable for an entire characteristic function."""
    if name not in ENTIRE:
        raise ContractError(f"{name!r} is not entire")

    def f(lams):
        return Evaluator(problem, lams, n).entire(name, path)

    f.__name__ = f"{name}_{path}"
    return f


def _close(value: complex, target: complex, scale: float, tol: float = 1e-8) -> bool:
    return abs(value - target) <= tol * max(1.0, abs(target), scale)


def build_combined(
    problem: ProblemSpec, which: str, lam: complex, n: int | None = None, route: str = "stable"
) -> SolutionTrace:
    """phi, theta, psi, Phi, v1 or v2 at one lambda, with its defining conditions re-checked."""
    from .forms import apply_measure_form, apply_point_form

    ev = Evaluator(problem, [lam], n)
    x, y, dy, s, pole = ev.combined(which, route)
    if pole[0]:
        raise PoleError(lam, which)
    tr = SolutionTrace(complex(lam), x, y[0], dy[0], float(s[0]))
    u1, u2 = problem.u1, problem.u2
    checks: list[tuple[str, complex, complex, float]] = []
    if which in ("phi", "theta", "psi", "Phi"):
        X1, X2 = ev.X.trace(0, 0), ev.X.trace(0, 1)
        U1 = (apply_measure_form(u1, X1), apply_measure_form(u1, X2))
        V1 = (apply_point_form(1, X1), apply_point_form(1, X2))
        V2 = (apply_point_form(2, X1), apply_point_form(2, X2))
        if which == "phi":
            checks.append(("U1(phi)", apply_measure_form(u1, tr), 0j, 2 * abs(U1[0] * U1[1])))
        elif which == "theta":
            U2 = (apply_measure_form(u2, X1), apply_measure_form(u2, X2))
            checks.append(("U2(theta)", apply_measure_form(u2, tr), 0j, 2 * abs(U2[0] * U2[1])))
        elif which == "psi":
            checks.append(("V1(psi)", apply_point_form(1, tr), 0j, 2 * abs(V1[0] * V1[1])))
            checks.append(("V2(psi)", apply_point_form(2, tr), -1 + 0j, abs(V2[0] * V1[1]) + abs(V2[1] * V1[0])))
        else:
            d1 = U1[0] * V1[1] - U1[1] * V1[0]
            sc = (abs(U1[0] * V1[1]) + abs(U1[1] * V1[0])) / abs(d1)
            checks.append(("U1(Phi)", apply_measure_form(u1, tr), 1 + 0j, sc))
            checks.append(("V1(Phi)", apply_point_form(1, tr), 0j, 2 * abs(V1[0] * V1[1]) / abs(d1)))
    elif which == "v1":
        checks.append(("v1(T)", apply_point_form(1, tr), 1 + 0j, 1.0))
        checks.append(("v1'(T)", apply_point_form(2, tr), 0j, 1.0))
    else:
        Z1, Z2 = ev.Z.trace(0, 0), ev.Z.trace(0, 1)
        uz1, uz2 = apply_measure_form(u1, Z1), apply_measure_form(u1, Z2)
        nval = -uz2 / uz1
        checks.append(("v2'(T)", apply_point_form(2, tr), 1 + 0j, abs(nval)))
        checks.append(("v2(T)", apply_point_form(1, tr), nval, abs(nval)))
        sc = 2 * abs(uz2)
        if route == "stable":
            X1, X2 = ev.X.trace(0, 0), ev.X.trace(0, 1)
            ux1, ux2 = apply_measure_form(u1, X1), apply_measure_form(u1, X2)
            sc = max(sc, 2 * abs(ux1 * ux2) / abs(uz1))
        checks.append(("U1(v2)", apply_measure_form(u1, tr), 0j, sc))
    for label, got, want, sc in checks:
        if not _close(got, want, sc):
            raise ConsistencyError(f"{which} at lambda={lam}: {label} = {got}, expected {want}")
    return tr


def truncated_deltas(problem: ProblemSpec, a: float, lam: complex, n: int | None = None) -> tuple[complex, complex]:
    """(D1^a, D11^a) = (-U1^a(Z_2), U1^a(Z_1)) for the measure restricted to [0, a]."""
    d1, d11 = truncated_deltas_many(problem, a, [lam], n)
    return complex(d1[0]), complex(d11[0])


def truncated_deltas_many(problem: ProblemSpec, a: float, lams, n: int | None = None, evaluator: Evaluator | None = None):
    ua = truncate_measure(problem.u1, a)
    ev = evaluator or Evaluator(problem, lams, n)
    U = ev.form(ev.Z, ua)
    return -U[:, 1], U[:, 0]


def omega_identically_zero(values: np.ndarray, floor: float = 1e-12) -> bool:
    """Heuristic: every sampled omega below ``floor``."""
    return bool(np.all(np.abs(values) < floor))


def natural_scale(name: str, ev: Evaluator, path: str) -> np.ndarray:
    """Sum of the magnitudes of the terms a determinant is built from.

    This is the size rounding errors scale with, so identity checks are
    relative to it.
    """
    u1, u2 = ev.problem.u1, ev.problem.u2
    B = ev.X if path == "det_of_X" else ev.Z
    U1 = ev.form(B, u1)
    if name == "omega":
        U2 = ev.form(B, u2)
        return np.abs(U1[:, 0] * U2[:, 1]) + np.abs(U1[:, 1] * U2[:, 0])
    if path == "via_Z":
        if name == "delta1":
            return np.abs(U1[:, 1])
        if name == "delta11":
            return np.abs(U1[:, 0])
        return np.abs(ev.form(B, u2)[:, 1])
    V1, V2 = ev.point(B, 1), ev.point(B, 2)
    if name == "delta1":
        return np.abs(U1[:, 0] * V1[:, 1]) + np.abs(U1[:, 1] * V1[:, 0])
    if name == "delta11":
        return np.abs(U1[:, 0] * V2[:, 1]) + np.abs(U1[:, 1] * V2[:, 0])
    U2 = ev.form(B, u2)
    return np.abs(U2[:, 0] * V1[:, 1]) + np.abs(U2[:, 1] * V1[:, 0])


def dirichlet_function(coeffs, which: str, a: float, n: int | None = None):
    """Characteristic functions of the three Dirichlet problems on (0, a), (0, T), (a, T).

    ``L0p`` -> X_2(a), ``L1p`` -> X_2(T), ``L2p`` -> Z_2(a); each vanishes
    exactly on the corresponding spectrum.
    """
    from .ode import hermite

    T = coeffs.T
    if which != "L1p" and not (0.0 < a < T):
        raise ContractError(f"interior point a={a} must lie in (0, {T})")

    def f(lams):
        lams = np.atleast_1d(np.asarray(lams, dtype=complex))
        if which == "L2p":
            B = fundamental_batch(coeffs, lams.ravel(), "right", n)
            at = a
        else:
            B = fundamental_batch(coeffs, lams.ravel(), "left", n)
            at = a if which == "L0p" else T
        y, _ = hermite(B.x, B.y[:, 1], B.dy[:, 1], at)
        return (y * np.exp(B.scale_log[:, 1])).reshape(lams.shape)

    f.__name__ = f"dirichlet_{which}"
    f._vectorized = True
    return f


# ---------------------------------------------------------------------------
# identity suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error) and self.max_error <= self.tolerance)


def lambda_grid(re=(-10.0, 10.0, 20), im=(-5.0, 5.0, 10)) -> np.ndarray:
    """Rectangular lambda grid, real axis fastest."""
    xr = np.linspace(re[0], re[1], int(re[2]))
    yi = np.linspace(im[0], im[1], int(im[2]))
    return (xr[None, :] + 1j * yi[:, None]).ravel()


def _rel(a, b, scale) -> np.ndarray:
    return np.abs(np.asarray(a) - np.asarray(b)) / np.maximum(np.asarray(scale), 1e-300)


def identity_suite(
    problem: ProblemSpec,
    lams=None,
    rng: np.random.Generator | None = None,
    n_x: int = 5,
    tol: float = 1e-7,
    tol_trunc: float = 1e-8,
    n: int | None = None,
) -> list[IdentityCheck]:
    """Path agreement, Wronskian identities, M consistency and the truncation identity.

    Errors are relative to the natural scale of each identity: the sum of
    the magnitudes of the terms it is assembled from. Samples within the
    pole floor of M or Phi are skipped.
    """
    from .forms import restricted_quadrature

    rng = rng or np.random.default_rng(0)
    lams = lambda_grid() if lams is None else np.asarray(lams, dtype=complex)
    ev = Evaluator(problem, lams, n)
    out: list[IdentityCheck] = []

    # two routes for every determinant
    for name in ("omega", "delta1", "delta2", "delta11"):
        a = ev.entire(name, "det_of_X")
        b = ev.entire(name, "via_Z")
        sc = np.maximum(natural_scale(name, ev, "det_of_X"), natural_scale(name, ev, "via_Z"))
        out.append(IdentityCheck(f"paths_agree_{name}", float(np.max(_rel(a, b, sc))), tol))

    X, Z = ev.X, ev.Z
    T = problem.T
    # random grid nodes: between nodes the cubic Hermite interpolant is
    # only O((h|lam|)^4) accurate, which would swamp the identity itself
    xs = X.x[np.sort(rng.choice(X.x.size, size=n_x, replace=False))]

    def at(which):
        x, y, dy, s, pole = ev.combined(which)
        return y, dy, s, pole

    def wr(u, v, x):
        yu, du, su, _ = u
        yv, dv, sv, _ = v
        from .ode import hermite

        a_y, a_d = hermite(X.x, yu, du, x)
        b_y, b_d = hermite(X.x, yv, dv, x)
        f = np.exp(su + sv)
        return (a_y * b_d - a_d * b_y) * f, (np.abs(a_y * b_d) + np.abs(a_d * b_y)) * f

    theta, phi, psi, Phi = at("theta"), at("phi"), at("psi"), at("Phi")
    omega = ev.entire("omega", "via_Z")
    d1 = ev.entire("delta1", "via_Z")
    # theta and phi are combinations of X, so the Wronskian inherits the
    # cancellation inside omega; measure against the determinant's scale
    s_om = natural_scale("omega", ev, "det_of_X")
    U1x, U2x = ev.form(X, problem.u1), ev.form(X, problem.u2)
    c_theta = np.abs(np.stack([U2x[:, 1], U2x[:, 0]], axis=1))
    c_phi = np.abs(np.stack([U1x[:, 1], U1x[:, 0]], axis=1))

    def x_scale(x):
        # sum_ij |c_i||d_j| (|X_i X_j'| + |X_i' X_j|) at node x
        k = int(np.argmin(np.abs(X.x - x)))
        f = np.exp(X.scale_log)
        y, d = np.abs(X.y[:, :, k]) * f, np.abs(X.dy[:, :, k]) * f
        m = y[:, :, None] * d[:, None, :] + d[:, :, None] * y[:, None, :]
        return np.einsum("ni,nj,nij->n", c_theta, c_phi, m)
    s_d1 = natural_scale("delta1", ev, "via_Z")
    errs = {"wronskian_theta_phi": 0.0, "wronskian_psi_phi": 0.0, "wronskian_Phi_phi": 0.0}
    ok = ~Phi[3]
    for x in xs:
        w, sc = wr(theta, phi, x)
        errs["wronskian_theta_phi"] = max(errs["wronskian_theta_phi"], float(np.max(_rel(w, omega, np.maximum.reduce([sc, s_om, x_scale(x), np.abs(omega)])))))
        w, sc = wr(psi, phi, x)
        errs["wronskian_psi_phi"] = max(errs["wronskian_psi_phi"], float(np.max(_rel(w, d1, np.maximum(np.maximum(sc, s_d1), np.abs(d1))))))
        w, sc = wr(Phi, phi, x)
        if ok.any():
            errs["wronskian_Phi_phi"] = max(errs["wronskian_Phi_phi"], float(np.max(_rel(w[ok], 1.0, np.maximum(sc[ok], 1.0)))))
    out.extend(IdentityCheck(k, v, tol) for k, v in errs.items())

    # M from the left determinants against U2 applied to Phi
    from .forms import apply_weights

    yP, dP, sP, poleP = Phi
    uPhi = apply_weights(form_weights(problem.u2, X.x), yP, dP) * np.exp(sP)
    mX, poleM = ev.ratio("weylM", "det_of_X")
    keep = ~(poleM | poleP)
    scale_d1 = natural_scale("delta1", ev, "det_of_X")
    scale_d2 = natural_scale("delta2", ev, "det_of_X")
    # condition of the ratio: |M| (s1/|D1| + s2/|D2|)
    d1x = ev.entire("delta1", "det_of_X")
    d2x = ev.entire("delta2", "det_of_X")
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.abs(mX) * (scale_d1 / np.abs(d1x) + scale_d2 / np.maximum(np.abs(d2x), 1e-300))
    cond = np.where(np.isfinite(cond), cond, np.inf)
    err = float(np.max(_rel(mX[keep], uPhi[keep], np.maximum(cond[keep], np.abs(mX[keep]))))) if keep.any() else 0.0
    out.append(IdentityCheck("weylM_equals_U2_Phi", err, tol))

    # truncation identity on the right solution Z_2
    u1 = problem.u1
    worst = 0.0
    for a in (T, T / 2, T / 4):
        d_a, _ = truncated_deltas_many(problem, a, lams, evaluator=ev)
        d_h, _ = truncated_deltas_many(problem, a / 2, lams, evaluator=ev)
        for i in range(lams.size):
            tr = Z.trace(i, 1)
            q = restricted_quadrature(u1, tr, a / 2, a)
            sc = abs(d_a[i]) + abs(d_h[i]) + abs(q)
            worst = max(worst, abs((d_h[i] - d_a[i]) - q) / max(sc, 1e-300))
    out.append(IdentityCheck("truncation_identity", worst, tol_trunc))
    return out


def identity_rows(checks) -> str:
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("identity", "passed", "max_error", "tolerance"))
    for c in checks:
        w.writerow((c.name, "pass" if c.passed else "fail", repr(c.max_error), repr(c.tolerance)))
    return buf.getvalue()
