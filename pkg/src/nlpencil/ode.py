"""Solutions of y'' + (lam^2 - 2 lam p(x) - q(x)) y = 0 for fixed complex lam.

The integrator is an adaptive Dormand-Prince 5(4) pair on the first-order
system (y, y'). Steps are clipped so that every node of the uniform output
grid and every coefficient breakpoint is a step boundary; the trace is
therefore recorded without interpolation. A whole batch of lam values and
initial conditions is advanced together with one shared step size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import config
from .errors import ContractError, IntegrationError, IntegrationOverflow
from .model import Coefficients

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B4


@dataclass(frozen=True, eq=False)
class SolutionTrace:
    """One solution sampled on the uniform grid; true value = stored * exp(scale_log)."""

    lam: complex
    x: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    scale_log: float = 0.0

    @property
    def T(self) -> float:
        return float(self.x[-1])

    @property
    def n(self) -> int:
        return self.x.size - 1

    @property
    def scale(self) -> float:
        return math.exp(self.scale_log)

    def values(self) -> tuple[np.ndarray, np.ndarray]:
        s = self.scale
        return self.y * s, self.dy * s

    def at(self, t: float) -> tuple[complex, complex]:
        """(y, y') at any t in [0, T]: nodal values or a cubic Hermite interpolant."""
        y, dy = hermite(self.x, self.y, self.dy, t)
        s = self.scale
        return complex(y) * s, complex(dy) * s

    def combine(self, other: "SolutionTrace", a: complex, b: complex) -> "SolutionTrace":
        """Pointwise a*self + b*other (same lam and grid)."""
        _check_pair(self, other)
        s = max(self.scale_log, other.scale_log)
        fa = a * math.exp(self.scale_log - s)
        fb = b * math.exp(other.scale_log - s)
        return SolutionTrace(self.lam, self.x, fa * self.y + fb * other.y, fa * self.dy + fb * other.dy, s)

    def scaled(self, c: complex) -> "SolutionTrace":
        return SolutionTrace(self.lam, self.x, c * self.y, c * self.dy, self.scale_log)


def hermite(x: np.ndarray, y: np.ndarray, dy: np.ndarray, t: float):
    """Cubic Hermite value and derivative of sampled (y, y') at t; exact at nodes."""
    n = x.size - 1
    h = (x[-1] - x[0]) / n
    pos = (t - x[0]) / h
    k = int(round(pos))
    if abs(pos - k) < 1e-9 and 0 <= k <= n:
        return y[..., k], dy[..., k]
    if pos < 0 or pos > n:
        raise ContractError(f"t={t} outside the trace grid")
    k = min(int(math.floor(pos)), n - 1)
    s = pos - k
    h00, h10, h01, h11 = hermite_basis(s)
    val = h00 * y[..., k] + h10 * h * dy[..., k] + h01 * y[..., k + 1] + h11 * h * dy[..., k + 1]
    d00 = (6 * s * s - 6 * s) / h
    d10 = 3 * s * s - 4 * s + 1
    d01 = (-6 * s * s + 6 * s) / h
    d11 = 3 * s * s - 2 * s
    der = d00 * y[..., k] + d10 * dy[..., k] + d01 * y[..., k + 1] + d11 * dy[..., k + 1]
    return val, der


def hermite_basis(s: float):
    s2, s3 = s * s, s * s * s
    return 2 * s3 - 3 * s2 + 1, s3 - 2 * s2 + s, -2 * s3 + 3 * s2, s3 - s2


def grid(T: float, n: int | None = None) -> np.ndarray:
    n = n or config.current().grid_n
    if n < config.current().min_grid_n:
        raise ContractError(f"grid needs N >= {config.current().min_grid_n}, got {n}")
    return np.linspace(0.0, T, n + 1)


@dataclass(frozen=True, eq=False)
class TraceBatch:
    """Solutions for many lam at once: y, dy have shape (m, k, N+1), scale_log (m, k)."""

    lams: np.ndarray
    x: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    scale_log: np.ndarray

    def trace(self, i: int, j: int) -> SolutionTrace:
        return SolutionTrace(complex(self.lams[i]), self.x, self.y[i, j], self.dy[i, j], float(self.scale_log[i, j]))

    def node_values(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        """True (y, y') at one grid node, shape (m, k)."""
        s = np.exp(self.scale_log)
        return self.y[..., index] * s, self.dy[..., index] * s


class _CoefficientSampler:
    """g(x) = 2 lam p(x) + q(x) - lam^2 evaluated for the whole batch."""

    def __init__(self, coeffs: Coefficients, lams: np.ndarray):
        self.coeffs = coeffs
        self.lam = lams[:, None]
        self.lam2 = self.lam ** 2

    def pq(self, xs, side):
        xs = np.clip(np.asarray(xs, dtype=float), 0.0, self.coeffs.T)
        p = self.coeffs.p(xs, side)
        q = self.coeffs.q(xs, side)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise IntegrationError("coefficient evaluation returned a non-finite value")
        return p, q

    def g(self, p, q):
        return 2.0 * self.lam * p + q - self.lam2


def propagate(
    coeffs: Coefficients,
    lams,
    inits,
    from_end: str = "left",
    n: int | None = None,
    atol: float | None = None,
    rtol: float | None = None,
) -> TraceBatch:
    """Integrate every (lam, init) pair across [0, T] from one endpoint."""
    cfg = config.current()
    atol = cfg.atol if atol is None else atol
    rtol = cfg.rtol if rtol is None else rtol
    lams = np.atleast_1d(np.asarray(lams, dtype=complex)).ravel()
    if not np.all(np.isfinite(lams)):
        raise ContractError("lambda must be finite")
    inits = np.atleast_2d(np.asarray(inits, dtype=complex))
    if inits.shape[-1] != 2:
        raise ContractError("each initial condition is a (y, y') pair")
    if np.any(np.all(inits == 0, axis=1)):
        raise ContractError("initial condition must not be (0, 0)")
    if from_end not in ("left", "right"):
        raise ContractError("from_end must be 'left' or 'right'")

    x = grid(coeffs.T, n)
    N = x.size - 1
    m, k = lams.size, inits.shape[0]
    Y = np.zeros((m, k, N + 1), dtype=complex)
    DY = np.zeros_like(Y)
    scale = np.zeros((m, k))
    y = np.broadcast_to(inits[:, 0], (m, k)).astype(complex)
    dy = np.broadcast_to(inits[:, 1], (m, k)).astype(complex)

    direction = 1 if from_end == "left" else -1
    order = range(N + 1) if direction > 0 else range(N, -1, -1)
    order = list(order)
    start = order[0]
    Y[:, :, start] = y
    DY[:, :, start] = dy

    sampler = _CoefficientSampler(coeffs, lams)
    hgrid = x[1] - x[0]
    breaks = np.array(coeffs.breakpoints())

    # coefficient values at the stage abscissae of k uniform substeps of
    # every grid interval, built once per k
    starts = x[np.array(order[:-1])]
    tables: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def table(k: int):
        if k not in tables:
            frac = (np.arange(k)[:, None] + _C[None, :]) / k
            sx = starts[:, None, None] + direction * hgrid * frac[None, :, :]
            pt = np.empty(sx.shape, dtype=complex)
            qt = np.empty(sx.shape, dtype=complex)
            pt[..., 0], qt[..., 0] = sampler.pq(sx[..., 0], direction)
            pt[..., 1:5], qt[..., 1:5] = sampler.pq(sx[..., 1:5], 0)
            pt[..., 5:], qt[..., 5:] = sampler.pq(sx[..., 5:], -direction)
            tables[k] = (pt, qt)
        return tables[k]

    thr = cfg.overflow_threshold
    h_try = hgrid
    k_sub = 1
    steps = 0
    for idx in range(N):
        i_from, i_to = order[idx], order[idx + 1]
        xa, xb = x[i_from], x[i_to]
        lo, hi = min(xa, xb), max(xa, xb)
        inner = breaks[(breaks > lo + 1e-12 * hgrid) & (breaks < hi - 1e-12 * hgrid)] if breaks.size else breaks
        if inner.size == 0:
            # k uniform substeps; k doubles on rejection, halves when the error is tiny
            while True:
                pt, qt = table(k_sub)
                h = direction * hgrid / k_sub
                ys, dys = y, dy
                worst = 0.0
                for j in range(k_sub):
                    g_stages = [sampler.g(pt[idx, j, st], qt[idx, j, st]) for st in range(7)]
                    ys, dys, err = _dp_step(ys, dys, h, g_stages, atol, rtol)
                    steps += 1
                    worst = max(worst, err)
                    if err > 1.0:
                        break
                if steps > cfg.max_steps:
                    raise IntegrationError("step budget exhausted")
                if worst <= 1.0:
                    break
                k_sub *= 2
                if hgrid / k_sub < 1e-14 * coeffs.T:
                    raise IntegrationError(f"step size underflow at x={xa}")
            y, dy = ys, dys
            if worst < 1.0 / 64 and k_sub > 1:
                k_sub //= 2
            h_try = hgrid / k_sub
        else:
            seg_ends = sorted(inner, reverse=direction < 0) + [xb]
            t = xa
            for seg_end in seg_ends:
                while True:
                    remaining = seg_end - t
                    if abs(remaining) <= 1e-13 * hgrid:
                        t = seg_end
                        break
                    full = abs(h_try) >= abs(remaining) * (1 - 1e-12)
                    h = remaining if full else direction * h_try
                    sx = t + h * _C
                    pp = np.empty(7, dtype=complex)
                    qq = np.empty(7, dtype=complex)
                    pp[:1], qq[:1] = sampler.pq(sx[:1], direction)
                    pp[1:5], qq[1:5] = sampler.pq(sx[1:5], 0)
                    pp[5:], qq[5:] = sampler.pq(sx[5:], -direction)
                    g_stages = [sampler.g(pp[st], qq[st]) for st in range(7)]
                    y_new, dy_new, err = _dp_step(y, dy, h, g_stages, atol, rtol)
                    steps += 1
                    if steps > cfg.max_steps:
                        raise IntegrationError("step budget exhausted")
                    fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                    if err <= 1.0:
                        y, dy = y_new, dy_new
                        t = seg_end if full else t + h
                        h_try = abs(h) * fac if not full else max(h_try, abs(h) * fac)
                    else:
                        h_try = abs(h) * fac
                        if h_try < 1e-14 * coeffs.T:
                            raise IntegrationError(f"step size underflow at x={t}")
            k_sub = max(1, int(math.ceil(hgrid / h_try - 1e-9)))
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(dy))):
            raise IntegrationOverflow(f"non-finite state at x={xb}")
        mag = np.maximum(np.abs(y), np.abs(dy))
        big = mag > thr
        if np.any(big):
            f = np.where(big, mag, 1.0)
            y, dy = y / f, dy / f
            Y /= f[:, :, None]
            DY /= f[:, :, None]
            scale += np.log(f)
        Y[:, :, i_to] = y
        DY[:, :, i_to] = dy
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(scale))):
        raise IntegrationOverflow("non-finite values in the trace")
    return TraceBatch(lams, x, Y, DY, scale)


_A_NZ = [[(j, a) for j, a in enumerate(row) if a != 0.0] for row in _A]
_B_NZ = [(j, b) for j, b in enumerate(_B) if b != 0.0]
_E_NZ = [(j, e) for j, e in enumerate(_E) if e != 0.0]


def _dp_step(y, dy, h, g, atol, rtol):
    # state rows: 0 -> y, 1 -> y'
    S = np.stack((y, dy))
    K = [None] * 7
    k0 = np.empty_like(S)
    k0[0] = dy
    k0[1] = g[0] * y
    K[0] = k0
    for s in range(1, 7):
        acc = S.copy()
        for j, a in _A_NZ[s]:
            acc += (h * a) * K[j]
        ks = np.empty_like(S)
        ks[0] = acc[1]
        ks[1] = g[s] * acc[0]
        K[s] = ks
    S_new = S.copy()
    for j, b in _B_NZ:
        S_new += (h * b) * K[j]
    E = (h * _E_NZ[0][1]) * K[_E_NZ[0][0]]
    for j, e in _E_NZ[1:]:
        E += (h * e) * K[j]
    sc = atol + rtol * np.maximum(np.abs(S), np.abs(S_new))
    err = float(np.max(np.abs(E) / sc))
    return S_new[0], S_new[1], err


def integrate_pencil(coeffs: Coefficients, lam: complex, from_end: str, init, n: int | None = None) -> SolutionTrace:
    """Single solution with (y, y') = init at the chosen endpoint."""
    batch = propagate(coeffs, [lam], [init], from_end, n)
    return batch.trace(0, 0)


def fundamental_batch(coeffs: Coefficients, lams, anchor: str = "left", n: int | None = None) -> TraceBatch:
    """X_1, X_2 (anchor='left') or Z_1, Z_2 (anchor='right') for every lam; k axis = solution index."""
    return propagate(coeffs, lams, [(1.0, 0.0), (0.0, 1.0)], anchor, n)


def fundamental_X(coeffs: Coefficients, lam: complex, n: int | None = None) -> tuple[SolutionTrace, SolutionTrace]:
    b = fundamental_batch(coeffs, [lam], "left", n)
    return b.trace(0, 0), b.trace(0, 1)


def fundamental_Z(coeffs: Coefficients, lam: complex, n: int | None = None) -> tuple[SolutionTrace, SolutionTrace]:
    b = fundamental_batch(coeffs, [lam], "right", n)
    return b.trace(0, 0), b.trace(0, 1)


def _check_pair(a: SolutionTrace, b: SolutionTrace):
    if a.lam != b.lam:
        raise ContractError("traces belong to different lambda")
    if a.x.size != b.x.size or a.x[-1] != b.x[-1]:
        raise ContractError("traces live on different grids")


def wronskian_nodes(a: SolutionTrace, b: SolutionTrace) -> np.ndarray:
    _check_pair(a, b)
    return (a.y * b.dy - a.dy * b.y) * math.exp(a.scale_log + b.scale_log)


def wronskian(a: SolutionTrace, b: SolutionTrace, x: float) -> complex:
    """y_a y_b' - y_a' y_b at x (linear interpolation of nodal values off-grid)."""
    w = wronskian_nodes(a, b)
    n = a.n
    pos = x / a.T * n
    if pos < -1e-9 or pos > n + 1e-9:
        raise ContractError(f"x={x} outside the trace grid")
    k = int(round(pos))
    if abs(pos - k) < 1e-9:
        return complex(w[k])
    k = min(int(math.floor(pos)), n - 1)
    s = pos - k
    return complex((1 - s) * w[k] + s * w[k + 1])


def trace_rows(tr: SolutionTrace):
    """(x, Re y, Im y, Re y', Im y') rows of a trace, true scale applied."""
    y, dy = tr.values()
    for xi, yi, di in zip(tr.x, y, dy):
        yield (float(xi), float(yi.real), float(yi.imag), float(di.real), float(di.imag))
