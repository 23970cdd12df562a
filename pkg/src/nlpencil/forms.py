"""Linear forms on solution traces.

A measure form U(y) = sum_i w_i y(t_i) + int y(t) d(t) dt is reduced to
nodal weights on the trace grid, ``U(y) = y @ wy + y' @ wd``: atoms off the
grid contribute through the cubic Hermite interpolant (which uses y'), the
density through the trapezoid rule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError
from .model import BoundaryMeasure, trapezoid_weights
from .ode import SolutionTrace, hermite_basis


@dataclass(frozen=True)
class FormValue:
    value: complex
    form_label: str


def form_weights(m: BoundaryMeasure, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nodal weights (on y, on y') realizing the measure form on grid ``x``."""
    n = x.size - 1
    T = float(x[-1])
    if abs(T - m.T) > 1e-12 * T:
        raise ContractError("trace grid and measure disagree on T")
    h = T / n
    wy = np.zeros(n + 1, dtype=complex)
    wd = np.zeros(n + 1, dtype=complex)
    for t, w in m.atoms:
        pos = t / h
        k = int(round(pos))
        if pos < -1e-9 or pos > n + 1e-9:
            raise DomainError(f"atom at {t} outside the trace grid")
        if abs(pos - k) < 1e-9:
            wy[k] += w
            continue
        k = min(int(math.floor(pos)), n - 1)
        h00, h10, h01, h11 = hermite_basis(pos - k)
        wy[k] += w * h00
        wd[k] += w * h * h10
        wy[k + 1] += w * h01
        wd[k + 1] += w * h * h11
    if m.density.size:
        if m.density.size == n + 1:
            d = np.asarray(m.density)
        else:
            xd = m.density_grid
            d = np.interp(x, xd, m.density.real) + 1j * np.interp(x, xd, m.density.imag)
        wy += d * trapezoid_weights(x, m.density_end)
    return wy, wd


def apply_weights(weights, y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    wy, wd = weights
    return y @ wy + dy @ wd


def apply_measure_form(m: BoundaryMeasure, tr: SolutionTrace) -> complex:
    """U(y) for the measure ``m``, true scale applied."""
    return complex(apply_weights(form_weights(m, tr.x), tr.y, tr.dy)) * tr.scale


def apply_point_form(j: int, tr: SolutionTrace) -> complex:
    """V_j(y): y(T) for j = 1, y'(T) for j = 2."""
    if j == 1:
        return complex(tr.y[-1]) * tr.scale
    if j == 2:
        return complex(tr.dy[-1]) * tr.scale
    raise ContractError("point form index must be 1 or 2")


def restricted_quadrature(m: BoundaryMeasure, tr: SolutionTrace, lo: float, hi: float) -> complex:
    """Integral of y against ``m`` restricted to (lo, hi].

    Written independently of :func:`form_weights` (direct sum over atoms,
    explicit trapezoid cells of the linear integrand) so it can cross-check
    differences of truncated forms.
    """
    if not (0.0 <= lo < hi <= m.T * (1 + 1e-12)):
        raise DomainError("need 0 <= lo < hi <= T")
    total = 0j
    for t, w in m.atoms:
        if lo < t <= hi:
            total += w * tr.at(t)[0]
    if m.density.size:
        hi = min(hi, m.density_end)
        if hi > lo:
            x = tr.x
            y = tr.y * tr.scale
            if m.density.size == x.size:
                d = np.asarray(m.density)
            else:
                xd = m.density_grid
                d = np.interp(x, xd, m.density.real) + 1j * np.interp(x, xd, m.density.imag)
            f = d * y
            h = x[1] - x[0]
            i0 = int(math.floor(lo / h + 1e-9))
            i1 = min(int(math.ceil(hi / h - 1e-9)), x.size - 1)
            a = np.maximum(x[i0:i1], lo)
            b = np.minimum(x[i0 + 1 : i1 + 1], hi)
            ok = b > a
            a, b = a[ok], b[ok]

            def f_at(s):
                return np.interp(s, x, f.real) + 1j * np.interp(s, x, f.imag)

            total += complex(np.sum(0.5 * (b - a) * (f_at(a) + f_at(b))))
    return total
