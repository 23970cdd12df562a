"""Zeros of entire characteristic functions inside complex boxes.

The winding number of f along a box boundary is accumulated from phase
increments between boundary samples; an edge interval is halved until its
phase step is below pi/4. Boxes holding zeros are split until a Newton
iteration started at the centre lands inside its own box (simple zero) or
a small box around the Newton limit carries the whole count (cluster).
All boxes of one level are evaluated together, so f is always called on
batches of lambda.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import config
from .errors import ContractError, SearchError
from .model import ProblemSpec

SPECTRUM_NAMES = {
    "Xi": "omega",
    "Lambda1": "delta1",
    "Lambda2": "delta2",
    "Lambda11": "delta11",
    "L0p": "dirichlet0a",
    "L1p": "dirichlet0T",
    "L2p": "dirichletaT",
}

_SPLITS = ((0.4719, 0.5281), (0.5281, 0.4719), (0.4377, 0.5623), (0.5623, 0.4377), (0.4153, 0.5471))
_PHASE_STEP = math.pi / 4
_BASE_SAMPLES = 8
_DENSITY = 12.0  # initial boundary samples per unit length


@dataclass(frozen=True)
class Box:
    """Closed rectangle [re_lo, re_hi] x [im_lo, im_hi] of the lambda plane."""

    re_lo: float
    re_hi: float
    im_lo: float
    im_hi: float

    def __post_init__(self):
        if not (self.re_hi > self.re_lo and self.im_hi > self.im_lo):
            raise ContractError(f"degenerate box {self}")
        if not all(math.isfinite(v) for v in (self.re_lo, self.re_hi, self.im_lo, self.im_hi)):
            raise ContractError("box corners must be finite")

    @classmethod
    def of(cls, spec) -> "Box":
        return spec if isinstance(spec, Box) else cls(*(float(v) for v in spec))

    @property
    def width(self) -> float:
        return self.re_hi - self.re_lo

    @property
    def height(self) -> float:
        return self.im_hi - self.im_lo

    @property
    def size(self) -> float:
        return max(self.width, self.height)

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_lo + self.re_hi), 0.5 * (self.im_lo + self.im_hi))

    def contains(self, z: complex) -> bool:
        return self.re_lo <= z.real <= self.re_hi and self.im_lo <= z.imag <= self.im_hi

    def corners(self) -> list[complex]:
        return [
            complex(self.re_lo, self.im_lo),
            complex(self.re_hi, self.im_lo),
            complex(self.re_hi, self.im_hi),
            complex(self.re_lo, self.im_hi),
        ]

    def split(self, fx: float, fy: float) -> list["Box"]:
        """Quadrisect, or cut an elongated box into near-square slabs."""
        xm = self.re_lo + fx * self.width
        ym = self.im_lo + fy * self.height
        if self.width > 2 * self.height:
            k = int(math.ceil(self.width / self.height))
            cuts = [self.re_lo + self.width * (i + fx - 0.5) / k for i in range(1, k)]
            edges = [self.re_lo] + cuts + [self.re_hi]
            return [Box(a, b, self.im_lo, self.im_hi) for a, b in zip(edges, edges[1:])]
        if self.height > 2 * self.width:
            k = int(math.ceil(self.height / self.width))
            cuts = [self.im_lo + self.height * (i + fy - 0.5) / k for i in range(1, k)]
            edges = [self.im_lo] + cuts + [self.im_hi]
            return [Box(self.re_lo, self.re_hi, a, b) for a, b in zip(edges, edges[1:])]
        return [
            Box(self.re_lo, xm, self.im_lo, ym),
            Box(xm, self.re_hi, self.im_lo, ym),
            Box(self.re_lo, xm, ym, self.im_hi),
            Box(xm, self.re_hi, ym, self.im_hi),
        ]

    def around(self, z: complex, half: float) -> "Box":
        return Box(z.real - half, z.real + half, z.imag - half, z.imag + half)

    def expanded(self, fractions) -> "Box":
        a, b, c, d = fractions
        return Box(
            self.re_lo - a * self.width,
            self.re_hi + b * self.width,
            self.im_lo - c * self.height,
            self.im_hi + d * self.height,
        )

    def to_list(self) -> list[float]:
        return [self.re_lo, self.re_hi, self.im_lo, self.im_hi]


@dataclass
class Spectrum:
    name: str
    box: Box
    roots: list[tuple[complex, int]]
    residual_max: float
    count: int = 0
    unresolved: list[tuple[Box, int]] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)

    @property
    def values(self) -> list[complex]:
        return [z for z, _ in self.roots]

    @property
    def total_multiplicity(self) -> int:
        return sum(m for _, m in self.roots)

    def to_rows(self):
        for (z, m), r in zip(self.roots, self.residuals):
            yield (self.name, repr(float(z.real)), repr(float(z.imag)), m, repr(float(r)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("name", "re", "im", "multiplicity", "residual"))
        w.writerows(self.to_rows())
        return buf.getvalue()


# ---------------------------------------------------------------------------
# evaluation with a cache
# ---------------------------------------------------------------------------


def as_vectorized(f):
    """Wrap a scalar callable so it accepts arrays; vectorized callables pass through."""
    if getattr(f, "_vectorized", False):
        return f

    def g(lams):
        lams = np.asarray(lams, dtype=complex)
        try:
            out = np.asarray(f(lams), dtype=complex)
            if out.shape == lams.shape:
                return out
        except (TypeError, ValueError):
            pass
        return np.array([complex(f(complex(z))) for z in lams.ravel()]).reshape(lams.shape)

    g._vectorized = True
    return g


class _Sampler:
    def __init__(self, f):
        self.f = as_vectorized(f)
        self.cache: dict[complex, complex] = {}
        self.calls = 0

    def __call__(self, zs: np.ndarray) -> np.ndarray:
        zs = np.asarray(zs, dtype=complex)
        missing = sorted({complex(z) for z in zs.ravel() if complex(z) not in self.cache}, key=lambda z: (z.real, z.imag))
        if missing:
            vals = self.f(np.array(missing))
            self.calls += 1
            for z, v in zip(missing, np.asarray(vals).ravel()):
                self.cache[z] = complex(v)
        out = np.array([self.cache[complex(z)] for z in zs.ravel()], dtype=complex)
        if not np.all(np.isfinite(out)):
            raise SearchError("characteristic function returned non-finite values on a contour")
        return out.reshape(zs.shape)

    def fresh(self, zs: np.ndarray) -> np.ndarray:
        self.calls += 1
        return np.asarray(self.f(np.asarray(zs, dtype=complex)), dtype=complex)


# ---------------------------------------------------------------------------
# winding numbers
# ---------------------------------------------------------------------------


class _Contour:
    def __init__(self, box: Box):
        self.box = box
        pts = []
        cs = box.corners()
        for k in range(4):
            a, b = cs[k], cs[(k + 1) % 4]
            m = max(_BASE_SAMPLES, int(math.ceil(_DENSITY * abs(b - a))))
            pts.append(a + (b - a) * np.arange(m) / m)
        self.pts = np.concatenate(pts + [np.array([cs[0]])])
        self.count: int | None = None
        self.failed = False
        self.median = 0.0


def _windings(sampler: _Sampler, boxes: list[Box], max_rounds: int = 40) -> list[tuple[int | None, float]]:
    """(winding number or None on boundary trouble, boundary median |f|) per box.

    An interval is accepted when its phase step is below pi/4 and f at its
    midpoint is close to the chord through its endpoints. The second test
    catches a zero just off the contour, whose nearly 2 pi phase swing
    would otherwise alias to a small step between coarse samples.
    """
    cfg = config.current()
    cons = [_Contour(b) for b in boxes]
    for c in cons:
        c.ok = set()
    active = list(cons)
    for _ in range(max_rounds):
        if not active:
            break
        sampler(np.concatenate([c.pts for c in active]))
        plans = []
        for c in active:
            v = sampler(c.pts)
            mags = np.abs(v)
            c.median = float(np.median(mags))
            if mags.min() <= cfg.boundary_floor * max(c.median, 1e-300):
                c.failed = True
                continue
            d = np.angle(v[1:] / v[:-1])
            bad = np.abs(d) >= _PHASE_STEP
            a, b = c.pts[:-1], c.pts[1:]
            fresh = ~bad & np.array([(x, y) not in c.ok for x, y in zip(a, b)], dtype=bool)
            plans.append((c, v, d, bad, fresh))
        mids = [0.5 * (c.pts[:-1] + c.pts[1:])[fresh] for c, _, _, _, fresh in plans]
        if mids:
            sampler(np.concatenate(mids))
        still = []
        for (c, v, d, bad, fresh), m in zip(plans, mids):
            curved = np.zeros(d.size, dtype=bool)
            if fresh.any():
                fm = sampler(m)
                fa, fb = v[:-1][fresh], v[1:][fresh]
                floor = np.minimum(np.minimum(np.abs(fa), np.abs(fb)), np.abs(fm))
                off = np.abs(fm - 0.5 * (fa + fb)) > 0.3 * floor
                idx = np.nonzero(fresh)[0]
                curved[idx[off]] = True
                for i in idx[~off]:
                    c.ok.add((c.pts[i], c.pts[i + 1]))
            split = bad | curved
            if not split.any():
                total = d.sum() / (2 * math.pi)
                n = int(round(total))
                if abs(total - n) > 1e-3:
                    c.failed = True
                else:
                    c.count = n
                continue
            gaps = np.abs(np.diff(c.pts))
            if gaps[split].min() < 1e-11 * c.box.size:
                c.failed = True
                continue
            # split each bad interval into enough pieces for its phase jump
            pieces = np.where(bad, np.ceil(np.abs(d) / (_PHASE_STEP / 2)).astype(int), 1)
            pieces = np.where(curved, 2, pieces)
            new_pts = [c.pts[:1]]
            for i in range(d.size):
                a, b = c.pts[i], c.pts[i + 1]
                k = pieces[i]
                if k > 1:
                    new_pts.append(a + (b - a) * np.arange(1, k) / k)
                new_pts.append(c.pts[i + 1 : i + 2])
            c.pts = np.concatenate(new_pts)
            still.append(c)
        active = still
    for c in active:
        c.failed = True
    return [(None if c.failed else c.count, c.median) for c in cons]


def _perturbations(box: Box, attempts: int = 5):
    yield box
    base = np.array([1.3, 0.7, 1.1, 0.9])
    for k in range(1, attempts + 1):
        yield box.expanded(tuple(base * 1e-3 * k))


def _count(sampler: _Sampler, box: Box, attempts: int = 5) -> tuple[Box, int, float]:
    for b in _perturbations(box, attempts):
        (n, med), = _windings(sampler, [b])
        if n is not None:
            return b, n, med
    raise SearchError(f"zero on or near the boundary of {box.to_list()} after {attempts} perturbations")


def count_zeros(f, box) -> int:
    """Number of zeros (with multiplicity) of the entire function f inside box."""
    return _count(_Sampler(f), Box.of(box))[1]


# ---------------------------------------------------------------------------
# Newton refinement
# ---------------------------------------------------------------------------


def _newton(sampler: _Sampler, z0, mult, scale, tol, max_iter, fences=None):
    """Batched (modified) Newton with central-difference derivatives.

    An iterate leaving its fence box is abandoned early.
    """
    z = np.array(z0, dtype=complex)
    mult = np.asarray(mult, dtype=float)
    scale = np.asarray(scale, dtype=float)
    done = np.zeros(z.size, dtype=bool)
    dead = np.zeros(z.size, dtype=bool)
    for _ in range(max_iter):
        idx = np.nonzero(~done & ~dead)[0]
        if idx.size == 0:
            break
        zi = z[idx]
        h = 1e-6 * (1 + np.abs(zi))
        vals = sampler.fresh(np.concatenate([zi, zi + h, zi - h]))
        fz, fp, fm = np.split(vals, 3)
        d = (fp - fm) / (2 * h)
        small = np.abs(fz) <= tol * scale[idx]
        good = np.isfinite(d) & (d != 0)
        step = np.where(good, mult[idx] * fz / np.where(good, d, 1.0), 0.0)
        z[idx] = zi - step
        done[idx[small & good]] = True
        dead[idx[~good & ~small]] = True
        done[idx[~good & small]] = True
        z[idx[~good & small]] = zi[~good & small]
        if fences is not None:
            for i in idx:
                if not done[i] and not fences[i].contains(complex(z[i])):
                    dead[i] = True
    return z, done


def find_zeros(f, box, tol: float | None = None, name: str = "") -> Spectrum:
    """All zeros of f in box with multiplicities, sorted by real then imaginary part."""
    cfg = config.current()
    tol = cfg.root_tol if tol is None else tol
    sampler = _Sampler(f)
    top, total, med = _count(sampler, Box.of(box))
    scale_top = max(1.0, med)
    roots: list[tuple[complex, int]] = []
    unresolved: list[tuple[Box, int]] = []
    # items: (box, count, splits survived with the count unchanged)
    level: list[tuple[Box, int, int]] = [(top, total, 0)] if total > 0 else []
    while level:
        trial = [it for it in level if it[1] == 1 or it[2] >= 2 or it[0].size < cfg.cluster_size]
        zs, conv = _newton(
            sampler,
            [b.center for b, _, _ in trial],
            [n for _, n, _ in trial],
            [scale_top] * len(trial),
            tol,
            cfg.newton_max_iter,
            [b.expanded((0.5, 0.5, 0.5, 0.5)) for b, _, _ in trial],
        )
        found = {id(it): (complex(z), ok) for it, z, ok in zip(trial, zs, conv)}
        split_next: list[tuple[Box, int, int]] = []
        verify = []
        for it in level:
            b, n, stuck = it
            if id(it) in found:
                z, ok = found[id(it)]
                if ok and b.contains(z):
                    if n == 1:
                        roots.append((z, 1))
                        continue
                    half = min(cfg.cluster_size, 0.25 * min(b.width, b.height))
                    probe = b.around(z, half)
                    if _inside(probe, b):
                        verify.append((it, z, probe))
                        continue
            split_next.append(it)
        if verify:
            counts = _windings(sampler, [p for *_, p in verify])
            for (it, z, _), (c, _) in zip(verify, counts):
                if c == it[1]:
                    roots.append((z, it[1]))
                else:
                    split_next.append(it)
        level = []
        for b, n, stuck in split_next:
            if b.size < cfg.cluster_size:
                unresolved.append((b, n))
                continue
            children = _split_counted(sampler, b, n)
            if children is None:
                unresolved.append((b, n))
                continue
            level.extend((c, k, stuck + 1 if k == n else 0) for c, k in children if k > 0)
    roots.sort(key=lambda r: (r[0].real, r[0].imag))
    res = [float(abs(v)) for v in sampler.fresh(np.array([z for z, _ in roots]))] if roots else []
    return Spectrum(
        name=name,
        box=top,
        roots=roots,
        residual_max=max(res, default=0.0),
        count=total,
        unresolved=unresolved,
        residuals=res,
    )


def _inside(inner: Box, outer: Box) -> bool:
    return (
        inner.re_lo >= outer.re_lo
        and inner.re_hi <= outer.re_hi
        and inner.im_lo >= outer.im_lo
        and inner.im_hi <= outer.im_hi
    )


def _split_counted(sampler: _Sampler, b: Box, n: int):
    """Children of b with their counts; tries several split fractions so no zero sits on a cut."""
    for fx, fy in _SPLITS:
        kids = b.split(fx, fy)
        counts = _windings(sampler, kids)
        if all(c is not None for c, _ in counts) and sum(c for c, _ in counts) == n:
            return [(k, c) for k, (c, _) in zip(kids, counts)]
    return None


# ---------------------------------------------------------------------------
# problem-level helpers
# ---------------------------------------------------------------------------


def char_function(problem: ProblemSpec, name: str, a: float | None = None, path: str = "via_Z", n: int | None = None):
    """Vectorized characteristic function for a spectrum name (Xi, Lambda1, ..., L2p)."""
    from .charfns import char_function as _cf
    from .charfns import dirichlet_function

    if name not in SPECTRUM_NAMES:
        raise ContractError(f"unknown spectrum {name!r}")
    fn = SPECTRUM_NAMES[name]
    if fn.startswith("dirichlet"):
        if a is None:
            raise ContractError(f"{name} needs the interior point a")
        g = dirichlet_function(problem.coeffs, name, a, n)
    else:
        g = _cf(problem, fn, path, n)
    g._vectorized = True
    return g


def spectrum(problem: ProblemSpec, name: str, box, a: float | None = None, tol: float | None = None, path: str = "via_Z") -> Spectrum:
    return find_zeros(char_function(problem, name, a, path), box, tol, name)


@dataclass(frozen=True)
class ConditionReport:
    status: str  # holds | fails | undecided
    pair: tuple[complex, complex] | None = None
    distance: float = math.inf

    @property
    def lam(self) -> complex | None:
        return None if self.pair is None else self.pair[0]

    def to_dict(self) -> dict:
        d = {"status": self.status, "distance": self.distance if math.isfinite(self.distance) else None}
        if self.pair is not None:
            d["pair"] = [[self.pair[0].real, self.pair[0].imag], [self.pair[1].real, self.pair[1].imag]]
        return d


def check_condition_S(xi, l1, gap: float | None = None) -> ConditionReport:
    """Disjointness of two root sets (Spectrum objects or plain lists of complex)."""
    gap = config.current().condition_gap if gap is None else gap
    a = [complex(z) for z in (xi.values if isinstance(xi, Spectrum) else xi)]
    b = [complex(z) for z in (l1.values if isinstance(l1, Spectrum) else l1)]
    best, pair = math.inf, None
    failing = []
    for z in a:
        for w in b:
            d = abs(z - w)
            if d < best:
                best, pair = d, (z, w)
            if d <= gap:
                failing.append((z.real, z.imag, d, (z, w)))
    if failing:
        # report the lowest offending eigenvalue
        re, im, d, pr = min(failing, key=lambda t: (t[0], t[1]))
        return ConditionReport("fails", pr, d)
    if pair is None:
        return ConditionReport("holds")
    if best > 10 * gap:
        return ConditionReport("holds", pair, best)
    return ConditionReport("undecided", pair, best)


def seed_guesses(problem: ProblemSpec, name: str, n_range) -> list[complex]:
    """Leading-order root locations: (pi n + int p)/T for Lambda1, (pi(n+1/2) + int p)/T for Lambda11."""
    problem.require_strict("seed_guesses")
    T = problem.T
    P = complex(problem.coeffs.integral_p(T))
    if name == "Lambda1":
        shift = 0.0
    elif name == "Lambda11":
        shift = 0.5
    else:
        raise ContractError(f"no seed formula for {name!r}")
    return [(math.pi * (n + shift) + P) / T for n in n_range]


def window_box(problem: ProblemSpec, name: str, n_lo: int, n_hi: int, height: float = 1.0) -> Box:
    """Box around the seeds n_lo..n_hi, padded by half a spacing on each side."""
    seeds = seed_guesses(problem, name, range(n_lo, n_hi + 1))
    step = math.pi / problem.T
    re = [s.real for s in seeds]
    im = [s.imag for s in seeds]
    return Box(min(re) - 0.5 * step, max(re) + 0.5 * step, min(im) - height, max(im) + height)
