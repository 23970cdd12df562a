"""Command-line driver: one subcommand per module, problem files in, CSV/JSON out.

Exit codes: 0 success, 1 a check failed (or a condition / inverse failure),
2 configuration error (bad flags, unreadable files, contract violations).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import config
from .errors import (
    ConditionViolation,
    ConfigurationError,
    ConsistencyError,
    ContractError,
    DomainError,
    InverseError,
    PencilError,
    PoleError,
)

ALIASES = {"omega": "Xi", "delta1": "Lambda1", "delta2": "Lambda2", "delta11": "Lambda11"}
_CONFIG_ERRORS = (ConfigurationError, ContractError, DomainError, OSError, ValueError, KeyError, json.JSONDecodeError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _defaults_epilog() -> str:
    s = config.Settings()
    lines = ["numeric defaults (flag > environment > default):"]
    for f in fields(config.Settings):
        lines.append(f"  {f.name:<20} {getattr(s, f.name)!r:<12} env {config.ENV_PREFIX}{f.name.upper()}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", help="problem JSON (default: free problem on [0, pi])")
    common.add_argument("--out", help="output directory (default: tables to stdout)")
    common.add_argument("--grid-n", type=int, dest="grid_n")
    common.add_argument("--atol", type=float)
    common.add_argument("--rtol", type=float)
    common.add_argument("--tol", type=float, help="root tolerance")
    common.add_argument("--workers", type=int, help="0 = all cores, 1 = sequential")
    common.add_argument("--seed", type=int)

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--re", nargs=3, metavar=("START", "STOP", "COUNT"), default=["-10", "10", "20"])
    grid.add_argument("--im", nargs=3, metavar=("START", "STOP", "COUNT"), default=["-5", "5", "10"])

    p = _Parser(
        prog="nlpencil",
        description="Direct and inverse spectral computations for differential pencils with nonlocal conditions.",
        epilog=_defaults_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("scan", parents=[common, grid], help="characteristic functions over a lambda grid")
    s.add_argument("--fn", action="append", help="omega, delta1, delta2, delta11, weylM, bigN (repeatable)")
    s.add_argument("--path", action="append", help="det_of_X, via_Z or ratio (repeatable)")

    s = sub.add_parser("spectrum", parents=[common], help="zeros of one characteristic function in a box")
    s.add_argument("--fn", required=True, help="Xi, Lambda1, Lambda2, Lambda11, L0p, L1p, L2p or omega/delta*")
    s.add_argument("--box", nargs=4, type=float, required=True, metavar=("RE_LO", "RE_HI", "IM_LO", "IM_HI"))
    s.add_argument("--a", type=float, help="interior point for the Dirichlet spectra")
    s.add_argument("--path", default="via_Z")

    sub.add_parser("weyl", parents=[common, grid], help="M and N over a lambda grid")

    s = sub.add_parser("asym", parents=[common], help="deviation from the leading asymptotics along rays")
    s.add_argument("--kind", action="append", help="Phi, v1, phi, v2, delta1, delta11 (repeatable)")
    s.add_argument("--args", nargs="+", type=float, default=[0.3, math.pi / 2, math.pi - 0.3])
    s.add_argument("--radii", nargs="+", type=float, default=[5.0, 10.0, 20.0, 40.0])
    s.add_argument("--delta", type=float, default=0.25)
    s.add_argument("--x", type=float, help="default T/2")
    s.add_argument("--nu", type=int, default=0)

    s = sub.add_parser("inverse", parents=[common], help="least-squares recovery from a run spec")
    s.add_argument("--spec", required=True, help="inverse run-spec JSON")

    s = sub.add_parser("scenario", parents=[common], help="example1, example2 or three_spectra")
    s.add_argument("name", choices=["example1", "example2", "three_spectra"])
    s.add_argument("--alpha", type=float)
    s.add_argument("--alpha0", type=float)
    s.add_argument("--coeffs", help="coefficient choice of the scenario")
    s.add_argument("--truth", help="three_spectra truth: default, q_const, zero")
    s.add_argument("--a", type=float)
    s.add_argument("--box", nargs=4, type=float, metavar=("RE_LO", "RE_HI", "IM_LO", "IM_HI"))
    s.add_argument("--relaxed", action="store_true", help="example1: drop the q asymmetry requirement")

    s = sub.add_parser("validate", parents=[common, grid], help="identity and invariant suite on a problem")
    s.add_argument("--samples", type=int, default=5, help="random x nodes for the Wronskian checks")

    s = sub.add_parser("trace", parents=[common], help="fundamental solution samples at one lambda")
    s.add_argument("--lam", nargs=2, type=float, required=True, metavar=("RE", "IM"))
    s.add_argument("--anchor", choices=["left", "right"], default="left")
    return p


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


class _Sink:
    def __init__(self, out):
        self.dir = Path(out) if out else None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)
            probe = self.dir / ".write_probe"
            probe.write_text("")
            probe.unlink()

    def table(self, name: str, text: str):
        if self.dir is None:
            sys.stdout.write(text)
        else:
            (self.dir / name).write_text(text)

    def json(self, name: str, obj):
        text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
        if self.dir is None:
            sys.stdout.write(text)
        else:
            (self.dir / name).write_text(text)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _r(v) -> str:
    return repr(float(v))


def _grid(args) -> np.ndarray:
    from .charfns import lambda_grid

    re, im = args.re, args.im
    return lambda_grid((float(re[0]), float(re[1]), int(re[2])), (float(im[0]), float(im[1]), int(im[2])))


def _problem(args):
    from .model import free_problem, load_problem

    return load_problem(args.problem) if args.problem else free_problem()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_scan(args, sink) -> int:
    from .charfns import NAMES, scan

    names = args.fn or list(NAMES)
    for n in names:
        if n not in NAMES:
            raise ConfigurationError(f"unknown function {n!r}")
    lams = _grid(args)
    rows = []
    for e in scan(_problem(args), names, lams, args.path):
        rows.append((e.name, e.path, _r(e.lam.real), _r(e.lam.imag), _r(e.value.real), _r(e.value.imag), int(e.pole)))
    sink.table("scan.csv", _csv(("fn", "path", "re", "im", "value_re", "value_im", "pole"), rows))
    return 0


def cmd_spectrum(args, sink) -> int:
    from .spectra import Box, spectrum

    name = ALIASES.get(args.fn, args.fn)
    s = spectrum(_problem(args), name, Box.of(args.box), args.a, args.tol, args.path)
    sink.table(f"spectrum_{name}.csv", s.to_csv())
    return 0 if not s.unresolved else 1


def cmd_weyl(args, sink) -> int:
    from .charfns import Evaluator

    lams = _grid(args)
    ev = Evaluator(_problem(args), lams)
    m, mp = ev.ratio("weylM", "ratio")
    nn, np_ = ev.ratio("bigN", "ratio")
    rows = []
    for i, lam in enumerate(lams):
        mv = 0j if mp[i] else m[i]
        nv = 0j if np_[i] else nn[i]
        rows.append((_r(lam.real), _r(lam.imag), _r(mv.real), _r(mv.imag), int(mp[i]), _r(nv.real), _r(nv.imag), int(np_[i])))
    sink.table("weyl.csv", _csv(("re", "im", "M_re", "M_im", "M_pole", "N_re", "N_im", "N_pole"), rows))
    return 0


def cmd_asym(args, sink) -> int:
    from .asymptotics import SCANNABLE, SectorSpec, deviation_scan, scan_csv, scan_rows

    problem = _problem(args)
    kinds = args.kind or ["delta1", "delta11", "Phi", "v1"]
    x = problem.T / 2 if args.x is None else args.x
    rows = []
    for kind in kinds:
        if kind not in SCANNABLE:
            raise ConfigurationError(f"unknown kind {kind!r}")
        for arg in args.args:
            sector = SectorSpec(min(args.delta, arg, math.pi - arg), tuple(args.radii), arg)
            rows.extend(scan_rows(kind, arg, deviation_scan(problem, kind, sector, x, args.nu)))
    sink.table("asym.csv", scan_csv(rows))
    return 0


def cmd_inverse(args, sink) -> int:
    from .inverse import load_config, solve

    cfg = load_config(args.spec)
    try:
        res = solve(cfg)
    except InverseError as e:
        sink.json("inverse.json", {"status": "failed", "message": str(e)})
        from .inverse import log_csv

        sink.table("inverse_log.csv", log_csv(e.trace))
        return 1
    sink.json("inverse.json", res.to_dict())
    sink.table("inverse_log.csv", res.log_csv())
    return 0


def cmd_scenario(args, sink) -> int:
    from .experiments import run_scenario

    kw = {}
    if args.name == "example1":
        if args.coeffs:
            kw["coeff_choice"] = args.coeffs
        if args.box:
            kw["box"] = tuple(args.box)
        kw["relaxed"] = args.relaxed
    elif args.name == "example2":
        if args.alpha is not None:
            kw["alpha"] = args.alpha
        if args.alpha0 is not None:
            kw["alpha0"] = args.alpha0
        if args.coeffs:
            kw["coeff_choice"] = args.coeffs
    else:
        if args.a is not None:
            kw["a"] = args.a
        if args.truth:
            kw["truth"] = args.truth
    try:
        report = run_scenario(args.name, outdir=sink.dir, **kw)
    except ConditionViolation as e:
        sink.json("report.json", {"scenario": args.name, "passed": False, "condition_violation": [e.lam.real, e.lam.imag], "message": str(e)})
        return 1
    if sink.dir is None:
        sink.json("report.json", report.to_dict())
    return 0 if report.passed else 1


def validate_problem(problem, lams, seed: int, samples: int = 5):
    """Identity suite plus the defining conditions of the combined solutions."""
    from .charfns import COMBINED, IdentityCheck, build_combined, identity_suite

    rng = np.random.default_rng(seed)
    checks = identity_suite(problem, lams, rng=rng, n_x=samples)
    picks = lams[np.sort(rng.choice(lams.size, size=min(samples, lams.size), replace=False))]
    for which in COMBINED:
        bad = 0
        for lam in picks:
            try:
                build_combined(problem, which, complex(lam))
            except PoleError:
                continue
            except ConsistencyError:
                bad += 1
        checks.append(IdentityCheck(f"conditions_{which}", float(bad), 0.0))
    return checks


def cmd_validate(args, sink) -> int:
    from .charfns import identity_rows

    checks = validate_problem(_problem(args), _grid(args), config.current().seed, args.samples)
    sink.table("validate.csv", identity_rows(checks))
    if sink.dir is not None:
        sink.json(
            "validate.json",
            {"passed": all(c.passed for c in checks), "checks": [{"name": c.name, "passed": c.passed, "max_error": c.max_error, "tolerance": c.tolerance} for c in checks]},
        )
    return 0 if all(c.passed for c in checks) else 1


def cmd_trace(args, sink) -> int:
    from .ode import fundamental_X, fundamental_Z, trace_rows

    problem = _problem(args)
    lam = complex(args.lam[0], args.lam[1])
    pair = fundamental_X(problem.coeffs, lam) if args.anchor == "left" else fundamental_Z(problem.coeffs, lam)
    rows = []
    for j, tr in enumerate(pair, start=1):
        rows.extend((j,) + tuple(_r(v) for v in row) for row in trace_rows(tr))
    sink.table("trace.csv", _csv(("solution", "x", "y_re", "y_im", "dy_re", "dy_im"), rows))
    return 0


COMMANDS = {
    "scan": cmd_scan,
    "spectrum": cmd_spectrum,
    "weyl": cmd_weyl,
    "asym": cmd_asym,
    "inverse": cmd_inverse,
    "scenario": cmd_scenario,
    "validate": cmd_validate,
    "trace": cmd_trace,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        config.configure(
            grid_n=args.grid_n, atol=args.atol, rtol=args.rtol, root_tol=args.tol, workers=args.workers, seed=args.seed
        )
        sink = _Sink(args.out)
        return COMMANDS[args.command](args, sink)
    except ConditionViolation as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except InverseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except _CONFIG_ERRORS as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except PencilError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    finally:
        config.reset()


def main(argv=None) -> None:
    sys.exit(dispatch(argv))
