import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from nlpencil import config
from nlpencil.cli import build_parser, dispatch
from nlpencil.model import save_problem

from conftest import PI, constant_problem


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_help_documents_defaults(capsys):
    assert dispatch(["--help"]) == 0
    out = capsys.readouterr().out
    assert "NLPENCIL_GRID_N" in out and "validate" in out


def test_unknown_flag_exits_2(capsys):
    assert dispatch(["scan", "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err
    assert dispatch(["frobnicate"]) == 2


def test_degenerate_box_exits_2(tmp_path):
    assert dispatch(["spectrum", "--fn", "delta1", "--box", "1", "1", "-1", "1", "--out", str(tmp_path)]) == 2


def test_missing_problem_file_exits_2(tmp_path):
    assert dispatch(["validate", "--problem", str(tmp_path / "nope.json")]) == 2


def test_spectrum_free_delta1(tmp_path):
    assert dispatch(["spectrum", "--fn", "delta1", "--box", "0.5", "3.5", "-1", "1", "--out", str(tmp_path)]) == 0
    table = rows(tmp_path / "spectrum_Lambda1.csv")
    assert table[0] == ["name", "re", "im", "multiplicity", "residual"]
    body = table[1:]
    assert len(body) == 3
    assert np.allclose([float(r[1]) for r in body], [1, 2, 3], atol=1e-9)


def test_spectrum_to_stdout(capsys):
    assert dispatch(["spectrum", "--fn", "Lambda11", "--box", "0.1", "1.9", "-1", "1"]) == 0
    table = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert np.allclose(sorted(float(r[1]) for r in table[1:]), [0.5, 1.5], atol=1e-9)


def test_scan_header_and_values(tmp_path):
    argv = ["scan", "--fn", "delta11", "--re", "0.3", "2.3", "3", "--im", "0.5", "0.5", "1", "--out", str(tmp_path)]
    assert dispatch(argv) == 0
    table = rows(tmp_path / "scan.csv")
    assert table[0] == ["fn", "path", "re", "im", "value_re", "value_im", "pole"]
    for r in table[1:]:
        lam = complex(float(r[2]), float(r[3]))
        assert complex(float(r[4]), float(r[5])) == pytest.approx(np.cos(PI * lam), rel=1e-7)


def test_weyl_matches_closed_form(tmp_path):
    assert dispatch(["weyl", "--re", "0.3", "2.3", "3", "--im", "0.7", "0.7", "1", "--out", str(tmp_path)]) == 0
    table = rows(tmp_path / "weyl.csv")
    assert table[0][:5] == ["re", "im", "M_re", "M_im", "M_pole"]
    for r in table[1:]:
        lam = complex(float(r[0]), float(r[1]))
        expected = np.sin(lam * PI / 2) / np.sin(lam * PI)
        assert complex(float(r[2]), float(r[3])) == pytest.approx(expected, rel=1e-7)


def test_asym_rows(tmp_path):
    argv = ["asym", "--kind", "delta11", "--args", "1.5707963", "--radii", "5", "10", "--out", str(tmp_path)]
    assert dispatch(argv) == 0
    table = rows(tmp_path / "asym.csv")
    assert len(table) == 3


def test_trace(tmp_path):
    assert dispatch(["trace", "--lam", "1.5", "0.0", "--out", str(tmp_path)]) == 0
    table = rows(tmp_path / "trace.csv")
    assert table[0] == ["solution", "x", "y_re", "y_im", "dy_re", "dy_im"]
    # X_1 = cos(lam x) on the free problem
    last = [r for r in table[1:] if r[0] == "1"][-1]
    assert float(last[2]) == pytest.approx(math.cos(1.5 * PI), abs=1e-8)


def test_validate_free_and_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert dispatch(["validate", "--out", str(d), "--seed", "3"]) == 0
    for name in ("validate.csv", "validate.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert json.loads((a / "validate.json").read_text())["passed"] is True


def test_validate_problem_file(tmp_path):
    path = tmp_path / "p.json"
    save_problem(constant_problem(0.3, 0.2), path)
    argv = ["validate", "--problem", str(path), "--re", "-4", "4", "5", "--im", "-2", "2", "3", "--out", str(tmp_path / "o")]
    assert dispatch(argv) == 0
    assert rows(tmp_path / "o" / "validate.csv")[0] == ["identity", "passed", "max_error", "tolerance"]


def test_inverse_from_spec(tmp_path):
    from test_inverse import const_p_config, const_p_roots

    r1, r11 = const_p_roots(0.3, 3)
    spec = tmp_path / "run.json"
    spec.write_text(json.dumps(const_p_config(0.0, r1, r11, report_box=(0.25, 3.75, -1.0, 1.0)).to_dict()))
    assert dispatch(["inverse", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 0
    res = json.loads((tmp_path / "o" / "inverse.json").read_text())
    assert res["status"] == "converged" and res["params"][0] == pytest.approx(0.3, abs=1e-6)
    assert res["condition_S_report"]["status"] in ("holds", "fails", "undecided")
    log = rows(tmp_path / "o" / "inverse_log.csv")
    assert log[0][:3] == ["iter", "damping", "residual_norm"]
    assert len(log) >= 2


def test_inverse_failure_exits_1(tmp_path):
    from test_inverse import const_p_config

    spec = tmp_path / "run.json"
    spec.write_text(json.dumps(const_p_config(0.0, [1.0, 1.3, 1.7], [0.5, 0.6], max_iter=30).to_dict()))
    assert dispatch(["inverse", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 1
    assert json.loads((tmp_path / "o" / "inverse.json").read_text())["status"] == "failed"


def test_scenario_condition_violation_exits_1(tmp_path):
    assert dispatch(["scenario", "three_spectra", "--truth", "zero", "--box", "0.25", "4.3", "-2", "2", "--out", str(tmp_path)]) == 1


def test_flags_override_environment(monkeypatch):
    monkeypatch.setenv("NLPENCIL_GRID_N", "257")
    seen = {}
    import nlpencil.cli as cli

    def spy(args, sink):
        seen["n"] = config.current().grid_n
        return 0

    monkeypatch.setitem(cli.COMMANDS, "trace", spy)
    assert dispatch(["trace", "--lam", "1", "0"]) == 0
    assert seen["n"] == 257
    assert dispatch(["trace", "--lam", "1", "0", "--grid-n", "129"]) == 0
    assert seen["n"] == 129


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nlpencil", "spectrum", "--fn", "bogus", "--box", "0", "1", "0", "1"], capture_output=True, text=True)
    assert proc.returncode == 2


def test_parser_lists_every_subcommand():
    text = build_parser().format_help()
    for cmd in ("scan", "spectrum", "weyl", "asym", "inverse", "scenario", "validate", "trace"):
        assert cmd in text
