import io
import json
import subprocess
import sys

import numpy as np
import pytest

from kpss_monitor.cli import (
    EXIT_FILE,
    EXIT_INPUT,
    EXIT_NO_SIGNAL,
    EXIT_SIGNAL,
    EXIT_USAGE,
    InputParseError,
    main,
    parse_series,
)
from kpss_monitor.dgp import ScenarioSpec, gen_scenario
from kpss_monitor.limit_sim import calibrate

DETECTOR = ["--horizon", "120", "--kappa", "0.2", "--gamma", "0.05", "--bandwidth", "10"]


def _write(path, values, header="y"):
    path.write_text((header + "\n" if header else "") + "".join(f"{v!r}\n" for v in values))
    return str(path)


def _exit_code(argv):
    """Exit status whether it is returned or raised by argparse."""
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code


@pytest.fixture
def walk_file(tmp_path):
    y = np.cumsum(np.random.default_rng(0).standard_normal(120))
    return _write(tmp_path / "walk.txt", y.tolist())


@pytest.fixture
def table_file(tmp_path):
    path = tmp_path / "cal.json"
    calibrate("gaussian-paper", 12.0, 0.2, 0.05, 1, alpha=[0.05], num_paths=60, seed=1, N=240).dump(path)
    return str(path)


# ----------------------------------------------------------- input parsing


def test_parse_series_with_and_without_header():
    assert parse_series(["y", "1", "2.5", ""]).tolist() == [1.0, 2.5]
    assert parse_series(["1", "-3e-2"]).tolist() == [1.0, -0.03]


@pytest.mark.parametrize(
    "lines, lineno",
    [(["y", "1", "", "2"], 3), (["1", "abc"], 2), (["1", "nan"], 2), (["1,2"], 1), (["y", "1", "inf"], 3)],
)
def test_parse_errors_report_line_number(lines, lineno):
    with pytest.raises(InputParseError, match=f"line {lineno}:"):
        parse_series(lines)


# ---------------------------------------------------------------- monitor


def test_noiseless_trend_signals_at_k(tmp_path, capsys):
    path = _write(tmp_path / "line.txt", (2.0 + 0.5 * np.arange(1, 121)).tolist())
    assert main(["monitor", path, *DETECTOR, "--climit", "0"]) == EXIT_SIGNAL
    assert "signal at t=24" in capsys.readouterr().out


def test_emitted_path_is_csv(walk_file, capsys):
    assert main(["monitor", walk_file, *DETECTOR, "--climit", "-1", "--emit-path", "-"]) == EXIT_NO_SIGNAL
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "t,U_t" and len(out) == 1 + 120 - 24 + 1
    assert out[1].startswith("24,")


def test_stdin_input(monkeypatch):
    monkeypatch.setattr(sys, "stdin", io.StringIO("".join(f"{v}\n" for v in range(1, 121))))
    assert main(["monitor", "-", *DETECTOR, "--climit", "0"]) == EXIT_SIGNAL


def test_table_lookup_and_explicit_override(walk_file, table_file, capsys):
    code = main(["monitor", walk_file, *DETECTOR, "--table", table_file, "--alpha", "0.05"])
    assert code in (EXIT_SIGNAL, EXIT_NO_SIGNAL)
    assert main(["monitor", walk_file, *DETECTOR, "--table", table_file, "--alpha", "0.05", "--climit", "1e9"]) == EXIT_SIGNAL
    assert "c_R=1000000000.0" in capsys.readouterr().out


def test_kernel_mismatch_with_table_is_an_error(walk_file, table_file, capsys):
    code = main(["monitor", walk_file, *DETECTOR, "--kernel", "epanechnikov", "--table", table_file, "--alpha", "0.05"])
    assert code == EXIT_USAGE
    assert "kernel" in capsys.readouterr().err


def test_table_needs_alpha(walk_file, table_file):
    assert main(["monitor", walk_file, *DETECTOR, "--table", table_file]) == EXIT_USAGE


@pytest.mark.parametrize(
    "argv",
    [
        ["monitor", "{f}", "--horizon", "120", "--climit", "0"],
        ["monitor", "{f}", *DETECTOR],
        ["monitor", "{f}", *DETECTOR, "--zeta", "3", "--climit", "0"],
        ["monitor", "{f}", "--horizon", "120", "--kappa", "2", "--bandwidth", "10", "--climit", "0"],
        ["monitor", "{f}", *DETECTOR, "--climit", "0", "--kernel", "box"],
    ],
)
def test_usage_errors(walk_file, argv):
    assert _exit_code([walk_file if a == "{f}" else a for a in argv]) == EXIT_USAGE


def test_short_or_malformed_input(tmp_path):
    assert main(["monitor", _write(tmp_path / "s.txt", [1.0, 2.0]), *DETECTOR, "--climit", "0"]) == EXIT_INPUT
    bad = tmp_path / "bad.txt"
    bad.write_text("y\n1\nx\n")
    assert main(["monitor", str(bad), *DETECTOR, "--climit", "0"]) == EXIT_INPUT
    assert main(["monitor", str(tmp_path / "missing.txt"), *DETECTOR, "--climit", "0"]) == EXIT_FILE


def test_infinite_mode_monitors_past_horizon(tmp_path, capsys):
    y = np.cumsum(np.random.default_rng(2).standard_normal(200))
    path = _write(tmp_path / "long.txt", y.tolist())
    main(["monitor", path, *DETECTOR, "--climit", "-1", "--mode", "infinite", "--emit-path", "-"])
    assert capsys.readouterr().out.splitlines()[-1].startswith("200,")


def test_config_file_supplies_detector(tmp_path, walk_file):
    cfg = tmp_path / "det.json"
    cfg.write_text(json.dumps({"T": 120, "kappa": 0.2, "gamma": 0.05, "h": 10}))
    assert main(["monitor", walk_file, "--config", str(cfg), "--climit", "1e9"]) == EXIT_SIGNAL
    cfg.write_text(json.dumps({"T": 120, "bogus": 1}))
    assert main(["monitor", walk_file, "--config", str(cfg), "--climit", "0"]) == EXIT_USAGE


# ------------------------------------------------------ generate round trip


def test_generated_series_round_trips_exactly(tmp_path):
    spec = ScenarioSpec(T=120, change_point=30, delta=0.25, innovations={"kind": "arma11", "rho": 0.3, "beta_ma": 0.8})
    sc = tmp_path / "sc.json"
    sc.write_text(json.dumps(spec.to_dict()))
    out = tmp_path / "y.txt"
    assert main(["generate", str(sc), "--seed", "4", "-o", str(out)]) == 0
    y = parse_series(out.read_text().splitlines())
    np.testing.assert_array_equal(y, gen_scenario(spec, 4))
    assert main(["monitor", str(out), *DETECTOR, "--climit", "0"]) in (EXIT_SIGNAL, EXIT_NO_SIGNAL)


# -------------------------------------------------------------- calibrate


def test_calibrate_writes_table_and_prints_levels(tmp_path, capsys):
    out = tmp_path / "t.json"
    argv = ["calibrate", "--zeta", "12", "--kappa", "0.2", "--gamma", "0.05", "--alpha", "0.01", "0.05", "0.1",
            "--paths", "100", "--grid", "240", "--seed", "3", "-o", str(out)]
    assert main(argv) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "alpha,c_R"
    limits = [float(line.split(",")[1]) for line in lines[1:]]
    assert limits == sorted(limits)
    doc = json.loads(out.read_text())
    assert doc["params"]["zeta"] == 12.0 and doc["num_paths"] == 100
    first = out.read_bytes()
    assert main(argv) == 0
    assert out.read_bytes() == first


def test_calibrate_rejects_bad_levels():
    assert main(["calibrate", "--zeta", "12", "--alpha", "1.5", "--paths", "10", "--grid", "240"]) == EXIT_USAGE


# -------------------------------------------------------- simulate, curves


def _plan(tmp_path, limits, name="plan.json"):
    doc = {
        "reps": 20,
        "seed": 5,
        "detector": {"T": 120, "kappa": 0.2, "gamma": 0.05, "h": 10},
        "limits": limits,
        "scenarios": [
            {"id": "null", "innovations": {"kind": "arma11", "rho": 0.3}},
            {"id": "cp30", "change_point": 30, "innovations": {"kind": "arma11", "rho": 0.3}},
        ],
    }
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_simulate_outputs_are_byte_identical(tmp_path):
    plan = _plan(tmp_path, {"c": [1e-3, 1e-2]})
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", plan, "-q", "-o", str(a), "--summary", str(tmp_path / "s.json")]) == 0
    assert main(["simulate", plan, "-q", "-o", str(b), "--threads", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0].startswith("scenario_id,alpha,c_R,c_R_x1e6,rate")
    summary = json.loads((tmp_path / "s.json").read_text())
    assert summary["plan"]["seed"] == 5 and len(summary["results"]) == 4


def test_simulate_streams_progress(tmp_path, capsys):
    main(["simulate", _plan(tmp_path, {"c": [1e-3]}), "-o", str(tmp_path / "o.csv")])
    assert "[null] 20/20" in capsys.readouterr().err


def test_curves_emit_scaled_limit_column(tmp_path, capsys):
    assert main(["curves", _plan(tmp_path, {"c": [1e-3, 2e-3, 4e-3]}), "-q"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "scenario_id,c,c_x1e6,rate,carl" and len(rows) == 7
    assert float(rows[1].split(",")[2]) == pytest.approx(1e3)


def test_curves_reject_unsorted_grid(tmp_path, capsys):
    assert main(["curves", _plan(tmp_path, {"c": [2e-3, 1e-3]}), "-q"]) == EXIT_USAGE
    assert "sorted" in capsys.readouterr().err


def test_entry_point_exit_code(tmp_path):
    path = _write(tmp_path / "line.txt", list(range(1, 121)), header=None)
    proc = subprocess.run(
        [sys.executable, "-m", "kpss_monitor.cli", "monitor", path, *DETECTOR, "--climit", "0"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == EXIT_SIGNAL, proc.stderr
