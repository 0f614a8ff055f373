"""Command-line front end.

Subcommands
-----------
monitor    run the chart on a series (one value per line, optional header)
calibrate  simulate the limit law and write a calibration table
simulate   run an experiment plan and write rejection rates and CARL
curves     sweep an ascending c-grid and write (c, 1e6 c, rate, CARL) rows
generate   write one simulated series from a scenario file

Exit codes: 0 no signal (or success), 10 signal, 11 usage or configuration
error, 12 malformed input, 13 numerical failure, 14 file error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from contextlib import contextmanager

import numpy as np

from . import __version__
from .detector import (
    DegenerateStatisticError,
    DetectorConfig,
    InsufficientStreamError,
    run_monitor,
)
from .dgp import SpecError, gen_scenario, load_scenario
from .kernels import Kernel
from .limit_sim import CalibrationTable, calibrate
from .mc_harness import (
    PlanError,
    check_table_matches,
    curve_sweep,
    load_plan,
    progress_to_stderr,
    run_plan,
    summary_dict,
    write_results_csv,
)

EXIT_NO_SIGNAL = 0
EXIT_SIGNAL = 10
EXIT_USAGE = 11
EXIT_INPUT = 12
EXIT_NUMERIC = 13
EXIT_FILE = 14

CLI_KERNELS = ("gaussian-paper", "gaussian-normalized", "epanechnikov")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


class InputParseError(CliError):
    def __init__(self, message: str):
        super().__init__(message, EXIT_INPUT)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_series(lines) -> np.ndarray:
    """One finite real per line; a non-numeric first line is a header.

    Blank or non-finite entries are missing values and rejected with their
    line number.  Trailing blank lines are ignored.
    """
    lines = list(lines)
    while lines and not lines[-1].strip():
        lines.pop()
    values = []
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if lineno == 1 and text.startswith("\ufeff"):
            text = text[1:]
        try:
            x = float(text)
        except ValueError:
            if lineno == 1 and _is_header(text):
                continue
            raise InputParseError(f"line {lineno}: cannot parse {text!r} as a number" if text else f"line {lineno}: missing value") from None
        if not math.isfinite(x):
            raise InputParseError(f"line {lineno}: missing or non-finite value {text!r}")
        values.append(x)
    return np.asarray(values, dtype=float)


def _is_header(text: str) -> bool:
    return bool(text) and (text[0].isalpha() or text[0] in "\"'_")


def format_series(y, header: str = "y") -> str:
    return header + "\n" + "".join(f"{float(v)!r}\n" for v in y)


@contextmanager
def _open_out(path):
    if path is None or path == "-":
        yield sys.stdout
        return
    try:
        fh = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}", EXIT_FILE) from None
    with fh:
        yield fh


def _read_text(path) -> list[str]:
    if path is None or path == "-":
        return sys.stdin.read().splitlines()
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_FILE) from None


def _load_json_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_FILE) from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise CliError(f"{path}: expected a JSON object")
    unknown = set(cfg) - set(_DETECTOR_KEYS)
    if unknown:
        raise CliError(f"{path}: unknown keys {sorted(unknown)}")
    return cfg


# config-file key -> argparse dest
_DETECTOR_KEYS = {
    "T": "horizon",
    "p": "order",
    "kappa": "kappa",
    "gamma": "gamma",
    "h": "bandwidth",
    "zeta": "zeta",
    "kernel": "kernel",
    "mode": "mode",
}

_DETECTOR_DEFAULTS = {"order": 1, "kappa": 0.1, "gamma": 0.02, "kernel": "gaussian-paper", "mode": "finite"}


def _detector_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("detector")
    g.add_argument("--config", help="JSON file with detector settings; flags override it")
    g.add_argument("--order", type=int, help="trend polynomial order p (default 1)")
    g.add_argument("--horizon", type=int, help="horizon T")
    g.add_argument("--kappa", type=float, help="monitoring starts at floor(T kappa) (default 0.1)")
    g.add_argument("--gamma", type=float, help="outer sums start at floor(T gamma); 0 means p+1 (default 0.02)")
    bw = g.add_mutually_exclusive_group()
    bw.add_argument("--bandwidth", type=float, help="kernel bandwidth h")
    bw.add_argument("--zeta", type=float, help="memory parameter T/h")
    g.add_argument("--kernel", choices=CLI_KERNELS, help="weighting kernel (default gaussian-paper)")


def _resolve(args, need_horizon: bool = True) -> dict:
    cfg = _load_json_config(getattr(args, "config", None))
    out = dict(_DETECTOR_DEFAULTS)
    for key, dest in _DETECTOR_KEYS.items():
        if key in cfg:
            out[dest] = cfg[key]
    for dest in set(_DETECTOR_KEYS.values()):
        val = getattr(args, dest, None)
        if val is not None:
            out[dest] = val
            if dest == "bandwidth":
                out.pop("zeta", None)
            if dest == "zeta":
                out.pop("bandwidth", None)
    if "bandwidth" in out and "zeta" in out:
        raise CliError("give either a bandwidth or zeta, not both")
    if need_horizon and "horizon" not in out:
        raise CliError("--horizon is required")
    if out["kernel"] not in CLI_KERNELS:
        raise CliError(f"unknown kernel {out['kernel']!r}")
    return out


def _detector(args) -> DetectorConfig:
    o = _resolve(args)
    T = int(o["horizon"])
    if "bandwidth" in o:
        h = float(o["bandwidth"])
    elif "zeta" in o:
        h = T / float(o["zeta"])
    else:
        raise CliError("one of --bandwidth or --zeta is required")
    if o["mode"] not in ("finite", "infinite"):
        raise CliError(f"mode must be finite or infinite, got {o['mode']!r}")
    try:
        return DetectorConfig(
            T=T,
            kappa=float(o["kappa"]),
            gamma=float(o["gamma"]),
            h=h,
            p=int(o["order"]),
            kernel=Kernel(o["kernel"]),
            infinite_horizon=o["mode"] == "infinite",
        )
    except ValueError as exc:
        raise CliError(f"invalid detector settings: {exc}") from None


def _limit(args, det: DetectorConfig) -> float:
    if args.climit is not None:
        return args.climit
    if args.table is None:
        raise CliError("give --climit or --table with --alpha")
    if args.alpha is None:
        raise CliError("--table needs --alpha")
    try:
        table = CalibrationTable.load(args.table)
    except OSError as exc:
        raise CliError(f"cannot read {args.table}: {exc.strerror}", EXIT_FILE) from None
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(f"{args.table}: {exc}") from None
    try:
        check_table_matches(table, det)
        return table.c_R(args.alpha)
    except (PlanError, KeyError, ValueError) as exc:
        raise CliError(str(exc)) from None


def cmd_monitor(args) -> int:
    det = _detector(args)
    det = det.with_limit(_limit(args, det))
    y = parse_series(_read_text(args.input))
    try:
        res = run_monitor(y, det)
    except InsufficientStreamError as exc:
        raise CliError(str(exc), EXIT_INPUT) from None
    except DegenerateStatisticError as exc:
        raise CliError(str(exc), EXIT_NUMERIC) from None
    if args.emit_path:
        with _open_out(args.emit_path) as fh:
            fh.write("t,U_t\n")
            for t, u in zip(res.times.tolist(), res.stats.tolist()):
                fh.write(f"{t},{u!r}\n")
    report = sys.stderr if args.emit_path == "-" else sys.stdout
    if res.stopped:
        print(f"signal at t={int(res.stop_time)} (U_t={float(res.stats[-1])!r} <= c_R={det.c_R!r})", file=report)
        return EXIT_SIGNAL
    last = res.times[-1] if len(res.times) else 0
    print(f"no signal up to t={int(last)} (c_R={det.c_R!r})", file=report)
    return EXIT_NO_SIGNAL


def cmd_calibrate(args) -> int:
    o = _resolve(args, need_horizon=False)
    if "zeta" in o:
        zeta = float(o["zeta"])
    elif "bandwidth" in o and "horizon" in o:
        zeta = float(o["horizon"]) / float(o["bandwidth"])
    else:
        raise CliError("calibration needs --zeta (or --bandwidth with --horizon)")
    if args.paths < 1:
        raise CliError("--paths must be positive")
    if any(not 0 < a < 1 for a in args.alpha):
        raise CliError("every --alpha must lie in (0, 1)")
    try:
        table = calibrate(
            Kernel(o["kernel"]),
            zeta,
            float(o["kappa"]),
            float(o["gamma"]),
            int(o["order"]),
            alpha=args.alpha,
            num_paths=args.paths,
            seed=args.seed,
            N=args.grid,
            workers=args.threads,
        )
    except ValueError as exc:
        raise CliError(f"invalid calibration settings: {exc}") from None
    except ArithmeticError as exc:
        raise CliError(str(exc), EXIT_NUMERIC) from None
    if args.output:
        try:
            table.dump(args.output)
        except OSError as exc:
            raise CliError(f"cannot write {args.output}: {exc.strerror}", EXIT_FILE) from None
    print("alpha,c_R")
    for a in args.alpha:
        print(f"{a!r},{table.c_R(a)!r}")
    return 0


def _plan(args):
    try:
        plan = load_plan(args.plan)
    except OSError as exc:
        raise CliError(f"cannot read {args.plan}: {exc.strerror}", EXIT_FILE) from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CliError(f"{args.plan}: invalid plan ({exc})") from None
    if args.reps is not None:
        plan.reps = args.reps
    if args.seed is not None:
        plan.seed = args.seed
    return plan


def cmd_simulate(args) -> int:
    plan = _plan(args)
    progress = None if args.quiet else progress_to_stderr
    try:
        results = run_plan(plan, workers=args.threads, progress=progress)
    except PlanError as exc:
        raise CliError(str(exc)) from None
    with _open_out(args.output) as fh:
        write_results_csv(results, fh)
    if args.summary:
        with _open_out(args.summary) as fh:
            json.dump(summary_dict(plan, results), fh, indent=1)
            fh.write("\n")
    return 0


def cmd_curves(args) -> int:
    plan = _plan(args)
    progress = None if args.quiet else progress_to_stderr
    try:
        results = curve_sweep(plan, workers=args.threads, progress=progress)
    except PlanError as exc:
        raise CliError(str(exc)) from None
    with _open_out(args.output) as fh:
        fh.write("scenario_id,c,c_x1e6,rate,carl\n")
        for r in results:
            carl = "" if r.carl is None else repr(r.carl)
            fh.write(f"{r.scenario_id},{r.c_R!r},{r.c_R * 1e6!r},{r.rate!r},{carl}\n")
    return 0


def cmd_generate(args) -> int:
    try:
        spec = load_scenario(args.scenario)
    except OSError as exc:
        raise CliError(f"cannot read {args.scenario}: {exc.strerror}", EXIT_FILE) from None
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise CliError(f"{args.scenario}: invalid scenario ({exc})") from None
    y = gen_scenario(spec, args.seed)
    with _open_out(args.output) as fh:
        fh.write(format_series(y))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kpss-monitor", description="Residual variance-ratio monitoring of trend stationarity.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("monitor", help="monitor a series")
    p.add_argument("input", nargs="?", default="-", help="series file, one value per line ('-' for stdin)")
    _detector_args(p)
    p.add_argument("--mode", choices=("finite", "infinite"), help="stop at T or monitor the whole stream")
    p.add_argument("--climit", type=float, help="control limit c_R (overrides --table)")
    p.add_argument("--table", help="calibration table JSON")
    p.add_argument("--alpha", type=float, help="level looked up in --table")
    p.add_argument("--emit-path", metavar="FILE", help="write the (t, U_t) path as CSV ('-' for stdout)")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("calibrate", help="simulate the limit law and write a calibration table")
    _detector_args(p)
    p.add_argument("--alpha", type=float, nargs="+", default=[0.05], help="levels (default 0.05)")
    p.add_argument("--paths", type=int, default=5000, help="simulated limit paths (default 5000)")
    p.add_argument("--grid", type=int, default=1000, help="grid size N (default 1000)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--output", "-o", help="calibration table JSON to write")
    p.set_defaults(func=cmd_calibrate)

    for name, func, help_ in (
        ("simulate", cmd_simulate, "run an experiment plan"),
        ("curves", cmd_curves, "rejection-rate and CARL curves over a c-grid"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("plan", help="experiment plan JSON")
        p.add_argument("--reps", type=int, help="override the plan's replication count")
        p.add_argument("--seed", type=int, help="override the plan's master seed")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--output", "-o", help="CSV output (default stdout)")
        p.add_argument("--quiet", "-q", action="store_true", help="no progress on stderr")
        if name == "simulate":
            p.add_argument("--summary", help="JSON summary with plan echo and results")
        p.set_defaults(func=func)

    p = sub.add_parser("generate", help="write a simulated series from a scenario JSON")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o", help="series file (default stdout)")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"kpss-monitor: error: {exc}", file=sys.stderr)
        return exc.code
    except SpecError as exc:
        print(f"kpss-monitor: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
