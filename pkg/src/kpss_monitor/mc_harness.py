"""Monte Carlo driver: scenarios x control limits -> rejection rates and CARL.

Each replication's full statistic path ``(t, U_t)`` is computed once and every
control limit is replayed on it, so rates are monotone in ``c`` by
construction and one simulation serves a whole grid of limits.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .detector import NO_SIGNAL, DetectorConfig, statistic_path
from .dgp import ScenarioSpec, gen_scenario, scenario_from_dict
from .kernels import Kernel
from .limit_sim import CalibrationTable, calibrate


class PlanError(ValueError):
    """Inconsistent experiment plan."""


@dataclass
class ExperimentPlan:
    """Scenarios, a detector template and the control limits to evaluate.

    Limits come either from ``climits`` directly or from ``alphas`` resolved
    through ``table`` (calibrated on demand with ``calibration`` settings
    when no table is given).
    """

    scenarios: list[ScenarioSpec]
    detector: DetectorConfig
    climits: list[float] | None = None
    alphas: list[float] | None = None
    table: CalibrationTable | None = None
    calibration: dict = field(default_factory=lambda: {"paths": 5000, "seed": 1, "N": 1000})
    reps: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.reps < 1:
            raise PlanError("reps must be at least 1")
        if not self.scenarios:
            raise PlanError("plan has no scenarios")
        if (self.climits is None) == (self.alphas is None):
            raise PlanError("give exactly one of climits or alphas")
        for sc in self.scenarios:
            if sc.T != self.detector.T or sc.p != self.detector.p:
                raise PlanError(
                    f"scenario {sc.id!r} has (T, p) = ({sc.T}, {sc.p}), "
                    f"detector has ({self.detector.T}, {self.detector.p})"
                )
        ids = [sc.id for sc in self.scenarios]
        if len(set(ids)) != len(ids):
            raise PlanError("scenario ids must be unique")


@dataclass
class MCResult:
    scenario_id: str
    c_R: float
    rate: float
    carl: float | None
    reps: int
    signals: int
    alpha: float | None = None

    @property
    def se(self) -> float:
        return math.sqrt(self.rate * (1.0 - self.rate) / self.reps)


@dataclass
class PathBundle:
    """Statistic paths of all replications of one scenario, shape ``(reps, n_t)``."""

    times: np.ndarray
    stats: np.ndarray


def replay_rates(times: np.ndarray, stats: np.ndarray, c_grid: Sequence[float]) -> list[tuple[float, float, float | None, int]]:
    """Stop each stored path at its first ``U_t <= c`` for every ``c``.

    Returns ``(c, rate, carl, signals)`` per limit; ``carl`` is ``None``
    when no path signals.
    """
    stats = np.atleast_2d(stats)
    out = []
    for c in c_grid:
        hit = stats <= c
        fired = hit.any(axis=1)
        n = int(fired.sum())
        rate = n / stats.shape[0]
        if n:
            first = times[np.argmax(hit[fired], axis=1)]
            mean_stop = float(np.mean(first))
        else:
            mean_stop = None
        out.append((float(c), rate, mean_stop, n))
    return out


def stop_times(times: np.ndarray, stats: np.ndarray, c: float) -> np.ndarray:
    """Per-path stop time for limit ``c`` (``inf`` for no signal)."""
    stats = np.atleast_2d(stats)
    hit = stats <= c
    fired = hit.any(axis=1)
    out = np.full(stats.shape[0], NO_SIGNAL)
    out[fired] = times[np.argmax(hit[fired], axis=1)]
    return out


def rep_seed(master: int, cell: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=master, spawn_key=(cell, rep))


def _paths_chunk(args) -> np.ndarray:
    scenario, detector, master, cell, lo, hi = args
    rows = []
    for rep in range(lo, hi):
        y = gen_scenario(scenario, np.random.default_rng(rep_seed(master, cell, rep)))
        rows.append(statistic_path(y, detector)[1])
    return np.stack(rows)


def simulate_paths(
    scenario: ScenarioSpec,
    detector: DetectorConfig,
    reps: int,
    seed: int,
    cell: int = 0,
    workers: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> PathBundle:
    """Statistic paths for ``reps`` replications; deterministic in ``(seed, cell, rep)``."""
    chunk = 100
    jobs = [(scenario, detector, seed, cell, lo, min(lo + chunk, reps)) for lo in range(0, reps, chunk)]
    parts = []
    if workers <= 1:
        for job in jobs:
            parts.append(_paths_chunk(job))
            if progress:
                progress(job[5], reps)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for job, part in zip(jobs, pool.map(_paths_chunk, jobs)):
                parts.append(part)
                if progress:
                    progress(job[5], reps)
    stats = np.concatenate(parts)
    times = np.arange(detector.k, detector.k + stats.shape[1])
    return PathBundle(times, stats)


def resolve_limits(plan: ExperimentPlan, workers: int = 1) -> list[tuple[float | None, float]]:
    """``(alpha, c_R)`` pairs for the plan; ``alpha`` is ``None`` for direct limits."""
    if plan.climits is not None:
        return [(None, float(c)) for c in plan.climits]
    table = plan.table
    det = plan.detector
    if table is None:
        cal = plan.calibration
        table = calibrate(
            det.kernel,
            det.zeta,
            det.kappa,
            det.gamma,
            det.p,
            alpha=plan.alphas,
            num_paths=int(cal.get("paths", 5000)),
            seed=int(cal.get("seed", 1)),
            N=int(cal.get("N", 1000)),
            workers=workers,
        )
        plan.table = table
    check_table_matches(table, det)
    return [(float(a), table.c_R(a)) for a in plan.alphas]


def check_table_matches(table: CalibrationTable, det: DetectorConfig) -> None:
    if table.kernel != det.kernel.kind:
        raise PlanError(f"calibration kernel {table.kernel!r} differs from detector kernel {det.kernel.kind!r}")
    for name, a, b in (
        ("zeta", table.zeta, det.zeta),
        ("kappa", table.kappa, det.kappa),
        ("gamma", table.gamma, det.gamma),
        ("p", table.p, det.p),
    ):
        if not math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12):
            raise PlanError(f"calibration {name}={a} differs from detector {name}={b}")


def run_plan(
    plan: ExperimentPlan,
    workers: int = 1,
    progress: Callable[[str, int, int], None] | None = None,
) -> list[MCResult]:
    """Rejection rate and CARL for every (scenario, limit) cell."""
    limits = resolve_limits(plan, workers)
    results = []
    for cell, sc in enumerate(plan.scenarios):
        cb = (lambda done, total, _id=sc.id: progress(_id, done, total)) if progress else None
        bundle = simulate_paths(sc, plan.detector, plan.reps, plan.seed, cell, workers, cb)
        rows = replay_rates(bundle.times, bundle.stats, [c for _, c in limits])
        for (alpha, c), (_, rate, mean_stop, n) in zip(limits, rows):
            results.append(MCResult(sc.id, c, rate, mean_stop, plan.reps, n, alpha))
    return results


def curve_sweep(
    plan: ExperimentPlan,
    workers: int = 1,
    progress: Callable[[str, int, int], None] | None = None,
) -> list[MCResult]:
    """Rate and CARL along an ascending grid of control limits."""
    if plan.climits is None:
        raise PlanError("curve sweeps need an explicit c-grid")
    c = list(plan.climits)
    if any(b < a for a, b in zip(c, c[1:])):
        raise PlanError("c-grid must be sorted ascending")
    return run_plan(plan, workers, progress)


CSV_FIELDS = ("scenario_id", "alpha", "c_R", "c_R_x1e6", "rate", "se", "carl", "signals", "reps")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def results_rows(results: Sequence[MCResult]) -> list[dict]:
    return [
        {
            "scenario_id": r.scenario_id,
            "alpha": r.alpha,
            "c_R": r.c_R,
            "c_R_x1e6": r.c_R * 1e6,
            "rate": r.rate,
            "se": r.se,
            "carl": r.carl,
            "signals": r.signals,
            "reps": r.reps,
        }
        for r in results
    ]


def write_results_csv(results: Sequence[MCResult], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for row in results_rows(results):
        writer.writerow([_fmt(row[k]) for k in CSV_FIELDS])


def summary_dict(plan: ExperimentPlan, results: Sequence[MCResult]) -> dict:
    det = plan.detector
    return {
        "library_version": __version__,
        "plan": {
            "reps": plan.reps,
            "seed": plan.seed,
            "detector": detector_to_dict(det),
            "climits": plan.climits,
            "alphas": plan.alphas,
            "calibration": plan.calibration if plan.table is None else {
                "paths": plan.table.num_paths, "seed": plan.table.seed, "N": plan.table.N,
            },
            "scenarios": [sc.to_dict() for sc in plan.scenarios],
        },
        "results": results_rows(results),
    }


def detector_to_dict(det: DetectorConfig) -> dict:
    return {
        "T": det.T,
        "kappa": det.kappa,
        "gamma": det.gamma,
        "h": det.h,
        "p": det.p,
        "kernel": det.kernel.kind,
        "infinite_horizon": det.infinite_horizon,
    }


def detector_from_dict(d: dict) -> DetectorConfig:
    d = dict(d)
    if "zeta" in d:
        if "h" in d:
            raise PlanError("give either h or zeta, not both")
        d["h"] = d["T"] / d.pop("zeta")
    kernel = d.pop("kernel", "gaussian-paper")
    if isinstance(kernel, dict):
        kernel = Kernel(**kernel)
    return DetectorConfig(kernel=kernel, **d)


def plan_from_dict(d: dict, base_dir: str | None = None) -> ExperimentPlan:
    """Build a plan from its JSON document (see README for the schema)."""
    import os

    d = dict(d)
    det = detector_from_dict(d["detector"])
    limits = d.get("limits", {})
    table = None
    if "table" in limits:
        path = limits["table"]
        if base_dir and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        table = CalibrationTable.load(path)
    scenarios = []
    for sc in d["scenarios"]:
        sc = dict(sc)
        sc.setdefault("T", det.T)
        sc.setdefault("p", det.p)
        scenarios.append(scenario_from_dict(sc))
    return ExperimentPlan(
        scenarios=scenarios,
        detector=det,
        climits=limits.get("c"),
        alphas=limits.get("alpha"),
        table=table,
        calibration=limits.get("calibration", {"paths": 5000, "seed": 1, "N": 1000}),
        reps=int(d.get("reps", 2000)),
        seed=int(d.get("seed", 0)),
    )


def load_plan(path) -> ExperimentPlan:
    import os

    with open(path, encoding="utf-8") as fh:
        return plan_from_dict(json.load(fh), os.path.dirname(os.path.abspath(path)))


def progress_to_stderr(scenario_id: str, done: int, total: int) -> None:
    print(f"[{scenario_id}] {done}/{total}", file=sys.stderr, flush=True)
