"""Variance-ratio (KPSS-type) control chart for detecting stationary errors in
polynomial regression models, with limit-process calibration and a Monte Carlo
harness."""

__version__ = "0.1.0"

from .detector import (  # noqa: E402
    DetectorConfig,
    StoppingResult,
    carl,
    run_monitor,
    statistic_path,
    variance_ratio,
)
from .dgp import InnovationSpec, ScenarioSpec, gen_scenario  # noqa: E402
from .kernels import Kernel, eval_kernel  # noqa: E402
from .limit_sim import CalibrationTable, GridSpec, calibrate  # noqa: E402
from .mc_harness import ExperimentPlan, MCResult, curve_sweep, replay_rates, run_plan  # noqa: E402
from .poly_regress import (  # noqa: E402
    ResidualState,
    fit_ls,
    hilbert_inverse,
    residuals_no_update,
    update_residuals,
)

__all__ = [
    "CalibrationTable",
    "DetectorConfig",
    "ExperimentPlan",
    "InnovationSpec",
    "MCResult",
    "ScenarioSpec",
    "GridSpec",
    "Kernel",
    "ResidualState",
    "StoppingResult",
    "calibrate",
    "carl",
    "curve_sweep",
    "eval_kernel",
    "fit_ls",
    "gen_scenario",
    "hilbert_inverse",
    "replay_rates",
    "residuals_no_update",
    "run_plan",
    "run_monitor",
    "statistic_path",
    "update_residuals",
    "variance_ratio",
]
