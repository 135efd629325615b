"""EKF state estimation for a tactical ballistic missile during re-entry."""

from reentry_ekf.dynamics import ModelConstants, air_density, derivatives, jacobian
from reentry_ekf.ekf import FilterRun, FilterState, predict, run_filter, update
from reentry_ekf.harness import beta_sweep, monte_carlo
from reentry_ekf.sim import ManeuverSchedule, ScenarioConfig, simulate

__all__ = [
    "FilterRun",
    "FilterState",
    "ManeuverSchedule",
    "ModelConstants",
    "ScenarioConfig",
    "air_density",
    "beta_sweep",
    "derivatives",
    "jacobian",
    "monte_carlo",
    "predict",
    "run_filter",
    "simulate",
    "update",
]
