"""Monte Carlo evaluation and ballistic-coefficient sweeps.

Run ``i`` of an ensemble uses ``seed = config.seed + i``, so its metrics depend
only on ``(config, i)``. A sweep reuses the same seed schedule for every beta
(common random numbers), which pairs the runs across columns.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import chi2

from reentry_ekf.ekf import FilterRun, run_filter
from reentry_ekf.sim import ScenarioConfig, Thresholds, simulate

THREADS_ENV = "REENTRY_EKF_THREADS"
STATE_DIM = 4


class EmptySeries(ValueError):
    pass


class RunFailed(RuntimeError):
    def __init__(self, run_index: int, cause: Exception):
        super().__init__(f"run {run_index} failed: {cause}")
        self.run_index = run_index
        self.cause = cause


def rmse(errors) -> float:
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise EmptySeries("rmse of an empty series")
    return float(np.sqrt(np.mean(e * e)))


def convergence_index(errors, threshold: float, hold_steps: int) -> int | None:
    """First index opening a run of ``hold_steps`` samples with ``|error| < threshold``."""
    if not threshold > 0 or hold_steps < 1:
        raise ValueError("threshold must be > 0 and hold_steps >= 1")
    streak = 0
    for i, e in enumerate(np.abs(np.asarray(errors, dtype=float))):
        streak = streak + 1 if e < threshold else 0
        if streak == hold_steps:
            return i - hold_steps + 1
    return None


def convergence_time(errors, dt: float, threshold: float, hold_steps: int) -> float | None:
    """Convergence instant in seconds, or None when the error never settles."""
    idx = convergence_index(errors, threshold, hold_steps)
    return None if idx is None else idx * dt


@dataclass(frozen=True)
class RunMetrics:
    rmse_per_component: tuple[float, float, float, float]
    convergence_time: float | None
    mean_nees: float
    peak_abs_error: tuple[float, float, float, float]
    position_rmse: float
    window_start: int
    window_flagged: bool  # no convergence; window opened at 20% of the run

    @property
    def converged(self) -> bool:
        return self.convergence_time is not None


def metrics_from_arrays(errors: np.ndarray, nees: np.ndarray, dt: float,
                        thresholds: Thresholds) -> RunMetrics:
    n = len(errors)
    limits = (thresholds.pos, thresholds.pos, thresholds.vel, thresholds.vel)
    idx = [convergence_index(errors[:, j], limits[j], thresholds.hold) for j in range(STATE_DIM)]
    if any(i is None for i in idx):
        start, conv, flagged = int(0.2 * n), None, True
    else:
        start = max(idx)
        conv, flagged = start * dt, False
    w = errors[start:]
    return RunMetrics(
        rmse_per_component=tuple(rmse(w[:, j]) for j in range(STATE_DIM)),
        convergence_time=conv,
        mean_nees=float(np.mean(nees[start:])),
        peak_abs_error=tuple(float(v) for v in np.max(np.abs(errors), axis=0)),
        position_rmse=rmse(w[:, :2]),
        window_start=start,
        window_flagged=flagged,
    )


def run_metrics(run: FilterRun, config: ScenarioConfig) -> RunMetrics:
    return metrics_from_arrays(run.errors, run.nees, config.dt, config.thresholds)


@dataclass(frozen=True)
class BetaSummary:
    beta: float
    runs: int
    seed_base: int
    rmse_mean: tuple[float, ...]
    rmse_std: tuple[float, ...]
    position_rmse_mean: float
    position_rmse_std: float
    conv_time_mean: float  # over converged runs; nan when none converged
    conv_time_std: float
    conv_time_never_count: int
    nees_mean: float
    nees_std: float
    peak_abs_mean: tuple[float, ...]
    peak_abs_std: tuple[float, ...]


def _mean_std(values) -> tuple[float, float]:
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        return math.nan, math.nan
    std = float(np.std(a, ddof=1)) if a.size > 1 else 0.0
    return float(np.mean(a)), std


def summarize(beta: float, seed_base: int, metrics: list[RunMetrics]) -> BetaSummary:
    if not metrics:
        raise EmptySeries("no runs to summarize")
    rm = np.array([m.rmse_per_component for m in metrics])
    pk = np.array([m.peak_abs_error for m in metrics])
    conv = [m.convergence_time for m in metrics if m.converged]
    ct_mean, ct_std = _mean_std(conv)
    pos_mean, pos_std = _mean_std([m.position_rmse for m in metrics])
    nees_mean, nees_std = _mean_std([m.mean_nees for m in metrics])
    cols = [_mean_std(rm[:, j]) for j in range(STATE_DIM)]
    pcols = [_mean_std(pk[:, j]) for j in range(STATE_DIM)]
    return BetaSummary(
        beta=beta,
        runs=len(metrics),
        seed_base=seed_base,
        rmse_mean=tuple(c[0] for c in cols),
        rmse_std=tuple(c[1] for c in cols),
        position_rmse_mean=pos_mean,
        position_rmse_std=pos_std,
        conv_time_mean=ct_mean,
        conv_time_std=ct_std,
        conv_time_never_count=len(metrics) - len(conv),
        nees_mean=nees_mean,
        nees_std=nees_std,
        peak_abs_mean=tuple(c[0] for c in pcols),
        peak_abs_std=tuple(c[1] for c in pcols),
    )


@dataclass(frozen=True)
class MonteCarloResult:
    config: ScenarioConfig
    metrics: list[RunMetrics]
    summary: BetaSummary
    runs: list[FilterRun] | None = None


def run_config(config: ScenarioConfig, index: int) -> ScenarioConfig:
    return replace(config, seed=config.seed + index)


def single_run(config: ScenarioConfig, index: int) -> FilterRun:
    cfg = run_config(config, index)
    try:
        return run_filter(simulate(cfg), cfg)
    except Exception as exc:
        raise RunFailed(index, exc) from exc


def _job(args):
    config, index, keep = args
    run = single_run(config, index)
    return run_metrics(run, config), (run if keep else None)


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        workers = int(os.environ.get(THREADS_ENV, "1") or 1)
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def monte_carlo(config: ScenarioConfig, n_runs: int | None = None, *,
                workers: int | None = None, keep_runs: bool = False) -> MonteCarloResult:
    """Evaluate ``n_runs`` independent filter runs (default ``config.runs``).

    Results are merged in run-index order regardless of how many worker
    processes execute them.
    """
    n_runs = config.runs if n_runs is None else n_runs
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    jobs = [(config, i, keep_runs) for i in range(n_runs)]
    workers = min(resolve_workers(workers), n_runs)
    if workers == 1:
        out = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_job, jobs, chunksize=max(1, n_runs // (4 * workers))))
    metrics = [m for m, _ in out]
    runs = [r for _, r in out] if keep_runs else None
    return MonteCarloResult(config, metrics, summarize(config.beta, config.seed, metrics), runs)


@dataclass(frozen=True)
class SweepSummary:
    seed_base: int
    rows: list[BetaSummary]
    results: list[MonteCarloResult]

    @property
    def betas(self) -> list[float]:
        return [row.beta for row in self.rows]


def beta_sweep(base_config: ScenarioConfig, betas, n_runs: int | None = None, *,
               workers: int | None = None, keep_runs: bool = False) -> SweepSummary:
    betas = list(betas)
    if not betas or any(not b > 0 for b in betas):
        raise ValueError("betas must be a non-empty list of positive values")
    results = [monte_carlo(replace(base_config, beta=float(b)), n_runs,
                           workers=workers, keep_runs=keep_runs) for b in betas]
    return SweepSummary(base_config.seed, [r.summary for r in results], results)


def nees_band(n_runs: int, dof: int = STATE_DIM, confidence: float = 0.95) -> tuple[float, float]:
    """Two-sided chi-square band for the average of ``n_runs`` NEES values."""
    tail = (1.0 - confidence) / 2.0
    k = dof * n_runs
    return float(chi2.ppf(tail, k) / n_runs), float(chi2.ppf(1.0 - tail, k) / n_runs)


def paired_gap(worse: list[RunMetrics], better: list[RunMetrics]) -> tuple[float, float]:
    """Mean and standard error of the paired position-RMSE difference ``worse - better``."""
    d = np.array([a.position_rmse - b.position_rmse for a, b in zip(worse, better)])
    se = float(np.std(d, ddof=1) / math.sqrt(len(d))) if len(d) > 1 else 0.0
    return float(np.mean(d)), se
