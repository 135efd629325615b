"""Command-line front end.

    reentry-ekf simulate | filter | sweep | plot  [--config FILE] [overrides] [--out DIR]

Exit codes: 0 success, 2 config/validation error, 3 numerical failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from reentry_ekf import output
from reentry_ekf.ekf import FilterError, initial_filter_state, run_filter
from reentry_ekf.harness import RunFailed, beta_sweep, run_metrics
from reentry_ekf.sim import ConfigInvalid, ManeuverSchedule, ScenarioConfig, Thresholds, simulate
from reentry_ekf.smallmat import NotPositiveDefinite

log = logging.getLogger("reentry_ekf")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
DEFAULT_BETAS = (300.0, 500.0, 700.0)


class ParseError(ValueError):
    pass


class ValidationError(ConfigInvalid):
    pass


_SCALARS = {"beta": float, "dt": float, "duration": float, "q": float, "r": float,
            "seed": int, "runs": int}
_STRINGS = {"prediction_mode", "jacobian_mode", "truth_integrator", "filter_input"}
_KNOWN = set(_SCALARS) | _STRINGS | {"initial_truth", "p0_diag", "maneuver", "thresholds", "betas"}


def _number(key, value, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(key, f"expected a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ValidationError(key, f"expected an integer, got {value!r}")
        return int(value)
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(key, "must be finite")
    return value


def _object(key, value, allowed):
    if not isinstance(value, dict):
        raise ValidationError(key, "expected an object")
    extra = sorted(set(value) - set(allowed))
    if extra:
        raise ValidationError(f"{key}.{extra[0]}", "unknown key")
    return value


def parse_config(path=None, overrides: dict | None = None) -> tuple[ScenarioConfig, tuple[float, ...]]:
    """Build a ScenarioConfig from a JSON file and flag overrides.

    Returns the config and the list of betas for sweeps. Missing keys take
    their defaults; overrides replace file values.

    Raises:
        ParseError: unreadable or malformed file.
        ValidationError: a value violates a config invariant (``.key`` names it).
    """
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ParseError(f"{path}: top level must be a JSON object")
    raw = {**raw, **{k: v for k, v in (overrides or {}).items() if v is not None}}
    unknown = sorted(set(raw) - _KNOWN)
    if unknown:
        raise ValidationError(unknown[0], "unknown key")

    kw = {}
    for key, kind in _SCALARS.items():
        if key in raw:
            kw[key] = _number(key, raw[key], kind)
    for key in _STRINGS:
        if key in raw:
            if not isinstance(raw[key], str):
                raise ValidationError(key, "expected a string")
            kw[key] = raw[key]
    if "initial_truth" in raw:
        it = _object("initial_truth", raw["initial_truth"], ("x", "y", "vx", "vy"))
        default = ScenarioConfig().initial_truth
        kw["initial_truth"] = tuple(
            _number(f"initial_truth.{k}", it[k]) if k in it else default[i]
            for i, k in enumerate(("x", "y", "vx", "vy")))
    if "p0_diag" in raw:
        p0 = raw["p0_diag"]
        if not isinstance(p0, list) or len(p0) != 4:
            raise ValidationError("p0_diag", "expected a list of 4 numbers")
        kw["p0_diag"] = tuple(_number("p0_diag", v) for v in p0)
    if "maneuver" in raw:
        m = _object("maneuver", raw["maneuver"], ("kind", "ax", "ay", "period"))
        mkw = {k: _number(f"maneuver.{k}", m[k]) for k in ("ax", "ay", "period") if k in m}
        if "kind" in m:
            mkw["kind"] = m["kind"]
        try:
            kw["maneuver"] = ManeuverSchedule(**mkw)
        except ConfigInvalid as exc:
            raise ValidationError(exc.key, exc.message) from exc
    if "thresholds" in raw:
        t = _object("thresholds", raw["thresholds"], ("pos", "vel", "hold"))
        tkw = {k: _number(f"thresholds.{k}", t[k]) for k in ("pos", "vel") if k in t}
        if "hold" in t:
            tkw["hold"] = _number("thresholds.hold", t["hold"], int)
        kw["thresholds"] = Thresholds(**tkw)
    betas = DEFAULT_BETAS
    if "betas" in raw:
        b = raw["betas"]
        if not isinstance(b, list) or not b:
            raise ValidationError("betas", "expected a non-empty list")
        betas = tuple(_number("betas", v) for v in b)
        if any(not v > 0 for v in betas):
            raise ValidationError("betas", "must be > 0")
    try:
        config = ScenarioConfig(**kw)
    except ConfigInvalid as exc:
        raise ValidationError(exc.key, exc.message) from exc
    return config, betas


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON config file")
    common.add_argument("--beta", type=float)
    common.add_argument("--dt", type=float)
    common.add_argument("--runs", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--q", type=float)
    common.add_argument("--r", type=float)
    common.add_argument("--mode", choices=("standard", "paper_literal"), help="state prediction mode")
    common.add_argument("--jacobian-mode", choices=("regime_aware", "paper_literal"))
    common.add_argument("--betas", type=lambda s: [float(v) for v in s.split(",")],
                        help="comma-separated betas for sweep")
    common.add_argument("--out", default="out", help="output directory (default ./out)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="reentry-ekf", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="truth + measurements CSV")
    sub.add_parser("filter", parents=[common], help="single filter run CSV + plots")
    sub.add_parser("sweep", parents=[common], help="beta sweep summary, per-run CSVs, plots")
    pl = sub.add_parser("plot", parents=[common], help="re-render plots from run CSVs")
    pl.add_argument("csv", nargs="+", help="run CSV files written by filter/sweep")
    return p


def _overrides(args) -> dict:
    return {
        "beta": args.beta, "dt": args.dt, "runs": args.runs, "seed": args.seed,
        "q": args.q, "r": args.r, "prediction_mode": args.mode,
        "jacobian_mode": args.jacobian_mode, "betas": args.betas,
    }


def _cmd_simulate(config, betas, out: Path) -> None:
    traj = simulate(config)
    path = output.write_trajectory_csv(traj, out / f"trajectory_beta{config.beta:g}.csv")
    print(f"{len(traj)} samples, final altitude {traj.truth[-1, 1]:.1f} ft -> {path}")


def _cmd_filter(config, betas, out: Path) -> None:
    traj = simulate(config)
    run = run_filter(traj, config, initial_filter_state(config, traj.truth[0]))
    tag = f"{config.beta:g}"
    output.write_run_csv(run, out / f"run_beta{tag}.csv")
    output.emit_plots(run, config.beta, out / "plots")
    m = run_metrics(run, config)
    conv = "never" if m.convergence_time is None else f"{m.convergence_time:.2f} s"
    print(f"beta={tag}: samples={len(run)} rmse(x,y,vx,vy)="
          + ",".join(f"{v:.4g}" for v in m.rmse_per_component)
          + f" convergence={conv} mean_nees={m.mean_nees:.3f}")


def _cmd_sweep(config, betas, out: Path) -> None:
    summary = beta_sweep(config, betas, keep_runs=True)
    # all writes happen here, after every run has finished
    for res in summary.results:
        tag = f"{res.config.beta:g}"
        for i, run in enumerate(res.runs):
            output.write_run_csv(run, out / "runs" / f"beta{tag}" / f"run_{i:04d}.csv")
        output.emit_plots(res.runs[0], res.config.beta, out / "plots")
    path = output.write_sweep_summary(summary, out / "sweep_summary.csv")
    print(f"{'beta':>8} {'runs':>5} {'pos_rmse':>10} {'vel_rmse_x':>10} {'vel_rmse_y':>10} "
          f"{'conv_s':>8} {'never':>5} {'nees':>8}")
    for row in summary.rows:
        print(f"{row.beta:8g} {row.runs:5d} {row.position_rmse_mean:10.4g} "
              f"{row.rmse_mean[2]:10.4g} {row.rmse_mean[3]:10.4g} {row.conv_time_mean:8.3g} "
              f"{row.conv_time_never_count:5d} {row.nees_mean:8.4g}")
    print(f"summary -> {path}")


def _cmd_plot(config, betas, out: Path, csv_paths) -> None:
    for p in csv_paths:
        cols = output.read_run_csv(p)
        beta = _beta_from_name(Path(p)) or config.beta
        paths = output.emit_plots(cols, beta, out / "plots")
        print(f"{p}: {len(paths)} figures")


def _beta_from_name(path: Path) -> float | None:
    for part in (path.stem, path.parent.name):
        if part.startswith("run_beta") or part.startswith("beta"):
            try:
                return float(part.split("beta", 1)[1])
            except ValueError:
                pass
    return None


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        config, betas = parse_config(args.config, _overrides(args))
        if args.command == "simulate":
            _cmd_simulate(config, betas, out)
        elif args.command == "filter":
            _cmd_filter(config, betas, out)
        elif args.command == "sweep":
            _cmd_sweep(config, betas, out)
        else:
            _cmd_plot(config, betas, out, args.csv)
    except (ParseError, ConfigInvalid) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FilterError, RunFailed, NotPositiveDefinite, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
