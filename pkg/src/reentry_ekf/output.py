"""CSV persistence and SVG figures for filter runs and sweeps.

All numbers are written with 17 significant digits so a CSV round trip is
exact, and every file is written to a temporary sibling and renamed into
place.
"""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from reentry_ekf.ekf import FilterRun
from reentry_ekf.harness import SweepSummary
from reentry_ekf.sim import TrajectoryRecord

RUN_COLUMNS = [
    "t", "x_true", "y_true", "vx_true", "vy_true",
    "z_x", "z_y", "z_vx", "z_vy",
    "x_est", "y_est", "vx_est", "vy_est",
    "p11", "p22", "p33", "p44", "nees",
]
TRAJECTORY_COLUMNS = RUN_COLUMNS[:9] + ["u_x", "u_y"]
SWEEP_COLUMNS = [
    "beta", "runs", "rmse_x", "rmse_y", "rmse_vx", "rmse_vy",
    "conv_time_mean", "conv_time_never_count", "nees_mean",
]
COMPONENTS = [
    # key, label, unit
    ("x", "Position X", "ft"),
    ("y", "Position Y", "ft"),
    ("vx", "Velocity X", "ft/s"),
    ("vy", "Velocity Y", "ft/s"),
]


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return f"{float(v):.17g}"


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_run_csv(run: FilterRun, path) -> Path:
    diag = run.covariance_diagonals
    rows = (
        [run.times[k], *run.truth[k], *run.measurements[k], *run.estimates[k], *diag[k], run.nees[k]]
        for k in range(len(run))
    )
    return atomic_write_text(path, _table(RUN_COLUMNS, rows))


def write_trajectory_csv(traj: TrajectoryRecord, path) -> Path:
    rows = (
        [traj.times[k], *traj.truth[k], *traj.measurements[k], *traj.inputs[k]]
        for k in range(len(traj))
    )
    return atomic_write_text(path, _table(TRAJECTORY_COLUMNS, rows))


def write_sweep_summary(summary: SweepSummary, path) -> Path:
    if not summary.rows:
        raise ValueError("empty sweep summary")
    rows = (
        [r.beta, r.runs, *r.rmse_mean, r.conv_time_mean, r.conv_time_never_count, r.nees_mean]
        for r in summary.rows
    )
    return atomic_write_text(path, _table(SWEEP_COLUMNS, rows))


def read_csv_columns(path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(v) for v in row] for row in reader]
    arr = np.array(data, dtype=float).reshape(len(data), len(header))
    return {name: arr[:, j] for j, name in enumerate(header)}


def read_run_csv(path) -> dict[str, np.ndarray]:
    """Columns of a run CSV, plus ``errors`` (n, 4) and ``nees`` ready for metrics."""
    cols = read_csv_columns(path)
    missing = [c for c in RUN_COLUMNS if c not in cols]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    est = np.column_stack([cols[c] for c in ("x_est", "y_est", "vx_est", "vy_est")])
    truth = np.column_stack([cols[c] for c in ("x_true", "y_true", "vx_true", "vy_true")])
    cols["errors"] = est - truth
    return cols


# -- SVG --------------------------------------------------------------------

_W, _H = 720, 440
_ML, _MR, _MT, _MB = 90, 150, 50, 60
_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728")


def _nice_ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _tick_label(v: float) -> str:
    return f"{v:.6g}"


def svg_line_plot(title: str, xlabel: str, ylabel: str, series) -> str:
    """Render ``series = [(label, xs, ys, style), ...]`` as a standalone SVG.

    ``style`` is ``"line"`` or ``"dots"``. Output depends only on the data.
    """
    xs_all = np.concatenate([np.asarray(s[1], float) for s in series])
    ys_all = np.concatenate([np.asarray(s[2], float) for s in series])
    ok = np.isfinite(ys_all)
    x0, x1 = float(np.min(xs_all)), float(np.max(xs_all))
    y0, y1 = (float(np.min(ys_all[ok])), float(np.max(ys_all[ok]))) if ok.any() else (0.0, 1.0)
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        pad = abs(y0) * 0.05 or 1.0
        y0, y1 = y0 - pad, y1 + pad
    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def px(x):
        return _ML + (x - x0) / (x1 - x0) * pw

    def py(y):
        return _MT + ph - (y - y0) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_ML + pw / 2:.1f}" y="28" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _nice_ticks(x0, x1):
        X = px(t)
        out.append(f'<line x1="{X:.2f}" y1="{_MT + ph}" x2="{X:.2f}" y2="{_MT + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.2f}" y="{_MT + ph + 19}" text-anchor="middle">{_tick_label(t)}</text>')
    for t in _nice_ticks(y0, y1):
        Y = py(t)
        out.append(f'<line x1="{_ML - 5}" y1="{Y:.2f}" x2="{_ML}" y2="{Y:.2f}" stroke="black"/>')
        out.append(f'<line x1="{_ML}" y1="{Y:.2f}" x2="{_ML + pw}" y2="{Y:.2f}" stroke="#dddddd"/>')
        out.append(f'<text x="{_ML - 8}" y="{Y + 4:.2f}" text-anchor="end">{_tick_label(t)}</text>')
    out.append(f'<text x="{_ML + pw / 2:.1f}" y="{_H - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text transform="translate(18 {_MT + ph / 2:.1f}) rotate(-90)" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    out.append(f'<clipPath id="plot-area"><rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}"/></clipPath>')
    for i, (label, xs, ys, style) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        pts = [(px(float(a)), py(float(b))) for a, b in zip(xs, ys) if math.isfinite(float(b))]
        if style == "dots":
            dots = "".join(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="1.2"/>' for a, b in pts)
            out.append(f'<g fill="{color}" clip-path="url(#plot-area)">{dots}</g>')
        else:
            path = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.3" '
                       f'clip-path="url(#plot-area)" points="{path}"/>')
        ly = _MT + 16 + 20 * i
        out.append(f'<line x1="{_ML + pw + 12}" y1="{ly}" x2="{_ML + pw + 36}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="3"/>')
        out.append(f'<text x="{_ML + pw + 42}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _beta_tag(beta: float) -> str:
    return f"{beta:g}"


def emit_plots(run, beta: float, output_dir) -> list[Path]:
    """Trace and error-magnitude figures for each state component of one run.

    ``run`` is a FilterRun or the column dict returned by ``read_run_csv``.
    """
    if isinstance(run, FilterRun):
        t = run.times
        truth, meas, est = run.truth, run.measurements, run.estimates
        pdiag = run.covariance_diagonals
    else:
        t = run["t"]
        truth = np.column_stack([run[f"{k}_true"] for k, _, _ in COMPONENTS])
        meas = np.column_stack([run[f"z_{k}"] for k, _, _ in COMPONENTS])
        est = np.column_stack([run[f"{k}_est"] for k, _, _ in COMPONENTS])
        pdiag = np.column_stack([run[f"p{j}{j}"] for j in range(1, 5)])
    if len(t) == 0:
        raise ValueError("no samples to plot")
    out_dir = Path(output_dir)
    tag = _beta_tag(beta)
    paths = []
    for j, (key, label, unit) in enumerate(COMPONENTS):
        title = f"{label} estimation, beta = {tag} lb/ft^2"
        svg = svg_line_plot(title, "Time (s)", f"{label} ({unit})", [
            ("measurement", t, meas[:, j], "dots"),
            ("truth", t, truth[:, j], "line"),
            ("estimate", t, est[:, j], "line"),
        ])
        paths.append(atomic_write_text(out_dir / f"trace_{key}_beta{tag}.svg", svg))
    for j, (key, label, unit) in enumerate(COMPONENTS):
        title = f"{label} error magnitude, beta = {tag} lb/ft^2"
        svg = svg_line_plot(title, "Time (s)", f"|error| ({unit})", [
            ("|estimate - truth|", t, np.abs(est[:, j] - truth[:, j]), "line"),
            ("1-sigma", t, np.sqrt(np.maximum(pdiag[:, j], 0.0)), "line"),
        ])
        paths.append(atomic_write_text(out_dir / f"error_{key}_beta{tag}.svg", svg))
    return paths
