"""Truth trajectories and radar measurements.

Truth is marched with classical RK4 at the radar sampling period, then
perturbed by additive process noise; measurements are the full state plus
white noise (identity measurement matrix).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from reentry_ekf.dynamics import (
    DEFAULT_CONSTANTS,
    JACOBIAN_MODES,
    REGIME_AWARE,
    ModelConstants,
    derivatives,
)

STANDARD = "standard"
PAPER_LITERAL = "paper_literal"
PREDICTION_MODES = (STANDARD, PAPER_LITERAL)

PROCESS_STREAM = 1
MEASUREMENT_STREAM = 2
INIT_STREAM = 3

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


class ConfigInvalid(ValueError):
    """A ScenarioConfig invariant is violated; ``key`` names the field."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


def _mix64(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # uint64 array arithmetic wraps modulo 2**64
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


class NoiseStream:
    """Reproducible N(0, 1) source.

    Uniforms come from SplitMix64 applied to a counter offset by a key derived
    from ``(seed, stream)``. Normal draw ``j`` is one half of the Box-Muller
    pair built from uniforms ``2*(j//2)`` and ``2*(j//2)+1``, so every draw is
    a pure function of ``(seed, stream, j)``.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self._key = _mix64(_mix64(self.seed & _MASK) ^ ((self.stream * _GOLDEN) & _MASK))
        self.position = 0

    def _uniform_bits(self, counters: np.ndarray) -> np.ndarray:
        z = np.uint64(self._key) + (counters + np.uint64(1)) * np.uint64(_GOLDEN)
        return _mix64_array(z)

    def draws_at(self, index: np.ndarray) -> np.ndarray:
        index = np.asarray(index, dtype=np.uint64)
        pair = index // np.uint64(2)
        b1 = self._uniform_bits(pair * np.uint64(2))
        b2 = self._uniform_bits(pair * np.uint64(2) + np.uint64(1))
        u1 = ((b1 >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * 2.0**-53
        u2 = (b2 >> np.uint64(11)).astype(np.float64) * 2.0**-53
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        odd = (index % np.uint64(2)).astype(bool)
        return np.where(odd, radius * np.sin(angle), radius * np.cos(angle))

    def normals(self, n: int) -> np.ndarray:
        out = self.draws_at(np.arange(self.position, self.position + n, dtype=np.uint64))
        self.position += n
        return out

    def standard_normal(self) -> float:
        return float(self.normals(1)[0])


@dataclass(frozen=True)
class ManeuverSchedule:
    kind: str = "none"  # none | constant | square_wave
    ax: float = 0.0
    ay: float = 0.0
    period: float = 10.0

    def __post_init__(self):
        if self.kind not in ("none", "constant", "square_wave"):
            raise ConfigInvalid("maneuver.kind", f"unknown kind {self.kind!r}")
        if self.kind == "square_wave" and not self.period > 0:
            raise ConfigInvalid("maneuver.period", "must be positive for square_wave")
        if not (math.isfinite(self.ax) and math.isfinite(self.ay)):
            raise ConfigInvalid("maneuver", "accelerations must be finite")

    def at(self, t: float) -> tuple[float, float]:
        if self.kind == "none":
            return 0.0, 0.0
        if self.kind == "constant":
            return self.ax, self.ay
        sign = 1.0 if int(math.floor(2.0 * t / self.period)) % 2 == 0 else -1.0
        return sign * self.ax, sign * self.ay


@dataclass(frozen=True)
class Thresholds:
    pos: float = 50.0
    vel: float = 25.0
    hold: int = 10


def default_initial_truth() -> tuple[float, float, float, float]:
    speed, gamma = 6000.0, math.radians(60.0)
    return (0.0, 200000.0, speed * math.cos(gamma), -speed * math.sin(gamma))


@dataclass(frozen=True)
class ScenarioConfig:
    beta: float = 500.0
    dt: float = 0.1
    duration: float = 60.0
    q: float = 0.01
    r: float = 0.3
    initial_truth: tuple[float, float, float, float] = field(default_factory=default_initial_truth)
    p0_diag: tuple[float, float, float, float] = (1e6, 1e6, 1e4, 1e4)
    maneuver: ManeuverSchedule = field(default_factory=ManeuverSchedule)
    seed: int = 42
    prediction_mode: str = STANDARD
    jacobian_mode: str = REGIME_AWARE
    runs: int = 100
    thresholds: Thresholds = field(default_factory=Thresholds)
    substeps: int = 1
    # "euler" marches truth with the filter's own discrete model (matched-model studies)
    truth_integrator: str = "rk4"
    joseph: bool = False
    # "known": filter is fed the applied maneuver; "zero": filter assumes u = 0
    filter_input: str = "known"
    constants: ModelConstants = DEFAULT_CONSTANTS

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def finite(key):
            if not math.isfinite(getattr(self, key)):
                raise ConfigInvalid(key, "must be finite")

        for key in ("beta", "dt", "duration", "q", "r"):
            finite(key)
        if not self.dt > 0:
            raise ConfigInvalid("dt", "must be > 0")
        if not self.duration >= self.dt:
            raise ConfigInvalid("duration", "must be >= dt")
        if not self.q >= 0:
            raise ConfigInvalid("q", "must be >= 0")
        # r = 0 is allowed for noiseless truth generation; the filter requires r > 0
        if not self.r >= 0:
            raise ConfigInvalid("r", "must be >= 0")
        if not self.beta > 0:
            raise ConfigInvalid("beta", "must be > 0")
        if len(self.initial_truth) != 4 or not all(math.isfinite(v) for v in self.initial_truth):
            raise ConfigInvalid("initial_truth", "must be 4 finite values")
        if len(self.p0_diag) != 4 or not all(p > 0 and math.isfinite(p) for p in self.p0_diag):
            raise ConfigInvalid("p0_diag", "must be 4 positive values")
        if self.prediction_mode not in PREDICTION_MODES:
            raise ConfigInvalid("prediction_mode", f"must be one of {PREDICTION_MODES}")
        if self.jacobian_mode not in JACOBIAN_MODES:
            raise ConfigInvalid("jacobian_mode", f"must be one of {JACOBIAN_MODES}")
        if not (isinstance(self.runs, int) and self.runs >= 1):
            raise ConfigInvalid("runs", "must be an integer >= 1")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            raise ConfigInvalid("seed", "must be an unsigned 64-bit integer")
        th = self.thresholds
        if not (th.pos > 0 and th.vel > 0):
            raise ConfigInvalid("thresholds", "pos and vel must be > 0")
        if not (isinstance(th.hold, int) and th.hold >= 1):
            raise ConfigInvalid("thresholds.hold", "must be an integer >= 1")
        if not (isinstance(self.substeps, int) and self.substeps >= 1):
            raise ConfigInvalid("substeps", "must be an integer >= 1")
        if self.truth_integrator not in ("rk4", "euler"):
            raise ConfigInvalid("truth_integrator", "must be 'rk4' or 'euler'")
        if self.filter_input not in ("known", "zero"):
            raise ConfigInvalid("filter_input", "must be 'known' or 'zero'")

    @property
    def max_samples(self) -> int:
        return int(math.floor(self.duration / self.dt + 1e-9)) + 1

    def field_names(self) -> list[str]:
        return [f.name for f in fields(self)]


@dataclass(frozen=True)
class TrajectoryRecord:
    times: np.ndarray         # (n,)
    truth: np.ndarray         # (n, 4)
    measurements: np.ndarray  # (n, 4)
    inputs: np.ndarray        # (n, 2), applied from times[k] to times[k+1]

    def __len__(self) -> int:
        return len(self.times)


def rk4_step(state, u, beta: float, c: ModelConstants, dt: float) -> np.ndarray:
    x = np.asarray(state, dtype=float)
    k1 = derivatives(x, u, beta, c)
    k2 = derivatives(x + 0.5 * dt * k1, u, beta, c)
    k3 = derivatives(x + 0.5 * dt * k2, u, beta, c)
    k4 = derivatives(x + dt * k3, u, beta, c)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def euler_step(state, u, beta: float, c: ModelConstants, dt: float) -> np.ndarray:
    x = np.asarray(state, dtype=float)
    return x + derivatives(x, u, beta, c) * dt


def simulate(config: ScenarioConfig) -> TrajectoryRecord:
    """Generate truth and measurements until impact (y <= 0) or the duration ends.

    The impact sample itself is kept as the final record entry.
    """
    config.validate()
    n_max = config.max_samples
    dt, c, beta = config.dt, config.constants, config.beta
    h = dt / config.substeps
    xi = NoiseStream(config.seed, PROCESS_STREAM).normals(4 * n_max).reshape(n_max, 4)
    eps = NoiseStream(config.seed, MEASUREMENT_STREAM).normals(4 * n_max).reshape(n_max, 4)
    xi *= math.sqrt(config.q)
    eps *= math.sqrt(config.r)

    step = rk4_step if config.truth_integrator == "rk4" else euler_step
    truth = np.empty((n_max, 4))
    inputs = np.empty((n_max, 2))
    truth[0] = config.initial_truth
    n = n_max
    for k in range(n_max):
        u = config.maneuver.at(k * dt)
        inputs[k] = u
        if k + 1 == n_max:
            break
        if truth[k, 1] <= 0.0:
            n = k + 1
            break
        x = truth[k]
        for _ in range(config.substeps):
            x = step(x, u, beta, c, h)
        truth[k + 1] = x + xi[k + 1]
    truth = truth[:n]
    times = np.arange(n) * dt
    return TrajectoryRecord(times=times, truth=truth, measurements=truth + eps[:n],
                            inputs=inputs[:n].copy())
