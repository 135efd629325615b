"""Planar re-entry dynamics over a flat, non-rotating earth.

State is ``[x, y, vx, vy]`` in radar coordinates (ft, ft, ft/s, ft/s) with
``y`` the altitude. Drag acts along the velocity with magnitude
``rho * v**2 * g / (2 * beta)``; gravity is constant; a maneuver adds an
acceleration ``(ax, ay)`` to the velocity rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

REGIME_AWARE = "regime_aware"
PAPER_LITERAL = "paper_literal"
JACOBIAN_MODES = (REGIME_AWARE, PAPER_LITERAL)

# the printed Jacobian carries 2 * 22000 in the density-gradient entries
_LITERAL_GRADIENT_SCALE = 22000.0


@dataclass(frozen=True)
class ModelConstants:
    g: float = 32.2
    rho0_low: float = 0.002378
    scale_low: float = 30000.0
    rho0_high: float = 0.0034
    scale_high: float = 22000.0
    altitude_breakpoint: float = 30000.0
    v_eps: float = 1e-6
    # 0.0 switches the atmosphere off (drag-free / linear-limit studies)
    density_scale: float = 1.0

    def __post_init__(self):
        for name in ("g", "rho0_low", "scale_low", "rho0_high", "scale_high",
                     "altitude_breakpoint", "v_eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.density_scale >= 0:
            raise ValueError("density_scale must be non-negative")


DEFAULT_CONSTANTS = ModelConstants()
DRAG_FREE = ModelConstants(density_scale=0.0)


def _branch(y: float, c: ModelConstants) -> tuple[float, float]:
    if y >= c.altitude_breakpoint:
        return c.rho0_high, c.scale_high
    return c.rho0_low, c.scale_low


def air_density(y: float, c: ModelConstants = DEFAULT_CONSTANTS) -> float:
    """Piecewise exponential density (slug/ft^3); the breakpoint belongs to the upper branch."""
    rho0, scale = _branch(y, c)
    return c.density_scale * rho0 * math.exp(-y / scale)


def density_gradient(y: float, c: ModelConstants = DEFAULT_CONSTANTS) -> float:
    """d(rho)/dy of the active branch, ``-rho / scale``."""
    rho0, scale = _branch(y, c)
    return -c.density_scale * rho0 * math.exp(-y / scale) / scale


def flight_path_angle(vx: float, vy: float) -> float:
    """Angle below the horizontal, ``atan2(-vy, vx)``; 0 at zero velocity."""
    if vx == 0.0 and vy == 0.0:
        return 0.0
    return math.atan2(-vy, vx)


def derivatives(state, u=(0.0, 0.0), beta: float = 500.0,
                c: ModelConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Time derivative ``F(X) + phi u`` of the state."""
    _, y, vx, vy = (float(s) for s in state)
    ax, ay = float(u[0]), float(u[1])
    v2 = vx * vx + vy * vy
    dvx = ax
    dvy = ay - c.g
    if math.sqrt(v2) >= c.v_eps:
        gamma = math.atan2(-vy, vx)
        drag = air_density(y, c) * v2 * c.g / (2.0 * beta)
        dvx -= drag * math.cos(gamma)
        dvy += drag * math.sin(gamma)
    return np.array([vx, vy, dvx, dvy])


def jacobian(state, beta: float = 500.0, c: ModelConstants = DEFAULT_CONSTANTS,
             mode: str = REGIME_AWARE) -> np.ndarray:
    """Analytic ``dF/dX``.

    Rows 3-4 follow the closed-form entries built on the flight-path angle.
    The altitude column uses the density gradient of the active branch; with
    ``mode="paper_literal"`` the 22000 ft scale is used at every altitude.
    Below ``c.v_eps`` the drag rows are zero.
    """
    if mode not in JACOBIAN_MODES:
        raise ValueError(f"unknown jacobian mode {mode!r}")
    _, y, x3, x4 = (float(s) for s in state)
    J = np.zeros((4, 4))
    J[0, 2] = 1.0
    J[1, 3] = 1.0
    v2 = x3 * x3 + x4 * x4
    if math.sqrt(v2) < c.v_eps:
        return J
    gamma = math.atan2(-x4, x3)
    cg, sg = math.cos(gamma), math.sin(gamma)
    rho = air_density(y, c)
    k = rho * c.g / (2.0 * beta)
    if mode == PAPER_LITERAL:
        scale = _LITERAL_GRADIENT_SCALE
    else:
        scale = _branch(y, c)[1]
    # rho / (2 * scale * beta) * g * v^2, i.e. rho/(44000 beta) in the upper regime
    kd = rho * c.g * v2 / (2.0 * scale * beta)
    J[2, 1] = kd * cg
    J[2, 2] = -k * (2.0 * x3 * cg - x4 * sg)
    J[2, 3] = -k * (2.0 * x4 * cg + x3 * sg)
    J[3, 1] = -kd * sg
    J[3, 2] = k * (2.0 * x3 * sg + x4 * cg)
    J[3, 3] = k * (2.0 * x4 * sg - x3 * cg)
    return J


def specific_energy(state, c: ModelConstants = DEFAULT_CONSTANTS) -> float:
    _, y, vx, vy = (float(s) for s in state)
    return 0.5 * (vx * vx + vy * vy) + c.g * y
