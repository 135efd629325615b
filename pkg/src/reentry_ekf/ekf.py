"""Extended Kalman filter for the re-entry model.

The transition is the first-order discretization ``I + J(x) dt`` of the
dynamics Jacobian at the current estimate. The measurement matrix is the
identity, so the innovation covariance is ``P_pred + r I``.

Two state predictions are available. ``standard`` propagates the estimate
through the nonlinear model with an Euler step. ``paper_literal`` applies the
linear transition to the estimate and adds the raw input, which drops the
constant gravity term and the ``dt`` on the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from reentry_ekf import smallmat
from reentry_ekf.dynamics import REGIME_AWARE, ModelConstants, derivatives, jacobian
from reentry_ekf.sim import (
    INIT_STREAM,
    PAPER_LITERAL,
    STANDARD,
    NoiseStream,
    ScenarioConfig,
    TrajectoryRecord,
)

_I4 = np.eye(4)


class FilterError(RuntimeError):
    """A filter step failed; ``step`` is the sample index."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"filter failed at step {step}: {cause}")
        self.step = step
        self.cause = cause


@dataclass(frozen=True)
class FilterState:
    estimate: np.ndarray
    covariance: np.ndarray
    step_index: int = 0


@dataclass(frozen=True)
class PredictedState:
    estimate: np.ndarray
    covariance: np.ndarray
    transition_used: np.ndarray
    step_index: int = 0


@dataclass(frozen=True)
class UpdateReport:
    innovation: np.ndarray
    gain: np.ndarray
    posterior: FilterState
    nees: float | None = None


@dataclass(frozen=True)
class FilterRun:
    times: np.ndarray
    truth: np.ndarray
    measurements: np.ndarray
    estimates: np.ndarray
    covariances: np.ndarray        # posterior P per sample, (n, 4, 4)
    prior_covariances: np.ndarray  # P before the update at each sample
    nees: np.ndarray
    innovations: np.ndarray

    @property
    def errors(self) -> np.ndarray:
        return self.estimates - self.truth

    @property
    def covariance_diagonals(self) -> np.ndarray:
        return np.diagonal(self.covariances, axis1=1, axis2=2).copy()

    def __len__(self) -> int:
        return len(self.times)


def build_transition(estimate, beta: float, c: ModelConstants, dt: float,
                     jacobian_mode: str = REGIME_AWARE) -> np.ndarray:
    return _I4 + jacobian(estimate, beta, c, jacobian_mode) * dt


def predict(fs: FilterState, u, beta: float, c: ModelConstants, dt: float, q: float,
            prediction_mode: str = STANDARD,
            jacobian_mode: str = REGIME_AWARE) -> PredictedState:
    x = fs.estimate
    phi = build_transition(x, beta, c, dt, jacobian_mode)
    if prediction_mode == STANDARD:
        x_pred = x + derivatives(x, u, beta, c) * dt
    elif prediction_mode == PAPER_LITERAL:
        x_pred = phi @ x + np.array([0.0, 0.0, u[0], u[1]])
    else:
        raise ValueError(f"unknown prediction mode {prediction_mode!r}")
    P_pred = smallmat.symmetrize(phi @ fs.covariance @ phi.T + q * _I4)
    return PredictedState(x_pred, P_pred, phi, fs.step_index + 1)


def update(ps: PredictedState, z, r: float, truth=None, joseph: bool = False) -> UpdateReport:
    """Measurement update with H = I.

    Raises:
        NotPositiveDefinite: if ``P_pred + r I`` (or the posterior, when a
            truth state is given for NEES) cannot be factored.
    """
    if not r > 0:
        raise ValueError("measurement variance r must be > 0")
    P = ps.covariance
    S_inv = smallmat.invert_spd(P + r * _I4)
    K = P @ S_inv
    innovation = np.asarray(z, dtype=float) - ps.estimate
    x_post = ps.estimate + K @ innovation
    # I - K = I - P S^-1 = r S^-1; avoids cancellation when P >> r
    IK = r * S_inv
    if joseph:
        P_post = IK @ P @ IK.T + r * (K @ K.T)
    else:
        P_post = IK @ P
    P_post = smallmat.symmetrize(P_post)
    nees = None
    if truth is not None:
        e = np.asarray(truth, dtype=float) - x_post
        nees = float(e @ smallmat.invert_spd(P_post) @ e)
    return UpdateReport(innovation, K, FilterState(x_post, P_post, ps.step_index), nees)


def initial_filter_state(config: ScenarioConfig, truth0) -> FilterState:
    """Initial estimate: truth plus one draw from N(0, diag(p0_diag))."""
    draw = NoiseStream(config.seed, INIT_STREAM).normals(4)
    p0 = np.asarray(config.p0_diag, dtype=float)
    return FilterState(np.asarray(truth0, dtype=float) + np.sqrt(p0) * draw, np.diag(p0), 0)


def run_filter(traj: TrajectoryRecord, config: ScenarioConfig,
               init: FilterState | None = None) -> FilterRun:
    """Run predict/update over every sample; sample 0 is a pure update of ``init``."""
    if init is None:
        init = initial_filter_state(config, traj.truth[0])
    n = len(traj)
    c, beta, dt, q, r = config.constants, config.beta, config.dt, config.q, config.r
    estimates = np.empty((n, 4))
    covs = np.empty((n, 4, 4))
    priors = np.empty((n, 4, 4))
    nees = np.empty(n)
    innovations = np.empty((n, 4))
    zero_u = (0.0, 0.0)
    ps = PredictedState(init.estimate, init.covariance, _I4, 0)
    for k in range(n):
        try:
            if k > 0:
                u = traj.inputs[k - 1] if config.filter_input == "known" else zero_u
                ps = predict(fs, u, beta, c, dt, q, config.prediction_mode, config.jacobian_mode)
            rep = update(ps, traj.measurements[k], r, traj.truth[k], config.joseph)
        except (smallmat.NotPositiveDefinite, FloatingPointError, ValueError) as exc:
            raise FilterError(k, exc) from exc
        fs = rep.posterior
        priors[k] = ps.covariance
        estimates[k] = fs.estimate
        covs[k] = fs.covariance
        nees[k] = rep.nees
        innovations[k] = rep.innovation
    return FilterRun(traj.times, traj.truth, traj.measurements, estimates, covs, priors,
                     nees, innovations)
