import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reentry_ekf import smallmat
from reentry_ekf.dynamics import DEFAULT_CONSTANTS, DRAG_FREE, derivatives, jacobian
from reentry_ekf.ekf import (
    FilterError,
    FilterState,
    PredictedState,
    build_transition,
    initial_filter_state,
    predict,
    run_filter,
    update,
)
from reentry_ekf.harness import convergence_index
from reentry_ekf.sim import ManeuverSchedule, ScenarioConfig, simulate

G = 32.2
REF_STATE = np.array([0.0, 150000.0, 2000.0, -5000.0])


def test_transition_zero_dt_is_identity():
    np.testing.assert_array_equal(build_transition(REF_STATE, 500, DEFAULT_CONSTANTS, 0.0), np.eye(4))


def test_transition_kinematic_rows():
    phi = build_transition(REF_STATE, 500, DEFAULT_CONSTANTS, 0.1)
    np.testing.assert_array_equal(phi[0], [1, 0, 0.1, 0])
    np.testing.assert_array_equal(phi[1], [0, 1, 0, 0.1])


def test_transition_altitude_column_linear_in_dt():
    a = build_transition(REF_STATE, 500, DEFAULT_CONSTANTS, 0.05)
    b = build_transition(REF_STATE, 500, DEFAULT_CONSTANTS, 0.1)
    np.testing.assert_allclose(b[2:, 1], 2 * a[2:, 1], rtol=1e-14)


def test_predict_zero_step_standard():
    fs = FilterState(REF_STATE.copy(), np.diag([4.0, 3.0, 2.0, 1.0]))
    ps = predict(fs, (0, 0), 500, DEFAULT_CONSTANTS, 0.0, 0.0)
    np.testing.assert_array_equal(ps.estimate, fs.estimate)
    np.testing.assert_array_equal(ps.covariance, fs.covariance)


def test_predict_identity_covariance_adds_q():
    fs = FilterState(REF_STATE.copy(), np.eye(4))
    ps = predict(fs, (0, 0), 500, DEFAULT_CONSTANTS, 0.0, 0.01)
    np.testing.assert_array_equal(ps.covariance, 1.01 * np.eye(4))


def test_prediction_modes_difference():
    fs = FilterState(REF_STATE.copy(), np.eye(4))
    std = predict(fs, (0, 0), 500, DEFAULT_CONSTANTS, 0.1, 0.01, "standard")
    lit = predict(fs, (0, 0), 500, DEFAULT_CONSTANTS, 0.1, 0.01, "paper_literal")
    # independent evaluation: x + f(x) dt versus (I + J dt) x
    f = derivatives(REF_STATE, (0, 0), 500)
    J = jacobian(REF_STATE, 500)
    expected = (f - J @ REF_STATE) * 0.1
    np.testing.assert_allclose(std.estimate - lit.estimate, expected, rtol=1e-9, atol=1e-9)
    np.testing.assert_array_equal(std.covariance, lit.covariance)
    # positions agree; the constant gravity term contributes -g dt to the v_y gap
    np.testing.assert_array_equal(std.estimate[:2], lit.estimate[:2])
    drag_part = (f[3] + G - J[3] @ REF_STATE) * 0.1
    assert (std.estimate[3] - lit.estimate[3]) - drag_part == pytest.approx(-G * 0.1, rel=1e-9)


def test_paper_literal_input_without_dt():
    fs = FilterState(np.array([0.0, 1e5, 100.0, -100.0]), np.eye(4))
    a = predict(fs, (0, 0), 1e12, DEFAULT_CONSTANTS, 0.1, 0.0, "paper_literal")
    b = predict(fs, (3.0, -4.0), 1e12, DEFAULT_CONSTANTS, 0.1, 0.0, "paper_literal")
    np.testing.assert_allclose(b.estimate - a.estimate, [0, 0, 3.0, -4.0], atol=1e-12)
    c = predict(fs, (3.0, -4.0), 1e12, DEFAULT_CONSTANTS, 0.1, 0.0, "standard")
    d = predict(fs, (0, 0), 1e12, DEFAULT_CONSTANTS, 0.1, 0.0, "standard")
    np.testing.assert_allclose(c.estimate - d.estimate, [0, 0, 0.3, -0.4], atol=1e-12)


def test_predict_rejects_unknown_mode():
    fs = FilterState(REF_STATE.copy(), np.eye(4))
    with pytest.raises(ValueError):
        predict(fs, (0, 0), 500, DEFAULT_CONSTANTS, 0.1, 0.0, "bogus")


def test_update_symmetric_scalar_case():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    z = np.array([3.0, 2.0, 1.0, 0.0])
    rep = update(PredictedState(x, np.eye(4), np.eye(4)), z, 1.0)
    np.testing.assert_allclose(rep.gain, 0.5 * np.eye(4), atol=1e-15)
    np.testing.assert_allclose(rep.posterior.estimate, 0.5 * (x + z), atol=1e-15)
    np.testing.assert_allclose(rep.posterior.covariance, 0.5 * np.eye(4), atol=1e-15)
    np.testing.assert_array_equal(rep.innovation, z - x)
    assert rep.nees is None


def test_update_infinite_measurement_noise():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    rep = update(PredictedState(x, np.eye(4), np.eye(4)), x + 10.0, 1e12)
    assert np.max(np.abs(rep.gain)) < 1e-9
    np.testing.assert_allclose(rep.posterior.estimate, x, atol=1e-8)


@given(st.lists(st.floats(1e-6, 1e6), min_size=4, max_size=4), st.floats(1e-3, 1e3))
def test_update_diagonal_closed_form(p, r):
    P = np.diag(p)
    rep = update(PredictedState(np.zeros(4), P, np.eye(4)), np.ones(4), r)
    expected = np.diag([pi / (pi + r) for pi in p])
    np.testing.assert_allclose(rep.gain, expected, rtol=1e-9, atol=1e-15)
    d = np.diag(rep.gain)
    assert np.all((d > 0) & (d < 1))
    off = rep.gain - np.diag(d)
    assert np.max(np.abs(off)) < 1e-12


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 10.0))
def test_update_never_increases_diagonal(seed, r):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(4, 4)) * rng.uniform(0.1, 100, size=4)
    P = smallmat.symmetrize(f @ f.T + 1e-3 * np.eye(4))
    rep = update(PredictedState(np.zeros(4), P, np.eye(4)), rng.normal(size=4), r)
    post = rep.posterior.covariance
    assert np.all(np.diag(post) <= np.diag(P) * (1 + 1e-12))
    np.testing.assert_array_equal(post, post.T)
    assert smallmat.min_eigenvalue(post) > -1e-9 * np.trace(post)


def test_update_nees_value():
    P = np.diag([1.0, 2.0, 4.0, 8.0])
    rep = update(PredictedState(np.zeros(4), P, np.eye(4)), np.zeros(4), 1.0,
                 truth=np.array([1.0, 1.0, 1.0, 1.0]))
    post = np.diag([0.5, 2 / 3, 0.8, 8 / 9])
    assert rep.nees == pytest.approx(sum(1 / d for d in np.diag(post)), rel=1e-12)


def test_update_joseph_matches_standard_form_at_optimal_gain():
    P = np.array([[4, 1, 0.5, 0], [1, 3, 0, 0.2], [0.5, 0, 2, 0.1], [0, 0.2, 0.1, 1]], dtype=float)
    ps = PredictedState(np.zeros(4), P, np.eye(4))
    a = update(ps, np.ones(4), 0.3)
    b = update(ps, np.ones(4), 0.3, joseph=True)
    np.testing.assert_allclose(a.posterior.covariance, b.posterior.covariance, atol=1e-12)


def test_update_requires_positive_r():
    with pytest.raises(ValueError):
        update(PredictedState(np.zeros(4), np.eye(4), np.eye(4)), np.zeros(4), 0.0)


def test_update_degenerate_innovation_covariance():
    P = -np.eye(4)
    with pytest.raises(smallmat.NotPositiveDefinite):
        update(PredictedState(np.zeros(4), P, np.eye(4)), np.zeros(4), 0.5)


def test_run_filter_reports_failing_step():
    cfg = ScenarioConfig(duration=1.0)
    traj = simulate(cfg)
    bad = FilterState(traj.truth[0], -10.0 * np.eye(4))
    with pytest.raises(FilterError) as exc:
        run_filter(traj, cfg, bad)
    assert exc.value.step == 0


def test_initial_state_draw():
    cfg = ScenarioConfig(seed=5)
    fs = initial_filter_state(cfg, np.zeros(4))
    np.testing.assert_array_equal(fs.covariance, np.diag(cfg.p0_diag))
    np.testing.assert_array_equal(fs.estimate, initial_filter_state(cfg, np.zeros(4)).estimate)
    assert np.all(np.abs(fs.estimate) < 5 * np.sqrt(cfg.p0_diag))


def test_zero_noise_drag_free_tracks_exactly():
    # matched model: truth follows the filter's Euler transition
    cfg = ScenarioConfig(q=0.0, r=0.0, constants=DRAG_FREE, initial_truth=(0.0, 2e5, 3000.0, 0.0),
                         truth_integrator="euler")
    traj = simulate(cfg)
    # r = 0 makes the innovation covariance singular once P collapses; a negligible r stands in
    fcfg = replace(cfg, r=1e-12)
    run = run_filter(traj, fcfg, FilterState(traj.truth[0].copy(), np.diag(cfg.p0_diag)))
    assert np.max(np.abs(run.errors)) < 1e-6


def _solve_ld(S, B):
    """Solve S X = B by Gauss-Jordan elimination with partial pivoting in extended precision."""
    n = len(S)
    M = np.concatenate([S, B], axis=1).astype(np.longdouble)
    for c in range(n):
        p = c + int(np.argmax(np.abs(M[c:, c])))
        M[[c, p]] = M[[p, c]]
        M[c] = M[c] / M[c, c]
        for i in range(n):
            if i != c:
                M[i] = M[i] - M[i, c] * M[c]
    return M[:, n:]


def textbook_kf(z, x0, P0, A, b, Q, R):
    """Plain linear Kalman filter with H = I, independent of the EKF code.

    Runs in long double so its own rounding sits well below the comparison
    tolerance, including the (I - K H) P cancellation on the first update.
    """
    ld = np.longdouble
    n = len(z)
    xs, Ps = np.empty((n, 4), dtype=ld), np.empty((n, 4, 4), dtype=ld)
    x, P = x0.astype(ld), P0.astype(ld)
    A, b, Q, R = A.astype(ld), b.astype(ld), Q.astype(ld), R.astype(ld)
    H = np.eye(4, dtype=ld)
    for k in range(n):
        if k > 0:
            x = A @ x + b
            P = A @ P @ A.T + Q
        S = H @ P @ H.T + R
        K = _solve_ld(S, (P @ H.T).T).T  # K S = P H^T, S symmetric
        x = x + K @ (z[k].astype(ld) - H @ x)
        P = (np.eye(4, dtype=ld) - K @ H) @ P
        P = (P + P.T) / 2
        xs[k], Ps[k] = x, P
    return xs, Ps


def linear_limit_case():
    cfg = ScenarioConfig(duration=60.0, constants=DRAG_FREE, initial_truth=(0.0, 2e5, 3000.0, 0.0))
    traj = simulate(cfg)
    init = initial_filter_state(cfg, traj.truth[0])
    dt = cfg.dt
    A = np.eye(4)
    A[0, 2] = A[1, 3] = dt
    b = np.array([0.0, 0.0, 0.0, -G * dt])
    oracle = textbook_kf(traj.measurements, init.estimate, init.covariance, A, b,
                         cfg.q * np.eye(4), cfg.r * np.eye(4))
    return cfg, traj, init, oracle


def test_oracle_precision_available():
    assert np.finfo(np.longdouble).eps < 1e-18


def test_linear_limit_matches_textbook_kf():
    cfg, traj, init, (xs, Ps) = linear_limit_case()
    run = run_filter(traj, cfg, init)
    assert len(run) == 601
    assert float(np.max(np.abs(run.estimates - xs))) < 1e-10
    assert float(np.max(np.abs(run.covariances - Ps))) < 1e-10


def test_run_filter_deterministic():
    cfg = ScenarioConfig(seed=3)
    traj = simulate(cfg)
    a, b = run_filter(traj, cfg), run_filter(traj, cfg)
    for f in ("estimates", "covariances", "nees", "innovations"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


@pytest.mark.parametrize("beta", [300.0, 500.0, 700.0])
def test_covariance_hygiene_full_run(beta):
    cfg = ScenarioConfig(beta=beta)
    run = run_filter(simulate(cfg), cfg)
    for k in range(len(run)):
        for P in (run.covariances[k], run.prior_covariances[k]):
            assert np.array_equal(P, P.T)
            assert smallmat.min_eigenvalue(P) > -1e-9 * np.trace(P)
        assert np.all(np.diag(run.covariances[k]) <= np.diag(run.prior_covariances[k]))


def test_filter_without_input_knowledge_degrades():
    man = ManeuverSchedule("square_wave", 300.0, 300.0, period=4.0)
    known = ScenarioConfig(maneuver=man, truth_integrator="euler")
    blind = replace(known, filter_input="zero")
    traj = simulate(known)
    e_known = np.sqrt(np.mean(run_filter(traj, known).errors[10:, 2:] ** 2))
    e_blind = np.sqrt(np.mean(run_filter(traj, blind).errors[10:, 2:] ** 2))
    assert e_blind > 5 * e_known


def _lag1(innov, start):
    """Ensemble lag-1 autocorrelation per channel, pooled over steps from ``start``."""
    a = innov[:, start:-1, :]
    b = innov[:, start + 1:, :]
    num = np.sum(a * b, axis=(0, 1))
    den = np.sqrt(np.sum(a * a, axis=(0, 1)) * np.sum(b * b, axis=(0, 1)))
    return num / den, a.shape[0] * a.shape[1]


def test_innovation_whiteness(matched_ensemble):
    cfg, runs, _ = matched_ensemble
    n = min(len(r) for r in runs)
    innov = np.stack([r.innovations[:n] for r in runs])
    start = max(convergence_index(np.abs(r.errors[:, 0]), cfg.thresholds.pos, cfg.thresholds.hold)
                for r in runs) + 10
    rho, N = _lag1(innov, start)
    assert np.all(np.abs(rho) < 3 / math.sqrt(N)), (rho, 3 / math.sqrt(N))


def test_matched_ensemble_covariance_hygiene(matched_ensemble):
    _, runs, _ = matched_ensemble
    for run in runs[:20]:
        assert np.all(np.diagonal(run.covariances, axis1=1, axis2=2) > 0)
        assert np.all(run.nees >= 0)
