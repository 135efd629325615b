import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20070115)


def random_spd(rng, cond_max=1e6):
    """SPD matrix with a controlled condition number, built as Q diag(ev) Q^T."""
    Q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    ev = np.exp(rng.uniform(0.0, np.log(cond_max), size=4))
    ev[0] = 1.0
    A = Q @ np.diag(ev) @ Q.T
    return 0.5 * (A + A.T)


@pytest.fixture(scope="session")
def matched_ensemble():
    """200 matched-model runs at the default beta: truth uses the filter's own
    Euler transition and the same q, r."""
    import time

    from reentry_ekf.harness import single_run
    from reentry_ekf.sim import ScenarioConfig

    cfg = ScenarioConfig(truth_integrator="euler")
    t0 = time.perf_counter()
    runs = [single_run(cfg, i) for i in range(200)]
    return cfg, runs, time.perf_counter() - t0


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
