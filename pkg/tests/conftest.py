import logging

import numpy as np
import pytest

from lagrange_swarm import sim

# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session", autouse=True)
def _quiet_gain_warnings():
    logging.getLogger("lagrange_swarm").setLevel(logging.ERROR)


@pytest.fixture(scope="session")
def ref_doc():
    return sim.parse_document(sim.BUNDLED_SCENARIO.read_text())


@pytest.fixture(scope="session")
def ref_scenario():
    return sim.load_scenario_file(sim.BUNDLED_SCENARIO)


@pytest.fixture(scope="session")
def ref_run(ref_scenario):
    """The full 100 s run at dt = 1e-3 with the bundled output stride."""
    sim.run(ref_scenario, t_end=0.01)  # compile outside the timed run
    import time
    t0 = time.perf_counter()
    out = sim.run(ref_scenario)
    out.wall_time = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def refinement_runs(ref_scenario):
    """20 s runs keeping every step, at dt = 1e-3 and dt = 5e-4."""
    return {dt: sim.run(ref_scenario, stride=1, t_end=20.0, dt=dt) for dt in (1e-3, 5e-4)}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
