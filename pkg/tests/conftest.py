import numpy as np
import pytest
from hypothesis import settings

from fcast_eval.core import TimeGrid
from fcast_eval.simulator import SimConfig, simulate_arrays

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid():
    return TimeGrid.uniform()


@pytest.fixture(scope="session")
def season():
    """500 simulated games with every noise forecaster attached."""
    return simulate_arrays(SimConfig(500, seed=123, forecasters=("Ora", "OraBM1", "OraBM2", "OraOU1")))


@pytest.fixture(scope="session")
def games(season):
    return season.games()


@pytest.fixture
def rng():
    return np.random.default_rng(20181108)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
