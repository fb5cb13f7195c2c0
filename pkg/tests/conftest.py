import numpy as np
import pytest

from threelp import ModelParams, build_continuous_dynamics, solve_periodic
from threelp.stabilizer import Controller

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def dyn(params):
    return build_continuous_dynamics(params)


@pytest.fixture(scope="session")
def gait0(params):
    return solve_periodic(params, (0.0, 0.0))


@pytest.fixture(scope="session")
def ctrl(params):
    return Controller.synthesize(params)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
