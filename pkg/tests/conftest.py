import numpy as np
import pytest

from sparselb.geometry import build_bifurcation, build_box, build_pipe


@pytest.fixture(scope="session")
def pipe_small():
    return build_pipe(4, 20)


@pytest.fixture(scope="session")
def bifurcation():
    return build_bifurcation()


@pytest.fixture(scope="session")
def box5():
    return build_box(5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
