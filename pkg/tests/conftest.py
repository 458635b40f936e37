import numpy as np
import pytest

from lapmo.motion import Skeleton


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def chain2():
    return Skeleton(parents=(None, 0))


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
