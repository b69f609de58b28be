import numpy as np
import pytest

from gdppanel.dpcore import make_rng

# lines recorded by test_acceptance, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


class ZeroRng:
    """Stand-in generator whose normal draws are all zero; counts the draws."""

    def __init__(self):
        self.draws = 0

    def standard_normal(self, size=None):
        if size is None:
            self.draws += 1
            return 0.0
        out = np.zeros(size)
        self.draws += out.size
        return out


@pytest.fixture
def zero_rng():
    return ZeroRng()


@pytest.fixture
def rng():
    return make_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
