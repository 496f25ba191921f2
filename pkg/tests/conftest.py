import sys

import pytest

from qrs.testbeds import make_poisson_pair, make_random_categorical, make_two_point, poisson_space


@pytest.fixture
def two_point():
    return make_two_point()


@pytest.fixture
def poisson():
    P, q = make_poisson_pair(11, 10)
    return P, q, poisson_space(11)


@pytest.fixture
def cat100():
    return make_random_categorical(2, 10, seed=5)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
