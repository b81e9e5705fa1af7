import numpy as np
import pytest

from idla.walk import RandomSource

# criterion number -> summary line, filled by test_acceptance.py
ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def source():
    return RandomSource(20240611, 1)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
