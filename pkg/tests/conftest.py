import warnings

import pytest

from cmlab.spectral_grid import GridSpec


@pytest.fixture(scope="session")
def line():
    return GridSpec(4096, 256.0, "line")


@pytest.fixture(scope="session")
def torus():
    return GridSpec(1024, 64.0, "torus")


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


# one line per acceptance criterion, shown at the end of every run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
