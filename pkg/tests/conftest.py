import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from mslab import build_grid  # noqa: E402


@pytest.fixture(scope="session")
def circle64():
    return build_grid(1, 64)


@pytest.fixture(scope="session")
def circle256():
    return build_grid(1, 256)


@pytest.fixture(scope="session")
def torus64():
    return build_grid(2, 64)


ACCEPTANCE = {}


def record(number, ok, detail):
    """Store one acceptance verdict; printed in the terminal summary."""
    ACCEPTANCE[number] = (bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
