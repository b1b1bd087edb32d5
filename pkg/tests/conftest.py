import numpy as np
import pytest

from ibqtree import GridMap


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def grid(rows):
    return GridMap(np.asarray(rows, dtype=float))


ACCEPTANCE_LINES = {}


def record_criterion(number, title, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    line = f"[{status}] criterion {number}: {title}"
    if detail:
        line += f" ({detail})"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
