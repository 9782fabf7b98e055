import numpy as np
import pytest

from bvc.experiments import random_field
from bvc.grid import GridSpec


@pytest.fixture
def grid1():
    return GridSpec(1, 64, 16.0)


@pytest.fixture
def smooth_field():
    def make(grid, seed=0, kmax=4):
        return random_field(grid, seed, 0, kmax)

    return make



# one pass/fail line per acceptance criterion, printed after the run
_CRITERIA = {}


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py::test_criterion_" in report.nodeid:
        name = report.nodeid.split("::")[-1].removeprefix("test_criterion_")
        _CRITERIA[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda s: int(s.split("_")[0])):
        num, _, label = name.partition("_")
        status = "PASS" if _CRITERIA[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {num:>2} {label.replace('_', ' ')}: {status}")
