import math

import numpy as np
import pytest

from batchode.problems import (
    exp_decay_problem,
    harmonic_problem,
    heat_problem,
    pleiades_initial_state,
    pleiades_problem,
)


@pytest.fixture(scope="session")
def decay():
    return exp_decay_problem()


@pytest.fixture(scope="session")
def harmonic():
    return harmonic_problem()


@pytest.fixture(scope="session")
def pleiades():
    return pleiades_problem()


@pytest.fixture(scope="session")
def z0():
    return pleiades_initial_state()


@pytest.fixture(scope="session")
def heat64():
    # heat_problem builds a new closure (and a new compile) per call
    return heat_problem(64)


def loglog_slope(hs, errs):
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


E_INV = math.exp(-1.0)


# lines collected by test_acceptance.py, printed after the run
ACCEPTANCE_LINES = {}


def record(criterion, passed, detail):
    line = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
