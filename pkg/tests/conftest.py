import functools

import numpy as np
import pytest

from heunseries.heun import HeunParams, InitialData, coefficients
from heunseries.oracle import OdeProblem, SolverConfig, solve

# name -> (params, initial data, evaluation range)
EXAMPLES = {
    "general": (
        HeunParams("general", gamma=2, delta=7, epsilon=-1, t=4, alpha_beta=1.5, q=1),
        InitialData(6, 1, 1),
        (6.0, 26.0),
    ),
    "confluent": (
        HeunParams("confluent", gamma=3, delta=2 / 3, epsilon=4, alpha=5, q=1),
        InitialData(-5, 0, 1),
        (-10.0, -1.0),
    ),
    "biconfluent": (
        HeunParams("biconfluent", gamma=0.1, delta=1, epsilon=6, alpha=-1, q=2),
        InitialData(2 / 3, 2, -4),
        (0.2, 10.0),
    ),
    "doubly_confluent": (
        HeunParams("doubly_confluent", delta=-2, gamma=1, alpha=10, q=-1),
        InitialData(1, 0.5, 0.5),
        (1.0, 9.0),
    ),
    "triconfluent": (
        HeunParams("triconfluent", gamma=2, delta=-1, epsilon=7, alpha=1, q=2 + 1j),
        InitialData(-5, 2, 2),
        (-5.0, 7.0),
    ),
}

REF_CFG = SolverConfig(rel_tol=1e-13, abs_tol=1e-16)


@functools.cache
def _reference(name, lo, hi, n):
    p, init, _ = EXAMPLES[name]
    c = coefficients(p)
    zs = np.linspace(lo, hi, n)
    y = solve(OdeProblem(c.B1, c.B2, init.z0, init.H0, init.dH0), zs, REF_CFG)
    y.setflags(write=False)
    return zs, y[:, 0]


def reference(name, n=200, lo=None, hi=None):
    """Oracle values of an example on ``n`` equispaced points."""
    _, _, (a, b) = EXAMPLES[name]
    return _reference(name, a if lo is None else lo, b if hi is None else hi, n)


def max_rel(approx, ref):
    return float(np.max(np.abs(np.asarray(approx) - ref)) / np.max(np.abs(ref)))


@pytest.fixture(params=list(EXAMPLES))
def example(request):
    return request.param


# acceptance lines gathered by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
