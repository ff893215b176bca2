import math

import numpy as np
import pytest
from conftest import EXAMPLES, reference

from heunseries.errors import MaxSteps, StepUnderflow, TooFewSamples
from heunseries.heun import coefficients, evaluate
from heunseries.oracle import OdeProblem, SolverConfig, residual, solve, solve_system

# general example: oracle value y(26), frozen at rel_tol 1e-13
Y26_GENERAL = 1.1784661997727086


def harmonic(y0=1.0, dy0=0.0):
    return OdeProblem(lambda z: 0 * z, lambda z: -1 + 0 * z, 0.0, y0, dy0)


def test_cos():
    y = solve(harmonic(), [math.pi])
    assert abs(y[0, 0] + 1) < 1e-9
    assert abs(y[0, 1]) < 1e-9


def test_exp_minus_one():
    prob = OdeProblem(lambda z: 1 + 0 * z, lambda z: 0 * z, 0.0, 0.0, 1.0)
    zs = np.linspace(-2, 3, 11)
    y = solve(prob, zs)
    assert np.allclose(y[:, 0], np.expm1(zs), rtol=1e-10, atol=1e-12)


def test_frozen_general_endpoint():
    p, init, _ = EXAMPLES["general"]
    c = coefficients(p)
    y = solve(OdeProblem(c.B1, c.B2, init.z0, init.H0, init.dH0), [26.0],
              SolverConfig(rel_tol=1e-13, abs_tol=1e-16))
    assert abs(y[0, 0] - Y26_GENERAL) < 1e-11


def test_step_halving_order():
    errs = []
    for h in (0.2, 0.1, 0.05):
        y = solve(harmonic(), [4.0], SolverConfig(fixed_step=h))
        errs.append(abs(y[0, 0] - math.cos(4.0)))
    p1 = math.log2(errs[0] / errs[1])
    p2 = math.log2(errs[1] / errs[2])
    assert 4.5 < p1 < 6.0 and 4.5 < p2 < 6.0


@pytest.mark.parametrize("name,z1", [("general", 12.0), ("confluent", -8.0)])
def test_backward_forward(name, z1):
    # well-conditioned legs only: backward integration amplifies the
    # Wronskian by exp(-int B1), which is huge for e.g. the triconfluent case
    p, init, _ = EXAMPLES[name]
    c = coefficients(p)
    tol = 1e-10
    cfg = SolverConfig(rel_tol=tol, abs_tol=1e-12)
    fwd = solve(OdeProblem(c.B1, c.B2, init.z0, 1.0, 0.5), [z1], cfg)[0]
    back = solve(OdeProblem(c.B1, c.B2, z1, fwd[0], fwd[1]), [init.z0], cfg)[0]
    assert abs(back[0] - 1.0) <= 10 * tol
    assert abs(back[1] - 0.5) <= 10 * tol


def test_backward_forward_harmonic():
    cfg = SolverConfig(rel_tol=1e-11, abs_tol=1e-13)
    fwd = solve(harmonic(0.3, -0.7), [7.0], cfg)[0]
    back = solve(OdeProblem(lambda z: 0 * z, lambda z: -1 + 0 * z, 7.0, fwd[0], fwd[1]),
                 [0.0], cfg)[0]
    assert abs(back[0] - 0.3) <= 10 * 1e-11 and abs(back[1] + 0.7) <= 10 * 1e-11


def test_both_sides_and_order_independent():
    zs = np.array([1.0, -1.0, 0.0, 2.5, -3.0])
    y = solve(harmonic(), zs)
    assert np.allclose(y[:, 0], np.cos(zs), atol=1e-10)
    assert np.allclose(y[:, 1], -np.sin(zs), atol=1e-10)
    assert y[2, 0] == 1.0


def test_complex_system():
    M = lambda z: np.array([[0, 1], [-(1 + 1j), 0]])
    sol = solve_system(M, 0.0, np.eye(2), [1.0])
    w = np.sqrt(1 + 1j)
    assert abs(sol.y[0, 0, 0] - np.cos(w)) < 1e-10
    assert abs(sol.y[0, 0, 1] - np.sin(w) / w) < 1e-10


def test_step_underflow_reports_reached():
    prob = OdeProblem(lambda z: 0 * z, lambda z: 1 / (1 - z) ** 3, 0.0, 1.0, 0.0)
    with pytest.raises(StepUnderflow) as exc:
        solve(prob, [2.0])
    assert 0.9 < exc.value.reached < 1.0


def test_max_steps():
    with pytest.raises(MaxSteps):
        solve(harmonic(), [1000.0], SolverConfig(max_steps=10))


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(rel_tol=0)
    with pytest.raises(ValueError):
        SolverConfig(max_steps=5)


def test_residual_of_solution():
    zs = np.linspace(0, 6, 200)
    y = solve(harmonic(), zs)[:, 0]
    assert residual(harmonic(), list(zip(zs, y))) <= 1e-4


def test_residual_detects_nonsolution():
    zs = np.linspace(0, 6, 50)
    assert residual(harmonic(), list(zip(zs, np.full(zs.size, 2.0)))) > 0.5


def test_residual_too_few():
    with pytest.raises(TooFewSamples):
        residual(harmonic(), [(0, 1), (1, 1)])


def test_residual_doubly_confluent_evaluation():
    p, init, (lo, hi) = EXAMPLES["doubly_confluent"]
    c = coefficients(p)
    zs = np.linspace(lo, hi, 800)
    H = evaluate(p, init, zs).H
    prob = OdeProblem(c.B1, c.B2, init.z0, init.H0, init.dH0)
    assert residual(prob, list(zip(zs, H))) <= 1e-4


def test_reference_cache_is_readonly():
    _, y = reference("general", n=5)
    assert not y.flags.writeable
