import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heunseries.companion import build_companion, reconstruct_solution
from heunseries.errors import (
    ExtremalBlackHole,
    OutsideDomain,
    PoleAtZero,
    TooFewSamples,
    ZeroFrequency,
)
from heunseries.heun import InitialData, MeshConfig, evaluate
from heunseries.teukolsky import (
    ALLOWED_SPINS,
    BranchChoice,
    TeukolskyInput,
    asymptotics_horizon,
    asymptotics_infinity,
    evaluate_radial,
    exp_integral,
    fit_loglog_slope,
    horizon_kernel_value,
    horizons,
    local_behavior,
    radial_equation_residual,
    reduce,
)

# mpmath.expint at 30 digits
E1_AT_1 = 0.21938393439552027368
E_25_AT_3_1I = 0.00340625572976285833959899301176 - 0.00886335123367402564660888129274j
E_C_AT_C = 0.393121522046576184857694440255 + 0.353113772024146409337443369202j

KERR = TeukolskyInput(1.0, 0.5, -2, 2, 0.5 - 0.1j, 4.0)


def radial_samples(inp, branch, lo=2.0, hi=4.0, n=400, init=(2.5, 1.0, 0.5)):
    zs = np.linspace(lo, hi, n)
    sol = evaluate_radial(inp, branch, InitialData(*init), zs)
    return sol, list(zip(sol.r, sol.R))


def test_input_validation():
    with pytest.raises(ExtremalBlackHole):
        TeukolskyInput(1, 1, 0, 0, 0.3, 1)
    with pytest.raises(ExtremalBlackHole):
        TeukolskyInput(1, -1.2, 0, 0, 0.3, 1)
    with pytest.raises(ZeroFrequency):
        TeukolskyInput(1, 0.3, 0, 0, 0, 1)
    with pytest.raises(ValueError):
        TeukolskyInput(1, 0.3, 3, 0, 0.3, 1)
    with pytest.raises(ValueError):
        TeukolskyInput(1, 0.3, 0, 1.5, 0.3, 1)
    assert set(ALLOWED_SPINS) == {0, 0.5, -0.5, 1, -1, 1.5, -1.5, 2, -2}


def test_schwarzschild_horizons():
    hz = horizons(TeukolskyInput(1, 0, 0, 3, 0.7 - 0.2j, 1))
    assert hz.r_plus == 2 and hz.r_minus == 0
    assert hz.sigma_plus == pytest.approx(2 * (0.7 - 0.2j))
    assert hz.sigma_minus == 0


def test_kerr_horizons():
    hz = horizons(KERR)
    rp, rm = 1 + math.sqrt(0.75), 1 - math.sqrt(0.75)
    assert hz.r_plus == pytest.approx(rp) and hz.r_minus == pytest.approx(rm)
    assert hz.sigma_plus == pytest.approx((2 * KERR.omega * rp - 2 * 0.5) / (rp - rm))


def test_branch_index():
    assert BranchChoice().index == 7
    assert [b.index for b in BranchChoice.all()] == list(range(8))
    assert BranchChoice.from_index(0) == BranchChoice(-1, -1, -1)
    with pytest.raises(ValueError):
        BranchChoice.from_index(8)


def test_conjugate_pairing():
    inp = TeukolskyInput(1, 0.4, 0, 0, 0.6, 2.0)
    plus = reduce(inp, BranchChoice(1, 1, 1))
    minus = reduce(inp, BranchChoice(1, -1, -1))
    assert minus.delta == pytest.approx(plus.delta.conjugate())
    assert minus.gamma == pytest.approx(plus.gamma.conjugate())


def test_coordinate_map():
    red = reduce(KERR)
    hz = red.horizon
    assert red.z_of_r(hz.r_plus) == pytest.approx(1.0, abs=1e-15)
    assert red.z_of_r(hz.r_minus) == 0
    r = np.linspace(hz.r_plus + 1e-6, 100, 500)
    assert np.allclose(red.r_of_z(red.z_of_r(r)), r, rtol=1e-14, atol=0)


def random_input(draw_m, a, s, wr, wi, alm_r, alm_i):
    return TeukolskyInput(1.0, a, s, draw_m, complex(wr, wi), complex(alm_r, alm_i))


inputs = st.builds(random_input, st.integers(-3, 3), st.floats(-0.95, 0.95),
                   st.sampled_from(ALLOWED_SPINS), st.floats(0.05, 1.5), st.floats(-0.5, 0.0),
                   st.floats(-5, 10), st.floats(-2, 2))


@settings(max_examples=20, deadline=None)
@given(inp=inputs, b=st.integers(0, 7))
def test_parameter_identities(inp, b):
    red = reduce(inp, BranchChoice.from_index(b))
    s = inp.s
    assert abs(red.gamma + red.delta - 2 * (1 + s + red.xi + red.eta)) < 1e-12
    assert abs(red.p - (red.rbar_plus - red.rbar_minus) * red.zeta_bar / 2) < 1e-12
    expect_alpha = 1 + s + red.xi + red.eta - 2 * red.zeta_bar + s * 1j * red.omega_bar / red.zeta_bar
    assert abs(red.alpha - expect_alpha) < 1e-12
    # xi and eta solve the indicial equations at the two horizons
    hz = red.horizon
    assert abs(red.xi * (red.xi + s) + hz.sigma_plus * (hz.sigma_plus - 1j * s)) < 1e-11 * (
        1 + abs(hz.sigma_plus) ** 2)
    assert abs(red.eta * (red.eta + s) + hz.sigma_minus * (hz.sigma_minus + 1j * s)) < 1e-11 * (
        1 + abs(hz.sigma_minus) ** 2)


@settings(max_examples=20, deadline=None)
@given(inp=inputs)
def test_local_exponents(inp):
    for br in BranchChoice.all():
        assert local_behavior(inp, br).mismatch() < 1e-12


@pytest.mark.parametrize("b", range(8))
def test_radial_residual_all_branches(b):
    _, samples = radial_samples(KERR, BranchChoice.from_index(b))
    assert radial_equation_residual(KERR, samples) <= 1e-3


def test_residual_trivial_cases():
    hz = horizons(KERR)
    r = np.linspace(hz.r_plus + 0.5, hz.r_plus + 3, 50)
    assert radial_equation_residual(KERR, list(zip(r, np.zeros(50)))) == 0
    assert radial_equation_residual(KERR, list(zip(r, r))) > 1e-2
    with pytest.raises(TooFewSamples):
        radial_equation_residual(KERR, [(3, 1), (4, 1)])


def test_zero_data_radial():
    sol = evaluate_radial(KERR, None, InitialData(2.0, 0, 0), np.linspace(1.5, 3, 5))
    assert np.all(sol.R == 0)


def test_outside_domain():
    with pytest.raises(OutsideDomain):
        evaluate_radial(KERR, None, InitialData(2.0, 1, 1), [0.5, 2])
    with pytest.raises(OutsideDomain):
        evaluate_radial(KERR, None, InitialData(0.5, 1, 1), [2.0])


def test_schwarzschild_matches_companion():
    inp = TeukolskyInput(1, 0, 0, 0, 0.1 - 0.05j, 2.0)
    red = reduce(inp)
    p = red.heun_params()
    init = InitialData(2.0, 1, 1)
    zs = np.linspace(2, 12, 80)
    H = evaluate(p, init, zs).H
    y = reconstruct_solution(build_companion(p), init, zs)
    assert np.abs(H - y).max() <= 1e-6
    sol = evaluate_radial(inp, None, init, zs)
    assert np.allclose(sol.H, H)


def test_asymptotics_infinity_models():
    red = reduce(KERR)
    a = asymptotics_infinity(red)
    assert a["power_exponent"] == -red.alpha
    assert a["exp_rate"] == -4 * red.p
    assert a["exp_power"] == red.alpha - red.gamma - red.delta
    assert a["p_zero_exponent"] == 1 - red.delta - red.gamma
    assert not a["p_is_zero"] and not a["p_zero_applies"]


def test_exponential_behavior_is_a_solution_at_infinity():
    # z^(alpha - gamma - delta) e^(-4pz) balances the equation to O(1/z^2)
    red = reduce(KERR)
    p = red.heun_params()
    a = asymptotics_infinity(red)
    c = p.epsilon, p.gamma, p.delta, p.alpha, p.q

    def resid(z, k, lam):
        # y = z^k e^(lam z): y'/y and y''/y
        d1 = k / z + lam
        d2 = d1 * d1 - k / z ** 2
        eps, g, d, al, q = c
        return d2 + (g / z + d / (z - 1) + eps) * d1 + (al * z - q) / (z * (z - 1))

    for k, lam in ((a["exp_power"], a["exp_rate"]), (a["power_exponent"], 0)):
        r1, r2 = abs(resid(1e3, k, lam)), abs(resid(2e3, k, lam))
        assert r2 < r1 / 3     # decays like 1/z^2
    r_alt = abs(resid(2e3, a["exp_power_alt"], a["exp_rate"]))
    assert r_alt > 1e-4


def test_asymptotics_horizon_flags():
    red = reduce(KERR, BranchChoice.from_index(7))
    h = asymptotics_horizon(red)
    assert red.delta.real < 0 and not h["singular_branch_active"]
    assert h["singular_exponent"] == 1 - red.delta
    lim = h["k1_limit"]
    assert abs(horizon_kernel_value(red, 1 + 1e-8, 2.0) - lim) < 1e-3 * abs(lim)
    red5 = reduce(KERR, BranchChoice.from_index(5))
    assert red5.delta.real > 0
    assert asymptotics_horizon(red5)["singular_branch_active"]
    assert asymptotics_horizon(red5)["k1_limit"] is None


def test_loglog_fit():
    x = np.geomspace(10, 1000, 60)
    assert fit_loglog_slope(x, 3 * x ** -1.7) == pytest.approx(-1.7)
    assert fit_loglog_slope(x, x ** 2 * (1 + 1e-3 * np.sin(x)), tail="lower") == pytest.approx(2, abs=1e-2)


def test_power_branch_slope():
    inp = TeukolskyInput(1.0, 0.5, 0, 1, 0.5 - 0.1j, 2.0)
    red = reduce(inp, BranchChoice.from_index(7))
    zs = np.geomspace(50, 200, 60)
    H = evaluate(red.heun_params(), InitialData(2.0, 1, 1), zs, mesh=MeshConfig(max_width=4)).H
    slope = fit_loglog_slope(zs, H)
    assert abs(slope + red.alpha.real) <= 0.05 * abs(red.alpha.real)


def test_exp_integral_values():
    assert abs(exp_integral(1, 1.0) - E1_AT_1) < 1e-14
    assert abs(exp_integral(2.5, 3 + 1j) - E_25_AT_3_1I) < 1e-14
    assert abs(exp_integral(0.3 + 0.2j, 0.7 - 0.4j) - E_C_AT_C) < 1e-13
    assert exp_integral(0, 2.0) == pytest.approx(math.exp(-2) / 2, rel=1e-15)
    assert exp_integral(-1, 2.0) == pytest.approx(math.exp(-2) * (1 + 2) / 4, rel=1e-15)
    for n in (1, 2, 3.5):
        x = 50.0
        assert abs(exp_integral(n, x) * x * math.exp(x) - 1) < 0.02 * n + 0.02
    with pytest.raises(PoleAtZero):
        exp_integral(1, 0)


def test_exp_integral_recurrence():
    # n E_{n+1}(x) = e^{-x} - x E_n(x)
    for n, x in ((1, 0.7), (2.5, 4.0), (0.4 + 0.3j, 1.2 - 0.5j), (3, 0.1)):
        lhs = n * exp_integral(n + 1, x)
        rhs = cmath.exp(-x) - x * exp_integral(n, x)
        assert abs(lhs - rhs) < 1e-13 * max(1, abs(rhs))


def test_exp_integral_quadrature_e1():
    from heunseries.quadrature import Interval, integrate_adaptive
    # E_1(1) = int_0^1 e^{-1/u} / u du after t = 1/u
    v, _ = integrate_adaptive(lambda u: np.exp(-1 / u) / u + 0j, Interval(1e-3, 1))
    assert abs(v - exp_integral(1, 1.0)) < 1e-12
