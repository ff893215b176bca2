import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heunseries.errors import GridMismatch, NonFinite
from heunseries.heun import HeunParams, kernel_K2
from heunseries.quadrature import Interval, build_grid
from heunseries.volterra import (
    DiscreteKernel,
    classical_tail_bound,
    compose,
    discrete_residual,
    neumann_series,
    resolve_second_kind,
    short_form_bound,
    sup_norm,
)


def grid(lo=0.0, hi=1.0, n=8, k=8):
    return build_grid(Interval(lo, hi), n, f"gauss_panel({k})")


def const(g, c):
    return DiscreteKernel.from_function(g, lambda z, s: c + 0 * z * s)


def test_compose_ones():
    g = grid()
    k = compose(const(g, 1), const(g, 1))
    x = g.nodes
    assert abs(k.values[-1, 0] - 1) < 1e-13
    assert np.allclose(np.diag(k.values), 0)
    assert np.allclose(k.values, x[:, None] - x[None, :], atol=1e-13)


def test_iterated_kernel_identity():
    g = grid(0, 2)
    one = const(g, 1)
    term = one
    x = g.nodes
    for n in range(2, 7):
        term = compose(one, term)
        expect = (x[:, None] - x[None, :]) ** (n - 1) / math.factorial(n - 1)
        assert np.allclose(term.values, expect, atol=1e-12)


def test_compose_z_times_zeta():
    g = grid(0, 2)
    f = DiscreteKernel.from_function(g, lambda z, s: z + 0 * s)
    h = DiscreteKernel.from_function(g, lambda z, s: z + 0 * s)
    assert abs(compose(f, h).values[-1, 0] - 4) < 1e-12


def test_compose_grid_mismatch():
    with pytest.raises(GridMismatch):
        compose(const(grid(), 1), const(grid(0, 2), 1))


def test_kernel_validation():
    g = grid()
    with pytest.raises(GridMismatch):
        DiscreteKernel(g, np.zeros((3, 3)))
    bad = np.zeros((len(g), len(g)))
    bad[1, 0] = np.nan
    with pytest.raises(NonFinite):
        DiscreteKernel(g, bad)
    k = const(g, 1)
    with pytest.raises(ValueError):
        k.values[0, 0] = 2


def test_neumann_ones_gives_e():
    g = grid()
    res = neumann_series(const(g, 1), 20)
    # G(z, 0) = e^z for K = 1
    assert abs(res.order(20)[-1] - math.e) < 1e-10
    assert res.kappa == 1.0
    assert res.bound[-1] < 1e-15


def test_neumann_zero():
    res = neumann_series(const(grid(), 0), 5)
    assert np.all(res.partial_sums == 0)
    assert np.all(res.bound == 0)


def test_neumann_full_matrix_matches_column():
    g = grid(0, 1, 4, 6)
    k = DiscreteKernel.from_function(g, lambda z, s: np.cos(z - 2 * s) + 0.3j * z)
    full = neumann_series(k, 6, column=None)
    col = neumann_series(k, 6, column=0)
    assert np.allclose(full.order(6)[:, 0], col.order(6), atol=1e-13)
    # increments are the iterated kernels
    d = full.partial_sums[2] - full.partial_sums[1]
    k3 = compose(k, compose(k, k))
    assert np.allclose(d, k3.values, atol=1e-13)


def test_neumann_tol_stops_early():
    res = neumann_series(const(grid(), 1), 200, tol=1e-12)
    assert res.max_order < 30
    assert res.increment_sup[-1] < 1e-12


def test_neumann_bad_order():
    with pytest.raises(ValueError):
        neumann_series(const(grid(), 1), 0)


@pytest.mark.parametrize("lam", [1.0, -2.5, 0.7 + 1.3j])
def test_resolvent_constant(lam):
    g = grid(0, 1)
    G = resolve_second_kind(const(g, lam))
    assert np.allclose(G, lam * np.exp(lam * g.nodes), rtol=1e-12, atol=1e-13)


def test_resolvent_interior_anchor():
    g = grid(-1, 1, 8, 8)
    c = g.index_of(0.0)
    G = resolve_second_kind(const(g, 1), column=c)
    assert np.allclose(G, np.exp(g.nodes), rtol=1e-12)


def test_neumann_resolvent_agreement():
    g = grid()
    G = resolve_second_kind(const(g, 1))
    N = neumann_series(const(g, 1), 20).order(20)
    assert np.abs(G - N).max() <= 1e-10


def test_resolvent_identity_full():
    g = grid(0, 1.5, 6, 8)
    k = DiscreteKernel.from_function(g, lambda z, s: np.exp(-z * s) + 1j * np.sin(z + s))
    G = resolve_second_kind(k)
    assert discrete_residual(k, G) < 1e-12
    # G - K - K*G, with K*G from compose against G embedded as a column kernel
    Gk = DiscreteKernel(g, np.tile(G[:, None], (1, len(g))))
    r = G - k.values[:, 0] - compose(k, Gk).values[:, 0]
    assert np.abs(r).max() < 1e-12 * np.abs(G).max()


def test_sup_norm():
    g = grid()
    assert sup_norm(const(g, 1)) == 1.0
    assert sup_norm(const(g, 0)) == 0.0
    k = DiscreteKernel.from_function(g, lambda z, s: z - s)
    assert sup_norm(k) == pytest.approx(1.0)


def test_sup_norm_grows_towards_singularity():
    p = HeunParams("confluent", gamma=3, delta=2 / 3, epsilon=4, alpha=5, q=1)
    vals = []
    for hi in (-1.0, -0.5, -0.1):
        g = grid(-5, hi, 16, 8)
        vals.append(sup_norm(kernel_K2(p, g)))
    assert np.all(np.isfinite(vals))
    assert vals[0] < vals[1] < vals[2]


def test_bounds():
    assert classical_tail_bound(0, 1, 3) == 0
    assert classical_tail_bound(2, 0, 0) == 2
    assert classical_tail_bound(1.5, 2.0, 4) == pytest.approx(1.5 ** 5 * 2 ** 4 * math.exp(3) / 24)
    assert short_form_bound(2.0, 3) == pytest.approx(8 / 6)


@pytest.mark.parametrize("lam", [1.0, 2.0, -1.5])
def test_increment_envelope(lam):
    # |K^{*m}| <= kappa^m L^{m-1}/(m-1)!
    g = grid(0, 2)
    res = neumann_series(const(g, lam), 12)
    L = g.span
    for m in range(1, 13):
        env = abs(lam) ** m * L ** (m - 1) / math.factorial(m - 1)
        assert res.increment_sup[m - 1] <= env * (1 + 1e-10)


def _smooth_kernel(a, b):
    return lambda z, s: a * np.cos(z - s) + b * z * s


@settings(max_examples=15, deadline=None)
@given(a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(-2, 2))
def test_associativity(a, b, c):
    g = grid(0, 1, 4, 8)
    f = DiscreteKernel.from_function(g, _smooth_kernel(a, b))
    h = DiscreteKernel.from_function(g, _smooth_kernel(b, c))
    k = DiscreteKernel.from_function(g, _smooth_kernel(c, a))
    left = compose(f, compose(h, k)).values
    right = compose(compose(f, h), k).values
    scale = max(np.abs(left).max(), 1e-300)
    assert np.abs(left - right).max() <= 1e-10 * scale + 1e-14


@settings(max_examples=15, deadline=None)
@given(a=st.floats(-2, 2), b=st.floats(-2, 2))
def test_classical_bound_dominates(a, b):
    g = grid(0, 1.5, 6, 8)
    k = DiscreteKernel.from_function(g, _smooth_kernel(a, b))
    G = resolve_second_kind(k)
    res = neumann_series(k, 10)
    for m in range(1, 11):
        tail = np.abs(G - res.order(m)).max()
        assert tail <= res.bound[m - 1] * (1 + 1e-8) + 1e-12
