"""Real-line quadrature for complex integrands.

Two tools live here:

* an adaptive Gauss-Kronrod (7/15) integrator, scalar or batched over many
  independent intervals, used for the inner integrals of the kernels;
* composite panel grids carrying a dense cumulative-integration matrix, used
  to discretize Volterra compositions.

A grid is a sequence of panels sharing their endpoints.  On each panel the
samples are interpolated by a polynomial through the panel's nodes and the
interpolant is integrated exactly, so ``W[i] @ f`` approximates the integral
from the first node to ``nodes[i]`` and ``integration_row(z) @ f`` does the
same for an arbitrary abscissa.
"""

from __future__ import annotations

import heapq
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import legendre

from .errors import BadRule, LengthMismatch, NonConvergence, NonFinite

__all__ = [
    "Grid",
    "Interval",
    "QuadConfig",
    "build_grid",
    "cumulative_integral",
    "grid_from_breaks",
    "integrate_adaptive",
    "integrate_batch",
]

# Gauss-Kronrod 7/15 abscissae and weights (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# full 15-point abscissae on [-1, 1] and the matching weight vectors
_GK_X = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_GK_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GK_WG = np.zeros(15)
_GK_WG[1:7:2] = _WG[:3]
_GK_WG[7] = _WG[3]
_GK_WG[9:14:2] = _WG[2::-1]

MAX_PANEL_ORDER = 24


@dataclass(frozen=True)
class Interval:
    """Open real interval ``]lo, hi[``.

    Infinite endpoints are accepted so that admissible intervals can be
    represented; grid construction requires finite ones.
    """

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if np.isnan(lo) or np.isnan(hi) or not lo < hi:
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.lo) and np.isfinite(self.hi))

    def contains(self, z, closed=False) -> bool:
        z = np.asarray(z, dtype=float)
        if closed:
            return bool(np.all((z >= self.lo) & (z <= self.hi)))
        return bool(np.all((z > self.lo) & (z < self.hi)))


@dataclass(frozen=True)
class QuadConfig:
    abs_tol: float = 1e-14
    rel_tol: float = 1e-12
    max_depth: int = 40

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if int(self.max_depth) < 1:
            raise ValueError("max_depth must be at least 1")


def _gk15(f, a, b, *extra):
    """Apply the 7/15 pair on rows of intervals; returns (K15, |K15-G7|)."""
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    x = c[:, None] + h[:, None] * _GK_X[None, :]
    fx = np.asarray(f(x, *extra), dtype=complex)
    if fx.shape != x.shape:
        fx = np.broadcast_to(fx, x.shape)
    if not np.all(np.isfinite(fx)):
        raise NonFinite("integrand returned a non-finite value")
    k15 = (fx @ _GK_WK) * h
    g7 = (fx @ _GK_WG) * h
    return k15, np.abs(k15 - g7)


def integrate_batch(f: Callable, lo, hi, cfg: QuadConfig | None = None):
    """Integrate many independent integrals at once.

    Parameters
    ----------
    f : callable
        ``f(x, idx)`` with ``x`` of shape ``(n, 15)`` and ``idx`` of shape
        ``(n,)`` giving, for each row, the index of the integral it belongs
        to.  Must return complex values of the shape of ``x``.
    lo, hi : array_like
        Integration limits, one pair per integral.  ``hi < lo`` is allowed
        and yields the negated integral.
    cfg : QuadConfig, optional

    Returns
    -------
    values, errors : ndarray
        Complex integrals and their error estimates.
    """
    cfg = cfg or QuadConfig()
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    n = lo.size
    values = np.zeros(n, dtype=complex)
    errors = np.zeros(n)
    if n == 0:
        return values, errors

    owner = np.arange(n)
    a, b = lo.copy(), hi.copy()
    depth = np.zeros(n, dtype=int)
    # accepted leaf contributions accumulate here
    acc_val = np.zeros(n, dtype=complex)
    acc_err = np.zeros(n)
    full_len = np.abs(hi - lo)
    full_len[full_len == 0] = 1.0

    while owner.size:
        v, e = _gk15(lambda x, idx: f(x, idx), a, b, owner)
        tot_val = acc_val.copy()
        tot_err = acc_err.copy()
        np.add.at(tot_val, owner, v)
        np.add.at(tot_err, owner, e)
        tol = np.maximum(cfg.abs_tol, cfg.rel_tol * np.abs(tot_val))
        done = tot_err <= tol
        # leaves of unconverged integrals are split when their error exceeds
        # their length-proportional share of the tolerance
        share = tol[owner] * np.abs(b - a) / full_len[owner]
        split = (~done[owner]) & (e > share)
        keep = ~split
        np.add.at(acc_val, owner[keep], v[keep])
        np.add.at(acc_err, owner[keep], e[keep])
        if not np.any(split):
            break
        if np.any(depth[split] >= cfg.max_depth):
            bad = owner[split & (depth >= cfg.max_depth)][0]
            raise NonConvergence(
                f"adaptive quadrature hit max_depth={cfg.max_depth} on "
                f"[{lo[bad]}, {hi[bad]}] (error {tot_err[bad]:.3e} > {tol[bad]:.3e})"
            )
        a_s, b_s, o_s, d_s = a[split], b[split], owner[split], depth[split] + 1
        m_s = 0.5 * (a_s + b_s)
        a = np.concatenate([a_s, m_s])
        b = np.concatenate([m_s, b_s])
        owner = np.concatenate([o_s, o_s])
        depth = np.concatenate([d_s, d_s])
    values[:] = acc_val
    errors[:] = acc_err
    return values, errors


def integrate_adaptive(f: Callable, iv: Interval, cfg: QuadConfig | None = None):
    """Adaptive Gauss-Kronrod integral of a complex function over ``iv``.

    Globally adaptive: the sub-interval with the largest error estimate is
    bisected until the summed estimate drops below
    ``max(abs_tol, rel_tol * |value|)``.

    Returns
    -------
    value : complex
    error : float
    """
    cfg = cfg or QuadConfig()
    if not iv.finite:
        raise ValueError("integrate_adaptive needs a finite interval")

    def g(x, _idx):
        return f(x)

    def piece(a, b):
        v, e = _gk15(g, np.array([a]), np.array([b]), None)
        return complex(v[0]), float(e[0])

    v0, e0 = piece(iv.lo, iv.hi)
    heap = [(-e0, 0, iv.lo, iv.hi, v0, e0)]
    total_v, total_e = v0, e0
    counter = 1
    while total_e > max(cfg.abs_tol, cfg.rel_tol * abs(total_v)):
        _, depth, a, b, v, e = heapq.heappop(heap)
        if depth >= cfg.max_depth:
            raise NonConvergence(
                f"adaptive quadrature hit max_depth={cfg.max_depth} "
                f"(error {total_e:.3e})"
            )
        m = 0.5 * (a + b)
        v1, e1 = piece(a, m)
        v2, e2 = piece(m, b)
        total_v += v1 + v2 - v
        total_e += e1 + e2 - e
        heapq.heappush(heap, (-e1, depth + 1, a, m, v1, e1))
        heapq.heappush(heap, (-e2, depth + 1, m, b, v2, e2))
        counter += 1
    # re-sum the leaves so the result does not carry the running-update drift
    total_v = sum(item[4] for item in sorted(heap, key=lambda t: t[2]))
    total_e = sum(item[5] for item in heap)
    return complex(total_v), float(total_e)


# ----------------------------------------------------------------------------
# composite grids


def _panel_local(rule: str, k: int):
    """Reference nodes on [-1, 1] and the matrix S with
    ``S[i, j] = int_{-1}^{t_i} ell_j``; also returns the Legendre
    coefficient matrix of the Lagrange basis for off-node rows."""
    if rule == "trapezoid":
        t = np.array([-1.0, 1.0])
    else:
        g, _ = legendre.leggauss(k)
        t = np.concatenate(([-1.0], g, [1.0]))
    m = t.size
    coef = np.linalg.inv(legendre.legvander(t, m - 1))
    S = _int_legendre(t, m) @ coef
    S[0] = 0.0
    if rule == "gauss":
        _, w = legendre.leggauss(k)
        S[-1] = np.concatenate(([0.0], w, [0.0]))
    else:
        S[-1] = [1.0, 1.0]
    return t, S, coef


def _int_legendre(tau, m):
    """Columns ``int_{-1}^{tau} P_n`` for ``n < m``."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    P = legendre.legvander(tau, m)
    out = np.empty((tau.size, m))
    out[:, 0] = tau + 1.0
    for n in range(1, m):
        out[:, n] = (P[:, n + 1] - P[:, n - 1]) / (2 * n + 1)
    return out


@dataclass(frozen=True, eq=False)
class Grid:
    """Composite panel grid.

    Attributes
    ----------
    nodes : ndarray
        Strictly increasing abscissae; panel endpoints are nodes.
    weights : ndarray
        Quadrature weights for the full span.  With the Gauss rule the panel
        endpoints carry zero weight (they are interpolation-only nodes).
    breaks : ndarray
        Panel endpoints.
    rule : str
        ``"trapezoid"`` or ``"gauss"``.
    order : int
        Gauss points per panel (1 for trapezoid).
    """

    nodes: np.ndarray
    weights: np.ndarray
    breaks: np.ndarray
    rule: str
    order: int
    _local: tuple = field(repr=False, default=())

    def __len__(self):
        return self.nodes.size

    @property
    def lo(self) -> float:
        return float(self.nodes[0])

    @property
    def hi(self) -> float:
        return float(self.nodes[-1])

    @property
    def span(self) -> float:
        return self.hi - self.lo

    @property
    def per_panel(self) -> int:
        """Nodes per panel including both endpoints."""
        return self._local[0].size

    def panel_nodes(self, p: int) -> np.ndarray:
        m = self.per_panel
        return np.arange(p * (m - 1), p * (m - 1) + m)

    @property
    def n_panels(self) -> int:
        return self.breaks.size - 1

    def panel_of(self, z) -> np.ndarray:
        """Index of the panel containing each abscissa (closed on the left)."""
        z = np.asarray(z, dtype=float)
        p = np.searchsorted(self.breaks, z, side="right") - 1
        return np.clip(p, 0, self.n_panels - 1)

    @cached_property
    def _prefix(self) -> np.ndarray:
        # row p: weights of all full panels before panel p
        pre = np.zeros((self.n_panels, self.nodes.size))
        acc = np.zeros(self.nodes.size)
        _, S, _ = self._local
        for p in range(self.n_panels):
            pre[p] = acc
            idx = self.panel_nodes(p)
            h = 0.5 * (self.breaks[p + 1] - self.breaks[p])
            acc = acc.copy()
            acc[idx] += h * S[-1]
        return pre

    @cached_property
    def cumulative(self) -> np.ndarray:
        """Dense matrix ``W`` with ``W[i] @ f ~ int_{x_0}^{x_i} f``."""
        N = self.nodes.size
        W = np.zeros((N, N))
        _, S, _ = self._local
        pre = self._prefix
        for p in range(self.n_panels):
            idx = self.panel_nodes(p)
            h = 0.5 * (self.breaks[p + 1] - self.breaks[p])
            rows = idx[1:]
            W[rows] = pre[p]
            W[np.ix_(rows, idx)] += h * S[1:]
        W.setflags(write=False)
        return W

    def integration_rows(self, zs) -> np.ndarray:
        """Rows ``w(z)`` with ``w(z) @ f ~ int_{x_0}^{z} f`` for any ``z`` in
        the grid span.  Rows at grid nodes coincide with ``cumulative``."""
        zs = np.atleast_1d(np.asarray(zs, dtype=float))
        if np.any(zs < self.lo - 1e-12 * (1 + abs(self.lo))) or np.any(
            zs > self.hi + 1e-12 * (1 + abs(self.hi))
        ):
            raise ValueError("abscissa outside the grid span")
        out = np.zeros((zs.size, self.nodes.size))
        pos = np.searchsorted(self.nodes, zs)
        W = self.cumulative
        t, _, coef = self._local
        for r, (z, j) in enumerate(zip(zs, pos)):
            if j < self.nodes.size and self.nodes[j] == z:
                out[r] = W[j]
                continue
            p = int(self.panel_of(z))
            a, b = self.breaks[p], self.breaks[p + 1]
            h = 0.5 * (b - a)
            tau = (z - a) / h - 1.0
            row = (_int_legendre(tau, t.size) @ coef)[0]
            out[r] = self._prefix[p]
            out[r, self.panel_nodes(p)] += h * row
        return out

    def index_of(self, z: float) -> int:
        """Index of the node equal to ``z`` (raises if ``z`` is not a node)."""
        j = int(np.searchsorted(self.nodes, z))
        if j >= self.nodes.size or self.nodes[j] != z:
            raise ValueError(f"{z} is not a grid node")
        return j


def _rule_spec(rule, order):
    if isinstance(rule, str) and rule.startswith("gauss_panel(") and rule.endswith(")"):
        try:
            order = int(rule[len("gauss_panel("):-1])
        except ValueError as exc:
            raise BadRule(f"cannot parse rule {rule!r}") from exc
        rule = "gauss"
    if rule in ("gauss", "gauss_panel"):
        if order is None:
            order = 4
        if int(order) != order or not 1 <= order <= MAX_PANEL_ORDER:
            raise BadRule(f"unsupported Gauss panel order {order!r} (1..{MAX_PANEL_ORDER})")
        return "gauss", int(order)
    if rule == "trapezoid":
        return "trapezoid", 1
    raise BadRule(f"unknown rule {rule!r}")


def grid_from_breaks(breaks, rule: str = "gauss", order: int | None = None) -> Grid:
    """Grid on explicit panel endpoints (strictly increasing, at least 2)."""
    rule, order = _rule_spec(rule, order)
    breaks = np.asarray(breaks, dtype=float)
    if breaks.ndim != 1 or breaks.size < 2 or np.any(np.diff(breaks) <= 0):
        raise ValueError("breaks must be a strictly increasing sequence of length >= 2")
    if not np.all(np.isfinite(breaks)):
        raise ValueError("grid endpoints must be finite")
    t, S, coef = _panel_local(rule, order)
    m = t.size
    n_pan = breaks.size - 1
    nodes = np.empty(n_pan * (m - 1) + 1)
    weights = np.zeros_like(nodes)
    nodes[0] = breaks[0]
    for p in range(n_pan):
        a, b = breaks[p], breaks[p + 1]
        h = 0.5 * (b - a)
        sl = slice(p * (m - 1), p * (m - 1) + m)
        local = a + h * (t + 1.0)
        local[-1] = b
        nodes[p * (m - 1) + 1: p * (m - 1) + m] = local[1:]
        weights[sl] += h * S[-1]
    return Grid(nodes=nodes, weights=weights, breaks=breaks.copy(), rule=rule,
                order=order, _local=(t, S, coef))


def build_grid(iv: Interval, n_panels: int, rule: str = "gauss", order: int | None = None) -> Grid:
    """Uniform composite grid on ``iv``.

    ``rule`` is ``"trapezoid"``, ``"gauss"`` (with ``order`` points per
    panel, default 4) or the spelled-out form ``"gauss_panel(k)"``.
    """
    rule_, order_ = _rule_spec(rule, order)
    if int(n_panels) != n_panels or n_panels < 2:
        raise ValueError("n_panels must be an integer >= 2")
    if not iv.finite:
        raise ValueError("grid endpoints must be finite")
    breaks = np.linspace(iv.lo, iv.hi, int(n_panels) + 1)
    return grid_from_breaks(breaks, rule_, order_)


def cumulative_integral(samples, g: Grid) -> np.ndarray:
    """Running integral from the first node; ``out[0] == 0``."""
    samples = np.asarray(samples)
    if samples.shape[0] != len(g):
        raise LengthMismatch(f"{samples.shape[0]} samples for {len(g)} grid nodes")
    return g.cumulative @ samples
