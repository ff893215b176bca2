"""Volterra composition on grids, Neumann partial sums and resolvent solves.

A :class:`DiscreteKernel` holds samples ``K(x_i, x_j)`` on the full square of
grid nodes.  For a column anchored at node ``c`` the discretized operator is
``(K * g)(x_i) = sum_k (W[i, k] - W[c, k]) K(x_i, x_k) g(x_k)``, the weights
of the signed integral from ``x_c`` to ``x_i``.  Integrals toward either side
of the anchor are therefore handled by the same matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import exp, lgamma, log

import numpy as np

from .errors import GridMismatch, NonFinite, SingularSystem
from .quadrature import Grid

__all__ = [
    "DiscreteKernel",
    "NeumannResult",
    "classical_tail_bound",
    "compose",
    "discrete_residual",
    "neumann_series",
    "resolve_second_kind",
    "short_form_bound",
    "sup_norm",
]


@dataclass(frozen=True, eq=False)
class DiscreteKernel:
    """Kernel samples ``values[i, j] = K(x_i, x_j)`` on ``grid``.

    ``anchor`` (optional) marks the only column the kernel is meant to be
    used with: entries outside that column's domain of dependence may then
    be zero-filled by the builders, which lets strongly growing kernels be
    represented without overflow.
    """

    grid: Grid
    values: np.ndarray
    anchor: int | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        n = len(self.grid)
        if v.shape != (n, n):
            raise GridMismatch(f"kernel shape {v.shape} does not match grid of {n} nodes")
        if not np.all(np.isfinite(v)):
            raise NonFinite("kernel has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, f, anchor=None) -> DiscreteKernel:
        """Sample a vectorized ``f(z, zeta)`` on the grid."""
        x = grid.nodes
        vals = np.broadcast_to(np.asarray(f(x[:, None], x[None, :]), dtype=complex),
                               (x.size, x.size)).copy()
        return cls(grid, vals, anchor)

    def column(self, j: int) -> np.ndarray:
        return self.values[:, j]


def _check_same_grid(f: DiscreteKernel, g: DiscreteKernel):
    if f.grid is g.grid:
        return
    if len(f.grid) != len(g.grid) or not np.array_equal(f.grid.nodes, g.grid.nodes) \
            or f.grid.rule != g.grid.rule or f.grid.order != g.grid.order:
        raise GridMismatch("kernels live on different grids")


def anchored_weights(grid: Grid, anchor: int) -> np.ndarray:
    """``W - W[anchor]``: row i integrates from ``x_anchor`` to ``x_i``."""
    W = grid.cumulative
    return W - W[anchor][None, :]


def domain_mask(grid: Grid, anchor: int) -> np.ndarray:
    """Boolean mask of the entries ``(i, j)`` a column solve anchored at
    ``anchor`` can touch: ``x_j`` between ``x_anchor`` and ``x_i``, widened to
    the panels containing both (a superset is harmless)."""
    nodes = grid.nodes
    p = grid.panel_of(nodes)
    pa = int(grid.panel_of(nodes[anchor]))
    right = nodes >= nodes[anchor]
    lo = np.where(right, grid.breaks[pa], grid.breaks[p])
    hi = np.where(right, grid.breaks[p + 1], grid.breaks[pa + 1])
    mask = (nodes[None, :] >= lo[:, None]) & (nodes[None, :] <= hi[:, None])
    np.fill_diagonal(mask, True)
    return mask


def compose(f: DiscreteKernel, g: DiscreteKernel) -> DiscreteKernel:
    """Volterra composition ``(f * g)(x_i, x_j) = int_{x_j}^{x_i} f(x_i, s) g(s, x_j) ds``.

    Evaluated for every pair on the square; the diagonal is exactly zero.
    """
    _check_same_grid(f, g)
    W = f.grid.cumulative
    F, G = f.values, g.values
    out = (W * F) @ G - F @ (W.T * G)
    np.fill_diagonal(out, 0.0)
    return DiscreteKernel(f.grid, out)


def sup_norm(k: DiscreteKernel, lower: bool = True) -> float:
    """Largest modulus over the lower triangle (``x_i >= x_j``), or over the
    whole stored square with ``lower=False``."""
    v = np.abs(k.values)
    if v.size == 0:
        return 0.0
    if lower:
        v = np.tril(v)
    return float(v.max())


def classical_tail_bound(kappa: float, span: float, m: int) -> float:
    """``kappa^(m+1) L^m exp(kappa L) / m!``, a bound on ``|G - sum_{n<=m} K^{*n}|``."""
    if kappa == 0:
        return 0.0
    if span == 0:
        return kappa if m == 0 else 0.0
    logb = (m + 1) * log(kappa) + m * log(span) + kappa * span - lgamma(m + 1)
    return exp(logb) if logb < 709 else float("inf")


def short_form_bound(kappa: float, m: int) -> float:
    """``kappa^m / m!`` without the length factor.  Not a valid bound in
    general (it ignores the interval span); reported for comparison only."""
    if kappa == 0:
        return 0.0
    logb = m * log(kappa) - lgamma(m + 1)
    return exp(logb) if logb < 709 else float("inf")


@dataclass(frozen=True, eq=False)
class NeumannResult:
    """Neumann partial sums ``sum_{n=1}^{m} K^{*n}``.

    ``partial_sums[m-1]`` holds order ``m``: a vector over the nodes for a
    column result (``column`` set), or a full matrix when ``column`` is None.
    ``bound[m-1]`` is the classical tail bound and ``short_bound[m-1]`` the
    span-free variant; ``increment_sup[m-1]`` is the sup-norm of ``K^{*m}``.
    """

    grid: Grid
    partial_sums: np.ndarray
    kappa: float
    bound: np.ndarray
    short_bound: np.ndarray
    increment_sup: np.ndarray
    column: int | None

    @property
    def max_order(self) -> int:
        return self.partial_sums.shape[0]

    def order(self, m: int) -> np.ndarray:
        if not 1 <= m <= self.max_order:
            raise IndexError(f"order {m} not computed (1..{self.max_order})")
        return self.partial_sums[m - 1]


def _volterra_operator(k: DiscreteKernel, anchor: int) -> np.ndarray:
    return anchored_weights(k.grid, anchor) * k.values


def neumann_series(k: DiscreteKernel, max_order: int, column: int | None = 0,
                   tol: float | None = None) -> NeumannResult:
    """Partial sums of the Neumann series ``G = sum K^{*n}``.

    With ``column`` set (default: the first node) only ``G(., x_column)`` is
    propagated, at O(N^2) per order.  ``column=None`` forms the full
    iterated kernels through :func:`compose`.  With ``tol`` the iteration
    stops as soon as the sup-norm of the latest increment drops below it.
    """
    if int(max_order) != max_order or max_order < 1:
        raise ValueError("max_order must be an integer >= 1")
    grid = k.grid
    if column is not None and k.anchor is not None and column != k.anchor:
        raise GridMismatch("kernel was built for a different anchor column")
    kappa = _kappa(k, column)
    span = _span(grid, column)
    sums, incs = [], []
    if column is None:
        term = k
        total = k.values.copy()
        sums.append(total.copy())
        incs.append(sup_norm(term, lower=False))
        for n in range(2, max_order + 1):
            if tol is not None and incs[-1] < tol:
                break
            term = compose(k, term)
            total = total + term.values
            sums.append(total.copy())
            incs.append(sup_norm(term, lower=False))
    else:
        A = _volterra_operator(k, column)
        term = k.values[:, column].copy()
        total = term.copy()
        sums.append(total.copy())
        incs.append(float(np.abs(term).max()))
        for n in range(2, max_order + 1):
            if tol is not None and incs[-1] < tol:
                break
            term = A @ term
            total = total + term
            sums.append(total.copy())
            incs.append(float(np.abs(term).max()))
    M = len(sums)
    bound = np.array([classical_tail_bound(kappa, span, m) for m in range(1, M + 1)])
    short = np.array([short_form_bound(kappa, m) for m in range(1, M + 1)])
    return NeumannResult(grid=grid, partial_sums=np.array(sums), kappa=kappa, bound=bound,
                         short_bound=short, increment_sup=np.array(incs), column=column)


def _kappa(k: DiscreteKernel, column):
    if column is None or column == 0:
        return sup_norm(k, lower=True)
    mask = domain_mask(k.grid, column)
    return float(np.abs(np.where(mask, k.values, 0)).max())


def _span(grid: Grid, column):
    if column is None:
        return grid.span
    x = grid.nodes
    return float(max(x[-1] - x[column], x[column] - x[0]))


def _panel_order_from(grid: Grid, anchor: int):
    """Blocks of unknown node indices in the order they can be eliminated:
    the anchor's panel first, then panels marching outward on each side."""
    pa = int(grid.panel_of(grid.nodes[anchor]))
    idx = grid.panel_nodes(pa)
    if grid.nodes[anchor] == grid.breaks[pa + 1] and pa + 1 < grid.n_panels:
        pa += 1
        idx = grid.panel_nodes(pa)
    blocks = []
    if grid.nodes[anchor] == grid.breaks[pa]:
        # anchor on a panel boundary: pure outward marching
        right = range(pa, grid.n_panels)
        left = range(pa - 1, -1, -1)
    else:
        blocks.append(idx[idx != anchor])
        right = range(pa + 1, grid.n_panels)
        left = range(pa - 1, -1, -1)
    for p in right:
        blocks.append(grid.panel_nodes(p)[1:])
    for p in left:
        blocks.append(grid.panel_nodes(p)[:-1])
    return blocks


def resolve_second_kind(k: DiscreteKernel, column: int | None = None) -> np.ndarray:
    """Solve the discretized ``G = K + K * G`` for the column ``G(., x_column)``.

    ``column`` defaults to the kernel's anchor, else the first node.  The
    system is block lower-triangular once panels are ordered outward from
    the anchor, so it is solved panel by panel with small dense blocks.
    """
    if column is None:
        column = k.anchor if k.anchor is not None else 0
    if k.anchor is not None and column != k.anchor:
        raise GridMismatch("kernel was built for a different anchor column")
    A = _volterra_operator(k, column)
    rhs = k.values[:, column]
    G = np.zeros(len(k.grid), dtype=complex)
    G[column] = rhs[column]
    for blk in _panel_order_from(k.grid, column):
        b = rhs[blk] + A[blk] @ G
        M = np.eye(blk.size) - A[np.ix_(blk, blk)]
        try:
            lu_ok = np.linalg.cond(M) < 1e14
        except np.linalg.LinAlgError:
            lu_ok = False
        if not lu_ok:
            raise SingularSystem("singular diagonal block in the Volterra solve")
        G[blk] = np.linalg.solve(M, b)
    if not np.all(np.isfinite(G)):
        raise NonFinite("resolvent overflowed")
    return G


def discrete_residual(k: DiscreteKernel, G, column: int | None = None) -> float:
    """Relative residual of ``G - K - K * G`` on the grid for one column."""
    if column is None:
        column = k.anchor if k.anchor is not None else 0
    A = _volterra_operator(k, column)
    rhs = k.values[:, column]
    AG = A @ G
    r = G - rhs - AG
    scale = np.abs(G).max() + np.abs(rhs).max() + (np.abs(A) @ np.abs(G)).max()
    if scale == 0:
        return 0.0
    return float(np.abs(r).max() / scale)
