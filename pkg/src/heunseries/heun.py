"""Heun functions of all five classes from resolvent kernels.

Every class is written as ``y'' - B1(z) y' - B2(z) y = 0``.  A solution with
``y(z0) = H0``, ``y'(z0) = dH0`` is rebuilt from two resolvent columns,

    H(z) = H0 + H0 int G1 + (dH0 - H0) [e^(z-z0) - 1 + int (e^(z-s) - 1) G2(s) ds],

where ``G1`` and ``G2`` solve second-kind Volterra equations with kernels

    K1(z, z0) = 1 + int_{z0}^{z} exp(L(s) - L(z)) (B1 + B2 - 1)(s) ds,
    K2(z, z0) = (B1 + B2 - 1)(z) e^(z-z0) - B2(z),

and ``L(z) = z - A(z)`` with ``A`` a closed-form primitive of ``B1``.  All
integrals run along the real axis inside a singularity-free interval.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadParams,
    NonConvergence,
    NonFinite,
    OutsideInterval,
    QuadratureFailure,
    SingularInitialPoint,
)
from .quadrature import (
    MAX_PANEL_ORDER,
    Grid,
    Interval,
    QuadConfig,
    grid_from_breaks,
    integrate_adaptive,
    integrate_batch,
)
from .volterra import (
    DiscreteKernel,
    classical_tail_bound,
    discrete_residual,
    domain_mask,
    neumann_series,
    resolve_second_kind,
)

__all__ = [
    "CoefficientPair",
    "HeunClass",
    "HeunEvaluation",
    "HeunParams",
    "InitialData",
    "KernelSpec",
    "MeshConfig",
    "SeriesResult",
    "admissible_interval",
    "coefficients",
    "evaluate",
    "evaluate_order_m",
    "evaluation_grid",
    "fundamental_pair",
    "k1_value",
    "k2_value",
    "kernel_K1",
    "kernel_K2",
    "kernel_spec",
    "mesh_breaks",
    "series",
    "singular_points",
]


class HeunClass(str, enum.Enum):
    GENERAL = "general"
    CONFLUENT = "confluent"
    BICONFLUENT = "biconfluent"
    DOUBLY_CONFLUENT = "doubly_confluent"
    TRICONFLUENT = "triconfluent"

    @classmethod
    def parse(cls, value) -> HeunClass:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {"doublyconfluent": "doubly_confluent", "doubly": "doubly_confluent"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise BadParams(f"unknown Heun class {value!r}") from None


# parameters each class uses; everything else must stay at its default
_FIELDS = {
    HeunClass.GENERAL: ("gamma", "delta", "epsilon", "q", "t", "alpha_beta"),
    HeunClass.CONFLUENT: ("gamma", "delta", "epsilon", "alpha", "q"),
    HeunClass.BICONFLUENT: ("gamma", "delta", "epsilon", "alpha", "q"),
    HeunClass.DOUBLY_CONFLUENT: ("gamma", "delta", "alpha", "q"),
    HeunClass.TRICONFLUENT: ("gamma", "delta", "epsilon", "alpha", "q"),
}


@dataclass(frozen=True)
class HeunParams:
    """Parameters of one Heun equation.

    Only the fields relevant to ``kind`` may be set.  For the general class
    the kernels need ``alpha`` and ``beta`` only through their product, so
    ``alpha_beta`` is stored instead.  ``t`` must be real.
    """

    kind: HeunClass
    gamma: complex = 0.0
    delta: complex = 0.0
    epsilon: complex = 0.0
    alpha: complex = 0.0
    q: complex = 0.0
    t: float | None = None
    alpha_beta: complex = 0.0

    def __post_init__(self):
        kind = HeunClass.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        used = _FIELDS[kind]
        for name in ("gamma", "delta", "epsilon", "alpha", "q", "alpha_beta"):
            v = getattr(self, name)
            try:
                v = complex(v)
            except (TypeError, ValueError):
                raise BadParams(f"{name} must be a number, got {v!r}") from None
            if not (math.isfinite(v.real) and math.isfinite(v.imag)):
                raise BadParams(f"{name} must be finite")
            if name not in used and v != 0:
                raise BadParams(f"{name} is not a parameter of the {kind.value} class")
            object.__setattr__(self, name, v)
        if kind is HeunClass.GENERAL:
            if self.t is None:
                raise BadParams("the general class needs t")
            t = complex(self.t)
            if t.imag != 0:
                raise BadParams("complex t is not supported (singular points must be real)")
            t = t.real
            if not math.isfinite(t) or t in (0.0, 1.0):
                raise BadParams("t must be finite and differ from 0 and 1")
            object.__setattr__(self, "t", t)
        elif self.t is not None:
            raise BadParams(f"t is not a parameter of the {kind.value} class")

    @classmethod
    def from_mapping(cls, kind, values: dict) -> HeunParams:
        """Build from a dict; accepts ``alphabeta``/``alpha_beta`` and ``beta``
        (combined with ``alpha`` for the general class)."""
        kind = HeunClass.parse(kind)
        vals = dict(values)
        if "alphabeta" in vals:
            vals["alpha_beta"] = vals.pop("alphabeta")
        if kind is HeunClass.GENERAL and "beta" in vals:
            vals["alpha_beta"] = complex(vals.pop("alpha", 1.0)) * complex(vals.pop("beta"))
        unknown = set(vals) - set(_FIELDS[kind])
        if unknown:
            raise BadParams(f"unexpected parameters for {kind.value}: {sorted(unknown)}")
        return cls(kind=kind, **vals)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in _FIELDS[self.kind]}


@dataclass(frozen=True)
class InitialData:
    z0: float
    H0: complex
    dH0: complex

    def __post_init__(self):
        object.__setattr__(self, "z0", float(self.z0))
        object.__setattr__(self, "H0", complex(self.H0))
        object.__setattr__(self, "dH0", complex(self.dH0))
        if not math.isfinite(self.z0):
            raise ValueError("z0 must be finite")


@dataclass(frozen=True)
class CoefficientPair:
    """``B1``, ``B2`` and the closed-form primitive ``A`` of ``B1`` (real-line
    logarithms ``log|z - a|``), all vectorized over real ``z``."""

    B1: Callable
    B2: Callable
    primitive: Callable
    singularities: tuple

    def L(self, z):
        """Exponent ``z - A(z)``; ``exp(L(s) - L(z))`` equals
        ``exp(s - z + int_s^z B1)``."""
        return z - self.primitive(z)

    def rate(self, z):
        """Local variation scale of the kernels, used for mesh sizing."""
        return np.abs(1.0 - self.B1(z)) + np.sqrt(np.abs(self.B2(z)))


def coefficients(p: HeunParams) -> CoefficientPair:
    g, d, e, a, q = p.gamma, p.delta, p.epsilon, p.alpha, p.q
    k = p.kind
    if k is HeunClass.GENERAL:
        t, ab = p.t, p.alpha_beta

        def B1(z):
            return -(g / z + d / (z - 1.0) + e / (z - t))

        def B2(z):
            return -(ab * z - q) / (z * (z - 1.0) * (z - t))

        def A(z):
            return -(g * np.log(np.abs(z)) + d * np.log(np.abs(z - 1.0)) + e * np.log(np.abs(z - t)))

        sing = tuple(sorted((0.0, 1.0, t)))
    elif k is HeunClass.CONFLUENT:
        def B1(z):
            return -(g / z + d / (z - 1.0) + e)

        def B2(z):
            return -(a * z - q) / (z * (z - 1.0))

        def A(z):
            return -(g * np.log(np.abs(z)) + d * np.log(np.abs(z - 1.0)) + e * z)

        sing = (0.0, 1.0)
    elif k is HeunClass.BICONFLUENT:
        def B1(z):
            return -(g / z + d + e * z)

        def B2(z):
            return -(a * z - q) / z

        def A(z):
            return -(g * np.log(np.abs(z)) + d * z + 0.5 * e * z * z)

        sing = (0.0,)
    elif k is HeunClass.DOUBLY_CONFLUENT:
        def B1(z):
            return -(d / (z * z) + g / z + 1.0)

        def B2(z):
            return -(a * z - q) / (z * z)

        def A(z):
            return d / z - g * np.log(np.abs(z)) - z

        sing = (0.0,)
    else:
        def B1(z):
            return -(g + d * z + e * z * z)

        def B2(z):
            return -(a * z - q)

        def A(z):
            return -(g * z + 0.5 * d * z * z + e * z ** 3 / 3.0)

        sing = ()

    def B1v(z):
        return np.asarray(B1(np.asarray(z, dtype=float)), dtype=complex) + 0j

    def B2v(z):
        return np.asarray(B2(np.asarray(z, dtype=float)), dtype=complex) + 0j

    def Av(z):
        return np.asarray(A(np.asarray(z, dtype=float)), dtype=complex) + 0j

    return CoefficientPair(B1=B1v, B2=B2v, primitive=Av, singularities=sing)


def singular_points(p: HeunParams) -> list:
    return list(coefficients(p).singularities)


def admissible_interval(p: HeunParams, z0: float) -> Interval:
    """Largest open interval around ``z0`` free of singular points (may have
    infinite ends)."""
    sing = singular_points(p)
    z0 = float(z0)
    if any(z0 == s for s in sing):
        raise SingularInitialPoint(f"z0={z0} is a singular point")
    lo = max((s for s in sing if s < z0), default=-math.inf)
    hi = min((s for s in sing if s > z0), default=math.inf)
    return Interval(lo, hi)


# ----------------------------------------------------------------------------
# kernels


def k1_value(p: HeunParams, z: float, z0: float, cfg: QuadConfig | None = None,
             coef: CoefficientPair | None = None) -> complex:
    """Pointwise ``K1(z, z0)`` by adaptive quadrature."""
    if z == z0:
        return 1.0 + 0j
    coef = coef or coefficients(p)
    Lz = coef.L(np.array(z))

    def f(s):
        return np.exp(coef.L(s) - Lz) * (coef.B1(s) + coef.B2(s) - 1.0)

    lo, hi = sorted((z0, z))
    try:
        v, _ = integrate_adaptive(f, Interval(lo, hi), cfg)
    except NonConvergence as exc:
        raise QuadratureFailure(str(exc)) from exc
    return 1.0 + (v if z > z0 else -v)


def k2_value(p: HeunParams, z, z0, coef: CoefficientPair | None = None):
    """``K2(z, z0)`` in closed form (vectorized)."""
    coef = coef or coefficients(p)
    z = np.asarray(z, dtype=float)
    z0 = np.asarray(z0, dtype=float)
    b1, b2 = coef.B1(z), coef.B2(z)
    out = (b1 + b2 - 1.0) * np.exp(z - z0) - b2
    return np.where(z == z0, b1 - 1.0, out)


@dataclass(frozen=True)
class KernelSpec:
    """A two-variable kernel with its pointwise evaluator."""

    which: str
    params: HeunParams
    evaluator: Callable = field(repr=False)

    def __call__(self, z, z0):
        return self.evaluator(z, z0)


def kernel_spec(p: HeunParams, which: str, cfg: QuadConfig | None = None) -> KernelSpec:
    coef = coefficients(p)
    which = which.upper()
    if which == "K1":
        def ev(z, z0):
            return k1_value(p, float(z), float(z0), cfg, coef)
    elif which == "K2":
        def ev(z, z0):
            return complex(k2_value(p, z, z0, coef))
    else:
        raise ValueError("which must be 'K1' or 'K2'")
    return KernelSpec(which, p, ev)


def _check_grid_inside(p: HeunParams, grid: Grid):
    sing = singular_points(p)
    for s in sing:
        if grid.lo <= s <= grid.hi:
            raise OutsideInterval(f"grid [{grid.lo}, {grid.hi}] contains the singular point {s}")


def _row_ranges(grid: Grid, anchor):
    """For each row the contiguous column range [jlo, jhi] that is needed."""
    n = len(grid)
    if anchor is None:
        return np.zeros(n, dtype=int), np.full(n, n - 1)
    mask = domain_mask(grid, anchor)
    jlo = mask.argmax(axis=1)
    jhi = n - 1 - mask[:, ::-1].argmax(axis=1)
    return jlo, jhi


def kernel_K1(p: HeunParams, grid: Grid, cfg: QuadConfig | None = None,
              anchor: int | None = None) -> DiscreteKernel:
    """Sample ``K1`` on the grid.

    The integral between consecutive nodes is computed once by adaptive
    quadrature, scaled to its right end; every entry is then a weighted
    running sum of these pieces, accumulated outward from the diagonal.
    With ``anchor`` only the entries a column solve at that node can reach
    are formed (the rest are zero), which keeps strongly growing kernels
    representable.
    """
    _check_grid_inside(p, grid)
    coef = coefficients(p)
    cfg = cfg or QuadConfig(abs_tol=1e-15, rel_tol=1e-13)
    x = grid.nodes
    n = x.size
    Lx = coef.L(x)

    def f(s, idx):
        return np.exp(coef.L(s) - Lx[idx + 1][:, None]) * (coef.B1(s) + coef.B2(s) - 1.0)

    try:
        J, _ = integrate_batch(f, x[:-1], x[1:], cfg)
    except NonConvergence as exc:
        raise QuadratureFailure(str(exc)) from exc

    jlo, jhi = _row_ranges(grid, anchor)
    kk = np.arange(n - 1)
    need = (kk[None, :] >= jlo[:, None]) & (kk[None, :] < jhi[:, None])
    D = Lx[None, 1:] - Lx[:, None]
    with np.errstate(over="ignore", invalid="ignore"):
        T = np.where(need, np.exp(np.where(need, D, 0.0)), 0.0) * J[None, :]
    del D
    if not np.all(np.isfinite(T)):
        raise NonFinite("K1 overflows on the requested grid; restrict the range or pass an anchor")
    rows = np.arange(n)[:, None]
    cols = np.arange(n - 1)[None, :]
    lower = np.where(cols < rows, T, 0.0)
    # S[i, j] = sum_{k=j}^{i-1} T[i, k], summed from the diagonal outward
    S = np.zeros((n, n), dtype=complex)
    S[:, :-1] = np.cumsum(lower[:, ::-1], axis=1)[:, ::-1]
    del lower
    upper = np.where(cols >= rows, T, 0.0)
    del T
    # U[i, j] = sum_{k=i}^{j-1} T[i, k]
    U = np.zeros((n, n), dtype=complex)
    U[:, 1:] = np.cumsum(upper, axis=1)
    del upper
    K = 1.0 + S - U
    del S, U
    if anchor is not None:
        K[~domain_mask(grid, anchor)] = 0.0
    np.fill_diagonal(K, 1.0)
    return DiscreteKernel(grid, K, anchor)


def kernel_K2(p: HeunParams, grid: Grid, anchor: int | None = None) -> DiscreteKernel:
    """Sample ``K2`` in closed form; diagonal set to ``B1 - 1``."""
    _check_grid_inside(p, grid)
    coef = coefficients(p)
    x = grid.nodes
    b1, b2 = coef.B1(x), coef.B2(x)
    E = x[:, None] - x[None, :]
    if anchor is not None:
        mask = domain_mask(grid, anchor)
        E = np.where(mask, E, -np.inf)
    with np.errstate(over="ignore"):
        K = (b1 + b2 - 1.0)[:, None] * np.exp(E) - b2[:, None]
    if anchor is not None:
        K[~mask] = 0.0
    np.fill_diagonal(K, b1 - 1.0)
    if not np.all(np.isfinite(K)):
        raise NonFinite("K2 overflows on the requested grid")
    return DiscreteKernel(grid, K, anchor)


# ----------------------------------------------------------------------------
# meshes


@dataclass(frozen=True)
class MeshConfig:
    """Panel layout for evaluation grids.

    Panel width near ``z`` is ``min(max_width, width / rate(z),
    grading * distance_to_singularity(z))`` where ``rate`` is the local
    variation scale of the kernels.  ``order`` Gauss points per panel.  If
    the node count would exceed ``max_nodes`` the widths are scaled up.
    """

    order: int = 12
    width: float = 6.0
    max_width: float = 0.5
    grading: float = 0.5
    max_nodes: int = 3200

    def __post_init__(self):
        if self.width <= 0 or self.max_width <= 0 or not 0 < self.grading < 1:
            raise ValueError("invalid mesh configuration")
        if int(self.order) != self.order or not 1 <= self.order <= MAX_PANEL_ORDER:
            raise ValueError(f"panel order must be in 1..{MAX_PANEL_ORDER}")
        if self.max_nodes < 4 * (self.order + 1):
            raise ValueError("max_nodes is too small for the panel order")


def _side_breaks(coef: CoefficientPair, a: float, b: float, cfg: MeshConfig, scale: float):
    sing = np.asarray(coef.singularities, dtype=float)

    def h_at(z):
        h = min(cfg.max_width, cfg.width * scale / float(coef.rate(np.array(z))))
        if sing.size:
            h = min(h, cfg.grading * float(np.min(np.abs(sing - z))))
        return h

    pts = [a]
    x = a
    s = 1.0 if b > a else -1.0
    while (b - x) * s > 0:
        h = h_at(x)
        h = min(h, h_at(x + s * h))
        x_new = x + s * h
        if (b - x_new) * s < 0.3 * h:
            x_new = b
        pts.append(x_new)
        x = x_new
        if len(pts) > 200000:
            raise ValueError("mesh construction did not terminate")
    return np.array(pts)


def mesh_breaks(coef: CoefficientPair, lo: float, z0: float, hi: float,
                cfg: MeshConfig | None = None) -> np.ndarray:
    """Panel endpoints covering ``[lo, hi]`` with ``z0`` as a breakpoint."""
    cfg = cfg or MeshConfig()
    scale = 1.0
    for _ in range(40):
        left = _side_breaks(coef, z0, lo, cfg, scale)[::-1] if lo < z0 else np.array([z0])
        right = _side_breaks(coef, z0, hi, cfg, scale) if hi > z0 else np.array([z0])
        br = np.concatenate([left, right[1:]])
        if (br.size - 1) * (cfg.order + 1) + 1 <= cfg.max_nodes:
            return br
        scale *= 1.25
    return br


def evaluation_grid(p: HeunParams, z0: float, lo: float, hi: float,
                    mesh: MeshConfig | None = None) -> tuple[Grid, int]:
    """Grid over ``[lo, hi]`` (which must contain ``z0``) and the index of z0."""
    mesh = mesh or MeshConfig()
    coef = coefficients(p)
    lo, hi = min(lo, z0), max(hi, z0)
    if hi == lo:
        hi = lo + 1e-3 * max(1.0, abs(lo))
    br = mesh_breaks(coef, lo, z0, hi, mesh)
    grid = grid_from_breaks(br, "gauss", mesh.order)
    return grid, grid.index_of(z0)


# ----------------------------------------------------------------------------
# evaluation


@dataclass
class HeunEvaluation:
    z: np.ndarray
    H: np.ndarray
    err_est: np.ndarray
    method: str
    order: int | None
    diagnostics: dict

    def rows(self):
        for z, h, e in zip(self.z, self.H, self.err_est):
            yield float(z), complex(h), float(e)

    def __iter__(self):
        return self.rows()

    def __len__(self):
        return self.z.size


@dataclass
class SeriesResult:
    z: np.ndarray
    orders: list
    H: np.ndarray          # (len(orders), len(z))
    err_est: np.ndarray    # increment to the previous order
    diagnostics: dict


def _validate(p: HeunParams, init: InitialData, zs) -> tuple[np.ndarray, Interval]:
    zs = np.atleast_1d(np.asarray(zs, dtype=float))
    if zs.ndim != 1 or zs.size == 0:
        raise ValueError("zs must be a non-empty list of abscissae")
    if not np.all(np.isfinite(zs)):
        raise OutsideInterval("abscissae must be finite")
    iv = admissible_interval(p, init.z0)
    if not iv.contains(zs):
        bad = zs[(zs <= iv.lo) | (zs >= iv.hi)][0]
        raise OutsideInterval(f"z={bad} is outside the admissible interval ]{iv.lo}, {iv.hi}[")
    return zs, iv


class _Setup:
    """Shared state for one evaluation: grid, anchor, kernels and the
    integration rows at the output abscissae."""

    def __init__(self, p, init, zs, mesh, cfg):
        self.p, self.init, self.zs = p, init, zs
        self.coef = coefficients(p)
        self.grid, self.anchor = evaluation_grid(p, init.z0, zs.min(), zs.max(), mesh)
        self.cfg = cfg
        rows = self.grid.integration_rows(zs)
        self.R = rows - self.grid.cumulative[self.anchor][None, :]
        self._K1 = self._K2 = None
        x = self.grid.nodes
        with np.errstate(over="ignore", invalid="ignore"):
            E = np.exp(zs[:, None] - x[None, :]) - 1.0
        self.RE = np.where(self.R != 0, self.R * np.where(self.R != 0, E, 0.0), 0.0)
        self.ez = np.exp(zs - init.z0) - 1.0

    @property
    def K1(self):
        if self._K1 is None:
            self._K1 = kernel_K1(self.p, self.grid, self.cfg, self.anchor)
        return self._K1

    @property
    def K2(self):
        if self._K2 is None:
            self._K2 = kernel_K2(self.p, self.grid, self.anchor)
        return self._K2

    def U11(self, G1):
        return 1.0 + self.R @ G1

    def U12(self, G2, form="corollary"):
        if form == "corollary":
            return self.ez + self.RE @ G2
        if form == "theorem":
            # (e^{z-s} - 1)(1 + G2): differs from the corollary form by (z - z0)
            return self.RE @ (1.0 + G2)
        raise ValueError("form must be 'corollary' or 'theorem'")

    def near_singular(self):
        sing = np.asarray(self.coef.singularities)
        if sing.size == 0:
            return False
        span = max(self.grid.span, 1e-300)
        d = np.min(np.abs(sing[:, None] - np.array([self.grid.lo, self.grid.hi])[None, :]))
        return bool(d < 0.05 * span)


def fundamental_pair(p: HeunParams, z0: float, zs, method: str = "direct",
                     order: int | None = None, mesh: MeshConfig | None = None,
                     cfg: QuadConfig | None = None, form: str = "corollary"):
    """``U11(z) = 1 + int G1`` and ``U12(z)`` at ``zs``: the solutions with
    data ``(1, 1)`` and ``(0, 1)`` respectively.

    ``form="theorem"`` returns the alternative ``int (e^{z-s} - 1)(1 + G2)``
    for comparison; it is not a solution of the equation.
    """
    init = InitialData(z0, 1.0, 1.0)
    zs, _ = _validate(p, init, zs)
    st = _Setup(p, init, zs, mesh, cfg)
    if method == "direct":
        G1 = resolve_second_kind(st.K1)
        G2 = resolve_second_kind(st.K2)
    elif method == "neumann":
        if order is None or order < 1:
            raise ValueError("neumann needs order >= 1")
        G1 = neumann_series(st.K1, order, column=st.anchor).order(order)
        G2 = neumann_series(st.K2, order, column=st.anchor).order(order)
    else:
        raise ValueError(f"unknown method {method!r}")
    return st.U11(G1), st.U12(G2, form)


def _combine(st: _Setup, G1, G2, form):
    H0, dH0 = st.init.H0, st.init.dH0
    H = np.full(st.zs.size, H0, dtype=complex)
    if H0 != 0:
        H = H + H0 * (st.R @ G1)
    if dH0 != H0:
        H = H + (dH0 - H0) * st.U12(G2, form)
    return H


def evaluate(p: HeunParams, init: InitialData, zs, method: str = "direct",
             order: int | None = None, mesh: MeshConfig | None = None,
             cfg: QuadConfig | None = None, tol: float | None = None,
             max_order: int = 200, form: str = "corollary") -> HeunEvaluation:
    """Evaluate the Heun function fixed by ``init`` at the abscissae ``zs``.

    Parameters
    ----------
    method : {"direct", "neumann"}
        ``direct`` solves the discretized Volterra equations; ``neumann``
        truncates the series at ``order`` (or, with ``order=None`` and
        ``tol``, at the first order whose increment is below ``tol``).
    mesh : MeshConfig, optional
    cfg : QuadConfig, optional
        Tolerances of the inner kernel integrals.
    form : {"corollary", "theorem"}
        Reconstruction of the second branch; ``theorem`` is a diagnostic.

    Returns
    -------
    HeunEvaluation
        ``err_est`` is the last Neumann increment (plus the classical tail
        bound near singular endpoints) or, for ``direct``, the relative
        residual of the discrete equations scaled by ``max|H|``.
    """
    zs, _ = _validate(p, init, zs)
    if method in ("volterra_direct",):
        method = "direct"
    if init.H0 == 0 and init.dH0 == 0:
        z = zs.copy()
        return HeunEvaluation(z, np.zeros(z.size, complex), np.zeros(z.size), method, order, {})
    if method == "neumann":
        if order is None:
            if tol is None:
                raise ValueError("neumann needs an order or a tolerance")
            res = series(p, init, zs, orders=None, mesh=mesh, cfg=cfg, tol=tol,
                         max_order=max_order, form=form)
            m = res.orders[-1]
            if res.diagnostics["last_increment"] >= tol:
                raise NonConvergence(
                    f"Neumann series did not reach tol={tol} within {max_order} orders")
        else:
            res = series(p, init, zs, orders=[order], mesh=mesh, cfg=cfg, form=form)
            m = order
        return HeunEvaluation(res.z, res.H[-1], res.err_est[-1], "neumann", m, res.diagnostics)
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    st = _Setup(p, init, zs, mesh, cfg)
    G1 = G2 = None
    resid = 0.0
    if init.H0 != 0:
        G1 = resolve_second_kind(st.K1)
        resid = max(resid, discrete_residual(st.K1, G1))
    if init.dH0 != init.H0:
        G2 = resolve_second_kind(st.K2)
        resid = max(resid, discrete_residual(st.K2, G2))
    H = _combine(st, G1, G2, form)
    if not np.all(np.isfinite(H)):
        raise NonFinite("evaluation overflowed")
    err = np.full(zs.size, resid * np.abs(H).max())
    diag = {"nodes": len(st.grid), "panels": st.grid.n_panels, "panel_order": st.grid.order,
            "discrete_residual": resid, "near_singular": st.near_singular()}
    return HeunEvaluation(zs, H, err, "direct", None, diag)


def series(p: HeunParams, init: InitialData, zs, orders: Iterable[int] | None,
           mesh: MeshConfig | None = None, cfg: QuadConfig | None = None,
           tol: float | None = None, max_order: int = 200,
           form: str = "corollary") -> SeriesResult:
    """Neumann approximants ``H^(m)`` for several orders from one set of
    partial sums.  Order 0 is ``H0 + (dH0 - H0)(e^(z-z0) - 1)``."""
    zs, _ = _validate(p, init, zs)
    if orders is not None:
        orders = sorted(set(int(m) for m in orders))
        if not orders or orders[0] < 0:
            raise ValueError("orders must be non-negative integers")
        M = max(orders[-1], 1)
        stop = None
    else:
        M = max_order
        stop = tol
    st = _Setup(p, init, zs, mesh, cfg)
    H0, dH0 = init.H0, init.dH0
    nz = zs.size
    base = np.full(nz, H0, dtype=complex) + (dH0 - H0) * st.ez
    inc1 = np.zeros((M, nz), dtype=complex)
    inc2 = np.zeros((M, nz), dtype=complex)
    kappa, reached = 0.0, M
    # per-kernel stopping levels: |H increment| <= |coef| * ||rows||_inf * |G increment|
    stop1 = stop2 = None
    if stop is not None:
        stop1 = stop / max(abs(H0) * np.abs(st.R).sum(axis=1).max(), 1e-300)
        stop2 = stop / max(abs(dH0 - H0) * np.abs(st.RE).sum(axis=1).max(), 1e-300)
    if H0 != 0:
        r1 = neumann_series(st.K1, M, column=st.anchor, tol=stop1)
        P = r1.partial_sums
        d1 = np.diff(np.vstack([np.zeros(P.shape[1]), P]), axis=0)
        inc1[: P.shape[0]] = H0 * (d1 @ st.R.T)
        kappa = max(kappa, r1.kappa)
        reached = r1.max_order
    if dH0 != H0:
        r2 = neumann_series(st.K2, M, column=st.anchor, tol=stop2)
        P = r2.partial_sums
        d2 = np.diff(np.vstack([np.zeros(P.shape[1]), P]), axis=0)
        inc2[: P.shape[0]] = (dH0 - H0) * (d2 @ st.RE.T)
        kappa = max(kappa, r2.kappa)
        reached = r2.max_order if H0 == 0 else max(reached, r2.max_order)
    if form == "theorem":
        base = np.full(nz, H0, dtype=complex) + (dH0 - H0) * (st.RE @ np.ones(len(st.grid)))
    incs = inc1 + inc2
    if orders is None:
        # first order whose increment is below tol (or the last computed)
        sup = np.abs(incs[:reached]).max(axis=1)
        below = np.nonzero(sup < tol)[0]
        mstop = int(below[0]) + 1 if below.size else reached
        orders = [mstop]
    cum = base[None, :] + np.cumsum(incs, axis=0)
    H = np.array([base if m == 0 else cum[m - 1] for m in orders])
    err = np.array([np.abs(incs[m - 1]) if m >= 1 else np.abs(base - H0) for m in orders])
    near = st.near_singular()
    if near:
        span = float(np.max(np.abs(zs - init.z0)))
        for r, m in enumerate(orders):
            err[r] = np.maximum(err[r], classical_tail_bound(kappa, span, m))
    last = float(np.abs(incs[orders[-1] - 1]).max()) if orders[-1] >= 1 else float("inf")
    diag = {"nodes": len(st.grid), "panels": st.grid.n_panels, "panel_order": st.grid.order,
            "kappa": kappa, "near_singular": near, "last_increment": last}
    return SeriesResult(zs, list(orders), H, err, diag)


def evaluate_order_m(p: HeunParams, init: InitialData, zs, m: int,
                     mesh: MeshConfig | None = None, cfg: QuadConfig | None = None,
                     form: str = "corollary") -> HeunEvaluation:
    """The ``m``-th Neumann approximant ``H^(m)``; ``m = 0`` gives
    ``H0 + (dH0 - H0)(e^(z-z0) - 1)``."""
    if int(m) != m or m < 0:
        raise ValueError("m must be a non-negative integer")
    zs, _ = _validate(p, init, zs)
    if init.H0 == 0 and init.dH0 == 0:
        return HeunEvaluation(zs, np.zeros(zs.size, complex), np.zeros(zs.size), "neumann", m, {})
    if m == 0:
        H = init.H0 + (init.dH0 - init.H0) * (np.exp(zs - init.z0) - 1.0)
        return HeunEvaluation(zs, H.astype(complex), np.zeros(zs.size), "neumann", 0, {})
    res = series(p, init, zs, orders=[m], mesh=mesh, cfg=cfg, form=form)
    return HeunEvaluation(res.z, res.H[0], res.err_est[0], "neumann", m, res.diagnostics)
