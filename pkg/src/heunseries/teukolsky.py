"""Teukolsky radial equation through its confluent Heun form.

With ``R(r) = (r - r+)^xi (r - r-)^eta exp(zeta r) H(z)`` and
``z = (r - r-)/(r+ - r-)`` the radial equation

    Delta R'' + (s + 1) Delta' R' + V(r) R = 0,
    V = (K^2 - 2 i s (r - M) K) / Delta + 4 i s omega r - lambda,

becomes the confluent Heun equation

    H'' + (gamma/z + delta/(z - 1) + 4p) H' + (4 alpha p z - sigma)/(z (z - 1)) H = 0

for each of the eight sign choices of (zeta, xi, eta).  Dimensionless
quantities are measured in units of the mass.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as _cgamma

from .errors import (
    ExtremalBlackHole,
    OutsideDomain,
    PoleAtZero,
    TooFewSamples,
    ZeroFrequency,
)
from .heun import (
    HeunClass,
    HeunParams,
    InitialData,
    MeshConfig,
    evaluate,
    k1_value,
)
from .oracle import _fd_derivatives
from .quadrature import QuadConfig

__all__ = [
    "ALLOWED_SPINS",
    "BranchChoice",
    "HeunReduction",
    "HorizonData",
    "LocalBehavior",
    "RadialSolution",
    "TeukolskyInput",
    "asymptotics_horizon",
    "asymptotics_infinity",
    "evaluate_radial",
    "exp_integral",
    "fit_loglog_slope",
    "horizon_kernel_value",
    "horizons",
    "local_behavior",
    "radial_equation_residual",
    "radial_operator",
    "reduce",
]

ALLOWED_SPINS = (0.0, 0.5, -0.5, 1.0, -1.0, 1.5, -1.5, 2.0, -2.0)


@dataclass(frozen=True)
class TeukolskyInput:
    mass: float
    a: float
    s: float
    m: int
    omega: complex
    alm: complex

    def __post_init__(self):
        mass, a, s = float(self.mass), float(self.a), float(self.s)
        if not mass > 0 or not math.isfinite(mass):
            raise ValueError("mass must be positive")
        if not math.isfinite(a):
            raise ValueError("a must be finite")
        if abs(a) >= mass:
            raise ExtremalBlackHole(f"|a| = {abs(a)} must be below M = {mass}")
        if s not in ALLOWED_SPINS:
            raise ValueError(f"spin weight {s} not in {ALLOWED_SPINS}")
        if int(self.m) != self.m:
            raise ValueError("m must be an integer")
        omega, alm = complex(self.omega), complex(self.alm)
        if omega == 0:
            raise ZeroFrequency("omega = 0 is not supported")
        for name, v in (("omega", omega), ("alm", alm)):
            if not (math.isfinite(v.real) and math.isfinite(v.imag)):
                raise ValueError(f"{name} must be finite")
        for name, v in (("mass", mass), ("a", a), ("s", s), ("m", int(self.m)),
                        ("omega", omega), ("alm", alm)):
            object.__setattr__(self, name, v)

    @property
    def lam(self) -> complex:
        return self.alm + self.a ** 2 * self.omega ** 2 - 2 * self.a * self.m * self.omega

    def K(self, r):
        return (r * r + self.a ** 2) * self.omega - self.a * self.m

    def Delta(self, r):
        return r * r - 2 * self.mass * r + self.a ** 2


@dataclass(frozen=True)
class HorizonData:
    r_plus: float
    r_minus: float
    sigma_plus: complex
    sigma_minus: complex


def horizons(inp: TeukolskyInput) -> HorizonData:
    M, a = inp.mass, inp.a
    root = math.sqrt(M * M - a * a)
    rp, rm = M + root, M - root
    D = rp - rm
    sp = (2 * inp.omega * M * rp - inp.m * a) / D
    sm = (2 * inp.omega * M * rm - inp.m * a) / D
    return HorizonData(rp, rm, sp, sm)


@dataclass(frozen=True)
class BranchChoice:
    sign_zeta: int = 1
    sign_xi: int = 1
    sign_eta: int = 1

    def __post_init__(self):
        for v in (self.sign_zeta, self.sign_xi, self.sign_eta):
            if v not in (1, -1):
                raise ValueError("branch signs must be +1 or -1")

    @property
    def index(self) -> int:
        return 4 * (self.sign_zeta > 0) + 2 * (self.sign_xi > 0) + (self.sign_eta > 0)

    @classmethod
    def from_index(cls, i: int) -> BranchChoice:
        if int(i) != i or not 0 <= i <= 7:
            raise ValueError("branch index must be in 0..7")
        i = int(i)
        return cls(1 if i & 4 else -1, 1 if i & 2 else -1, 1 if i & 1 else -1)

    @classmethod
    def all(cls):
        return [cls.from_index(i) for i in range(8)]


@dataclass(frozen=True)
class HeunReduction:
    """Confluent Heun data for one input and branch."""

    input: TeukolskyInput
    branch: BranchChoice
    horizon: HorizonData
    zeta: complex
    xi: complex
    eta: complex
    p: complex
    alpha: complex
    gamma: complex
    delta: complex
    sigma: complex
    rbar_plus: float
    rbar_minus: float
    omega_bar: complex
    zeta_bar: complex

    @property
    def width(self) -> float:
        return self.horizon.r_plus - self.horizon.r_minus

    def z_of_r(self, r):
        return (np.asarray(r, dtype=float) - self.horizon.r_minus) / self.width

    def r_of_z(self, z):
        return self.horizon.r_minus + self.width * np.asarray(z, dtype=float)

    def heun_params(self) -> HeunParams:
        """Confluent class parameters: first-order constant ``4p``, ``4 alpha p``
        and accessory ``sigma``."""
        return HeunParams(HeunClass.CONFLUENT, gamma=self.gamma, delta=self.delta,
                          epsilon=4 * self.p, alpha=4 * self.alpha * self.p, q=self.sigma)

    def as_dict(self) -> dict:
        return {
            "branch": self.branch.index,
            "r_plus": self.horizon.r_plus, "r_minus": self.horizon.r_minus,
            "sigma_plus": self.horizon.sigma_plus, "sigma_minus": self.horizon.sigma_minus,
            "zeta": self.zeta, "xi": self.xi, "eta": self.eta,
            "p": self.p, "alpha": self.alpha, "gamma": self.gamma, "delta": self.delta,
            "sigma": self.sigma,
            "rbar_plus": self.rbar_plus, "rbar_minus": self.rbar_minus,
            "omega_bar": self.omega_bar, "zeta_bar": self.zeta_bar,
        }


def reduce(inp: TeukolskyInput, branch: BranchChoice | None = None) -> HeunReduction:
    branch = branch or BranchChoice()
    hz = horizons(inp)
    s, M = inp.s, inp.mass
    zeta = branch.sign_zeta * 1j * inp.omega
    xi = (-s + branch.sign_xi * (s + 2j * hz.sigma_plus)) / 2
    eta = (-s + branch.sign_eta * (s - 2j * hz.sigma_minus)) / 2
    rbp, rbm = hz.r_plus / M, hz.r_minus / M
    wb, zb, ab = M * inp.omega, M * zeta, inp.a / M
    p = (rbp - rbm) * zb / 2
    gam = 1 + s + 2 * eta
    dlt = 1 + s + 2 * xi
    alp = 1 + s + xi + eta - 2 * zb + s * 1j * wb / zb
    half = (gam + dlt) / 2
    sig = (inp.alm + ab ** 2 * wb ** 2 - 8 * wb ** 2 + p * (2 * alp + gam - dlt)
           + (1 + s - half) * (s + half))
    return HeunReduction(inp, branch, hz, zeta, xi, eta, p, alp, gam, dlt, sig,
                         rbp, rbm, wb, zb)


@dataclass(frozen=True)
class LocalBehavior:
    """Exponent sets from the reduction next to the closed-form sets.

    ``infinity`` entries are ``(power, rate)`` pairs for ``z^power e^(rate z)``.
    """

    at_zero: tuple
    at_one: tuple
    infinity: tuple
    expected_zero: tuple
    expected_one: tuple
    expected_infinity: tuple

    @staticmethod
    def _pair_distance(a, b):
        d1 = max(abs(complex(x) - complex(y)) for x, y in zip(a, b))
        d2 = max(abs(complex(x) - complex(y)) for x, y in zip(a, b[::-1]))
        return min(d1, d2)

    def mismatch(self) -> float:
        da = self._pair_distance(self.at_zero, self.expected_zero)
        db = self._pair_distance(self.at_one, self.expected_one)
        A, B = self.infinity, self.expected_infinity
        straight = max(abs(A[0][0] - B[0][0]), abs(A[0][1] - B[0][1]),
                       abs(A[1][0] - B[1][0]), abs(A[1][1] - B[1][1]))
        swapped = max(abs(A[0][0] - B[1][0]), abs(A[0][1] - B[1][1]),
                      abs(A[1][0] - B[0][0]), abs(A[1][1] - B[0][1]))
        return float(max(da, db, min(straight, swapped)))


def local_behavior(inp: TeukolskyInput, branch: BranchChoice | None = None) -> LocalBehavior:
    """Exponents of ``R`` at ``z = 0, 1`` and its behavior at infinity.

    The reduced side combines the prefactor powers with the confluent
    equation's own exponents ``{0, 1 - gamma}``, ``{0, 1 - delta}`` and its
    two behaviors at infinity, ``z^(-alpha)`` and ``e^(-4pz) z^(alpha - gamma - delta)``.
    """
    red = reduce(inp, branch)
    hz = red.horizon
    s = inp.s
    zero = (red.eta, red.eta + 1 - red.gamma)
    one = (red.xi, red.xi + 1 - red.delta)
    rate = red.zeta * red.width  # e^{zeta r} = const * e^{zeta (r+ - r-) z}
    inf = ((red.xi + red.eta - red.alpha, rate),
           (red.xi + red.eta + red.alpha - red.gamma - red.delta, rate - 4 * red.p))
    wb, span = red.omega_bar, red.rbar_plus - red.rbar_minus
    exp_zero = (-s + 1j * hz.sigma_minus, -1j * hz.sigma_minus)
    exp_one = (-s - 1j * hz.sigma_plus, 1j * hz.sigma_plus)
    exp_inf = ((-1 - 2 * s + 2j * wb, 1j * span * wb), (-1 - 2j * wb, -1j * span * wb))
    return LocalBehavior(zero, one, inf, exp_zero, exp_one, exp_inf)


# ----------------------------------------------------------------------------
# radial equation


def radial_operator(inp: TeukolskyInput, r, R, dR, d2R):
    """Terms ``(Delta R'', (s+1) Delta' R', V R)`` of the radial equation."""
    r = np.asarray(r, dtype=float)
    Dl = inp.Delta(r)
    dDl = 2 * r - 2 * inp.mass
    K = inp.K(r)
    s = inp.s
    V = (K * K - 2j * s * (r - inp.mass) * K) / Dl + 4j * s * inp.omega * r - inp.lam
    return Dl * d2R, (s + 1) * dDl * dR, V * R


def radial_equation_residual(inp: TeukolskyInput, samples) -> float:
    """Normalized residual of the radial equation on uniformly spaced
    ``(r, R)`` samples; derivatives by fourth-order finite differences.

    The maximal modulus of the residual is divided by the largest modulus of
    the individual terms.  ``R == 0`` gives 0.
    """
    s_arr = np.asarray(samples, dtype=complex)
    if s_arr.ndim != 2 or s_arr.shape[0] < 5:
        raise TooFewSamples("need at least 5 samples")
    r = s_arr[:, 0].real
    R = s_arr[:, 1]
    order = np.argsort(r)
    r, R = r[order], R[order]
    if np.any(r <= horizons(inp).r_plus):
        raise OutsideDomain("samples must lie outside the event horizon")
    dr = np.diff(r)
    if np.any(dr <= 0) or dr.max() > 1.01 * dr.min():
        raise ValueError("samples must be uniformly spaced")
    d1, d2 = _fd_derivatives(r, R)
    t1, t2, t3 = radial_operator(inp, r[2:-2], R[2:-2], d1, d2)
    res = np.abs(t1 + t2 + t3).max()
    if res == 0:
        return 0.0
    scale = max(np.abs(t1).max(), np.abs(t2).max(), np.abs(t3).max())
    return float(res / scale)


@dataclass
class RadialSolution:
    z: np.ndarray
    r: np.ndarray
    H: np.ndarray
    R: np.ndarray
    err_est: np.ndarray
    reduction: HeunReduction


def prefactor(red: HeunReduction, z):
    """``(r - r+)^xi (r - r-)^eta e^(zeta r)`` on the principal branch."""
    z = np.asarray(z, dtype=float)
    r = red.r_of_z(z)
    D = red.width
    return np.exp(red.xi * np.log(D * (z - 1.0)) + red.eta * np.log(D * z) + red.zeta * r)


def evaluate_radial(inp: TeukolskyInput, branch: BranchChoice | None, init: InitialData, zs,
                    method: str = "direct", order: int | None = None,
                    mesh: MeshConfig | None = None, cfg: QuadConfig | None = None) -> RadialSolution:
    """Radial function from the confluent Heun solution with data ``init``
    (given in ``z``) at ``zs``, all inside ``]1, inf[``."""
    red = reduce(inp, branch)
    zs = np.atleast_1d(np.asarray(zs, dtype=float))
    if not init.z0 > 1 or np.any(zs <= 1):
        raise OutsideDomain("z0 and all abscissae must lie in ]1, inf[")
    ev = evaluate(red.heun_params(), init, zs, method=method, order=order, mesh=mesh, cfg=cfg)
    R = prefactor(red, zs) * ev.H
    return RadialSolution(zs, red.r_of_z(zs), ev.H, R, ev.err_est, red)


# ----------------------------------------------------------------------------
# asymptotics


def asymptotics_infinity(red: HeunReduction) -> dict:
    """Behaviors of ``H`` as ``z -> inf``.

    ``power_exponent``: ``H ~ z^(-alpha)``.  ``exp_rate`` and ``exp_power``:
    ``H ~ e^(-4pz) z^(alpha - gamma - delta)`` (dominant balance).  The
    variant ``z^(-4 alpha p - delta - gamma)`` is kept as ``exp_power_alt``.
    For ``p = 0`` the single behavior ``z^(1 - delta - gamma)`` applies when
    ``Re(delta + gamma) > 0``.
    """
    p, a, g, d = red.p, red.alpha, red.gamma, red.delta
    return {
        "power_exponent": -a,
        "exp_rate": -4 * p,
        "exp_power": a - g - d,
        "exp_power_alt": -4 * a * p - d - g,
        "p_zero_exponent": 1 - d - g,
        "p_is_zero": p == 0,
        "p_zero_applies": bool(p == 0 and (d + g).real > 0),
        "dominant": "power" if (4 * p).real > 0 else "exponential",
    }


def asymptotics_horizon(red: HeunReduction) -> dict:
    """Behaviors of ``H`` as ``z -> 1+``: a constant and ``(z - 1)^(1 - delta)``.

    The second one dominates the approach to the limit only when
    ``Re(delta) > 0``; otherwise ``H`` tends to a constant with an ``O(z - 1)``
    correction.  ``k1_limit`` is the limit of ``K1(z, z0)`` as ``z -> 1+`` for
    ``Re(delta) < 0``, namely ``(sigma - 4 alpha p) / delta``.
    """
    d = red.delta
    return {
        "constant_exponent": 0.0,
        "singular_exponent": 1 - d,
        "singular_branch_active": bool(d.real > 0),
        "k1_limit": (red.sigma - 4 * red.alpha * red.p) / d if d.real < 0 else None,
    }


def horizon_kernel_value(red: HeunReduction, z: float, z0: float,
                         cfg: QuadConfig | None = None) -> complex:
    """``K1(z, z0)`` of the reduced equation, for horizon checks."""
    return k1_value(red.heun_params(), z, z0, cfg)


def fit_loglog_slope(x, y, window: float = 0.25, tail: str = "upper") -> float:
    """Least-squares slope of ``log|y|`` against ``log x`` over the outer
    ``window`` fraction of the samples (``tail`` = "upper" or "lower")."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y))
    order = np.argsort(x)
    x, y = x[order], y[order]
    n = max(3, int(round(window * x.size)))
    sel = slice(x.size - n, None) if tail == "upper" else slice(0, n)
    X, Y = np.log(x[sel]), np.log(y[sel])
    return float(np.polyfit(X, Y, 1)[0])


# ----------------------------------------------------------------------------
# exponential integral

_EULER = 0.57721566490153286060651209008240243


def exp_integral(n, x) -> complex:
    """Generalized exponential integral ``E_n(x) = x^(n-1) Gamma(1-n, x)``.

    Principal branch in ``x``.  Non-positive integer orders use the
    elementary closed form; otherwise a continued fraction for ``Re x > 0``
    and ``|x| > 1.5`` and the power series elsewhere.
    """
    n = complex(n)
    x = complex(x)
    if x == 0:
        raise PoleAtZero("E_n is singular at x = 0")
    if n.imag == 0 and n.real <= 0 and n.real == int(n.real):
        k = int(-n.real)
        tot = sum(x ** j / math.factorial(j) for j in range(k + 1))
        return math.factorial(k) * cmath.exp(-x) / x ** (k + 1) * tot
    if x.real > 0 and abs(x) > 1.5:
        v = _expint_cf(n, x)
        if v is not None:
            return v
    return _expint_series(n, x)


def _expint_cf(n, x, itmax=2000, eps=1e-16):
    # modified Lentz on the even form of the continued fraction
    tiny = 1e-300
    b = x + n
    c = 1 / tiny
    d = 1 / b
    h = d
    for i in range(1, itmax):
        an = -i * (n - 1 + i)
        b += 2
        d = an * d + b
        d = tiny if d == 0 else d
        c = b + an / c
        c = tiny if c == 0 else c
        d = 1 / d
        delta = c * d
        h *= delta
        if abs(delta - 1) < eps:
            return h * cmath.exp(-x)
    return None


def _expint_series(n, x, itmax=5000):
    is_int = n.imag == 0 and n.real == int(n.real) and n.real >= 1
    if is_int:
        k = int(n.real)
        psi = -_EULER + sum(1.0 / j for j in range(1, k))
        head = (-x) ** (k - 1) / math.factorial(k - 1) * (psi - cmath.log(x))
        tot = 0j
        term = 1 + 0j      # (-x)^j / j!
        for j in range(itmax):
            if j != k - 1:
                tot += term / (j - k + 1)
            term *= -x / (j + 1)
            if j > abs(x) and j > k and abs(term) < 1e-17 * max(abs(tot), 1e-300):
                break
        return head - tot
    head = complex(_cgamma(1 - n)) * cmath.exp((n - 1) * cmath.log(x))
    tot = 0j
    term = 1 + 0j
    for j in range(itmax):
        tot += term / (1 - n + j)
        term *= -x / (j + 1)
        if j > abs(x) and abs(term) < 1e-17 * max(abs(tot), 1e-300):
            break
    return head - tot
