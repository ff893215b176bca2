"""The 2x2 companion system and its ordered exponential.

With ``Y = (y, y' - y)`` the scalar equation ``y'' - B1 y' - B2 y = 0``
becomes ``Y' = M(z) Y`` with

    M(z) = [[1, 1], [B1 + B2 - 1, B1 - 1]],

so ``y(z) = y0 U11(z, z0) + (y0' - y0) U12(z, z0)`` where ``U`` is the
fundamental matrix with ``U(z0, z0) = I``.  ``U`` is computed here with the
Runge-Kutta oracle, independently of the resolvent machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutsideInterval
from .heun import (
    CoefficientPair,
    HeunParams,
    InitialData,
    admissible_interval,
    coefficients,
)
from .oracle import SolverConfig, solve_system

__all__ = [
    "CompanionSystem",
    "build_companion",
    "liouville_determinant",
    "ordered_exponential_oracle",
    "reconstruct_solution",
]


@dataclass(frozen=True)
class CompanionSystem:
    params: HeunParams
    coef: CoefficientPair

    def M(self, z) -> np.ndarray:
        b1 = complex(self.coef.B1(z))
        b2 = complex(self.coef.B2(z))
        return np.array([[1.0, 1.0], [b1 + b2 - 1.0, b1 - 1.0]], dtype=complex)

    def trace(self, z):
        return self.coef.B1(z)


def build_companion(p: HeunParams) -> CompanionSystem:
    return CompanionSystem(params=p, coef=coefficients(p))


def _check(sys: CompanionSystem, z0, zs):
    iv = admissible_interval(sys.params, z0)
    zs = np.atleast_1d(np.asarray(zs, dtype=float))
    if not iv.contains(zs):
        raise OutsideInterval(f"abscissae must lie in ]{iv.lo}, {iv.hi}[")
    return zs


def ordered_exponential_oracle(sys: CompanionSystem, z0: float, zs,
                               cfg: SolverConfig | None = None) -> np.ndarray:
    """``U(z, z0)`` for each ``z`` in ``zs``, shape ``(n, 2, 2)``."""
    zs = _check(sys, z0, zs)
    cfg = cfg or SolverConfig(rel_tol=1e-12, abs_tol=1e-15)
    sol = solve_system(sys.M, float(z0), np.eye(2, dtype=complex), zs, cfg)
    U = sol.y
    U[zs == z0] = np.eye(2)
    return U


def reconstruct_solution(sys: CompanionSystem, init: InitialData, zs,
                         cfg: SolverConfig | None = None) -> np.ndarray:
    """``y0 U11 + (y0' - y0) U12`` at ``zs``."""
    U = ordered_exponential_oracle(sys, init.z0, zs, cfg)
    return init.H0 * U[:, 0, 0] + (init.dH0 - init.H0) * U[:, 0, 1]


def liouville_determinant(sys: CompanionSystem, z0: float, zs) -> np.ndarray:
    """``exp(int_{z0}^{z} trace M)`` from the closed-form primitive of ``B1``."""
    zs = np.atleast_1d(np.asarray(zs, dtype=float))
    A = sys.coef.primitive
    return np.exp(A(zs) - A(np.array(float(z0))))
