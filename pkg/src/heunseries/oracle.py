"""Independent ODE reference solver.

Dormand-Prince 5(4) with PI step-size control, integrating complex linear
systems ``Y' = M(z) Y`` and the scalar equation ``y'' - B1 y' - B2 y = 0``.
The complex state is weighed componentwise on its real and imaginary parts
in the error norm.  Output abscissae are hit exactly by clipping steps, so
no interpolant is involved.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .errors import MaxSteps, StepUnderflow, TooFewSamples

__all__ = ["OdeProblem", "OdeSolution", "SolverConfig", "residual", "solve", "solve_system"]

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# fifth-order minus embedded fourth-order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_ALPHA = 0.7 / 5   # PI controller exponents (Gustafsson)
_BETA = 0.4 / 5


@dataclass(frozen=True)
class OdeProblem:
    """``y'' = B1(z) y' + B2(z) y`` with ``y(z0) = y0``, ``y'(z0) = dy0``."""

    B1: Callable
    B2: Callable
    z0: float
    y0: complex
    dy0: complex

    def rhs(self, z, y):
        b1 = self.B1(z)
        b2 = self.B2(z)
        return np.array([y[1], b1 * y[1] + b2 * y[0]])


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-12
    abs_tol: float = 1e-14
    max_steps: int = 1_000_000
    dense_output: bool = False
    fixed_step: float | None = None

    def __post_init__(self):
        if not (0 < self.rel_tol < 1 and 0 < self.abs_tol < 1):
            raise ValueError("tolerances must lie in (0, 1)")
        if self.max_steps < 10:
            raise ValueError("max_steps must be at least 10")
        if self.fixed_step is not None and not self.fixed_step > 0:
            raise ValueError("fixed_step must be positive")


@dataclass
class OdeSolution:
    """Values at the requested abscissae plus, with ``dense_output``, every
    accepted step."""

    z: np.ndarray
    y: np.ndarray
    steps_z: np.ndarray | None = None
    steps_y: np.ndarray | None = None
    n_steps: int = 0
    n_rejected: int = 0


def _norm(err, y_old, y_new, cfg):
    scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y_old), np.abs(y_new))
    r = np.concatenate([err.real / scale, err.imag / scale])
    return float(np.sqrt(np.mean(r * r)))


def _step(f, z, y, k0, h):
    ks = [k0]
    for i in range(1, 7):
        yi = y + h * sum(a * kk for a, kk in zip(_A[i], ks) if a != 0.0)
        ks.append(f(z + _C[i] * h, yi))
    y_new = y + h * sum(b * kk for b, kk in zip(_B, ks) if b != 0.0)
    err = h * sum(e * kk for e, kk in zip(_E, ks) if e != 0.0)
    return y_new, err, ks[-1]


def _initial_step(f, z0, y0, f0, direction, cfg, span):
    # Hairer-Norsett-Wanner starting-step heuristic, order 5
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y0)
    d0 = np.sqrt(np.mean(np.abs(y0 / scale) ** 2))
    d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + direction * h0 * f0
    f1 = f(z0 + direction * h0, y1)
    d2 = np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


def _integrate_one_side(f, z0, y0, targets, cfg, record):
    """Integrate from z0 through the sorted (outward) targets."""
    out = np.empty((len(targets), y0.size), dtype=complex)
    if len(targets) == 0:
        return out, [], [], 0, 0
    direction = 1.0 if targets[-1] > z0 else -1.0
    z = float(z0)
    y = y0.astype(complex)
    k0 = f(z, y)
    span = abs(targets[-1] - z0)
    if span == 0:
        out[:] = y
        return out, [], [], 0, 0
    if cfg.fixed_step is not None:
        h = cfg.fixed_step
    else:
        h = _initial_step(f, z, y, k0, direction, cfg, span)
    err_prev = 1e-4
    steps = 0
    rejected = 0
    zs_rec, ys_rec = [], []
    ti = 0
    while ti < len(targets) and targets[ti] == z:
        out[ti] = y
        ti += 1
    while ti < len(targets):
        target = targets[ti]
        remaining = abs(target - z)
        h_try = min(h, remaining)
        # a leftover sliver after the step would only cost an extra tiny step
        hit = remaining - h_try <= 1e-9 * h_try
        if hit:
            h_try = remaining
        if steps >= cfg.max_steps:
            raise MaxSteps(f"max_steps={cfg.max_steps} exhausted at z={z}", reached=z)
        if h_try < 1e-14 * max(1.0, abs(z)):
            raise StepUnderflow(f"step size underflow at z={z}", reached=z)
        with np.errstate(over="ignore", invalid="ignore"):
            y_new, err, k_new = _step(f, z, y, k0, direction * h_try)
        steps += 1
        if cfg.fixed_step is not None:
            accept = True
            en = 0.0
        else:
            en = _norm(err, y, y_new, cfg)
            accept = en <= 1.0 and np.all(np.isfinite(y_new))
        if not accept:
            rejected += 1
            if not np.isfinite(en):
                fac = _MIN_FACTOR
            else:
                fac = max(_MIN_FACTOR, _SAFETY * en ** (-1 / 5))
            h = h_try * fac
            continue
        z = target if hit else z + direction * h_try
        y, k0 = y_new, k_new
        if record:
            zs_rec.append(z)
            ys_rec.append(y.copy())
        if cfg.fixed_step is None:
            en = max(en, 1e-10)
            fac = _SAFETY * en ** (-_ALPHA) * err_prev ** _BETA
            fac = min(_MAX_FACTOR, max(_MIN_FACTOR, fac))
            err_prev = en
            # a step shortened to land on a target should not shrink the next one
            h = max(h, h_try) * fac if hit else h_try * fac
        while ti < len(targets) and targets[ti] == z:
            out[ti] = y
            ti += 1
    return out, zs_rec, ys_rec, steps, rejected


def solve_system(M: Callable, z0: float, Y0, zs, cfg: SolverConfig | None = None,
                 rhs: Callable | None = None) -> OdeSolution:
    """Solve ``Y' = M(z) Y`` (or ``Y' = rhs(z, Y)``) from ``z0``.

    ``zs`` may lie on both sides of ``z0``; each side is integrated outward
    independently.  ``Y0`` may be a vector or a matrix (columns solved
    together as one flattened state).
    """
    cfg = cfg or SolverConfig()
    Y0 = np.asarray(Y0, dtype=complex)
    shape = Y0.shape
    if rhs is None:
        if Y0.ndim == 1:
            def f(z, y):
                return M(z) @ y
        else:
            def f(z, y):
                return (M(z) @ y.reshape(shape)).ravel()
    else:
        f = rhs
    zs = np.asarray(zs, dtype=float)
    flat = Y0.ravel()
    out = np.empty((zs.size, flat.size), dtype=complex)
    rec_z, rec_y = [], []
    n_steps = n_rej = 0
    for side in (-1.0, 1.0):
        mask = (zs - z0) * side > 0 if side > 0 else (zs - z0) * side >= 0
        idx = np.nonzero(mask)[0]
        if idx.size == 0:
            continue
        order = idx[np.argsort(side * zs[idx], kind="stable")]
        vals, rz, ry, st, rj = _integrate_one_side(f, z0, flat, zs[order], cfg, cfg.dense_output)
        out[order] = vals
        rec_z += rz
        rec_y += ry
        n_steps += st
        n_rej += rj
    sol = OdeSolution(z=zs, y=out.reshape((zs.size,) + shape), n_steps=n_steps, n_rejected=n_rej)
    if cfg.dense_output:
        order = np.argsort(rec_z, kind="stable")
        sol.steps_z = np.asarray(rec_z)[order]
        sol.steps_y = np.asarray(rec_y).reshape((-1,) + shape)[order] if rec_y else None
    return sol


def solve(problem: OdeProblem, zs, cfg: SolverConfig | None = None) -> np.ndarray:
    """Return an ``(n, 2)`` array of ``(y, y')`` at the abscissae ``zs``."""
    y0 = np.array([problem.y0, problem.dy0], dtype=complex)
    sol = solve_system(None, problem.z0, y0, zs, cfg, rhs=problem.rhs)
    return sol.y


def _fd_derivatives(z, y):
    """Fourth-order central differences on a uniform grid (interior points)."""
    h = np.diff(z).mean()
    y = np.asarray(y)
    d1 = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    d2 = (-y[:-4] + 16 * y[1:-3] - 30 * y[2:-2] + 16 * y[3:-1] - y[4:]) / (12 * h * h)
    return d1, d2


def residual(problem: OdeProblem, samples) -> float:
    """Normalized residual ``max|y'' - B1 y' - B2 y| / max|y''|`` of sampled
    values, derivatives taken by finite differences.

    ``samples`` is a sequence of ``(z, y)`` pairs or an ``(n, 2)`` array, on
    an approximately uniform grid.  Identically zero samples give 0.
    """
    s = np.asarray(samples, dtype=complex)
    if s.ndim != 2 or s.shape[0] < 5:
        raise TooFewSamples("residual needs at least 5 samples")
    z = s[:, 0].real
    y = s[:, 1]
    order = np.argsort(z)
    z, y = z[order], y[order]
    dz = np.diff(z)
    if np.any(dz <= 0) or dz.max() > 1.01 * dz.min():
        raise ValueError("residual expects strictly increasing, uniformly spaced samples")
    d1, d2 = _fd_derivatives(z, y)
    zi, yi = z[2:-2], y[2:-2]
    r = d2 - problem.B1(zi) * d1 - problem.B2(zi) * yi
    scale = np.max(np.abs(d2))
    rmax = np.max(np.abs(r))
    if rmax == 0:
        return 0.0
    if scale == 0:
        # a non-solution with flat samples: fall back to the largest term
        scale = max(np.max(np.abs(problem.B2(zi) * yi)), np.max(np.abs(yi)))
    return float(rmax / scale)
