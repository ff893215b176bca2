"""Heun functions from Volterra resolvent kernels, with a Teukolsky radial
reduction and an independent ODE reference solver."""

from .errors import *
from .heun import (  # noqa: F401
    HeunClass,
    HeunEvaluation,
    HeunParams,
    InitialData,
    MeshConfig,
    SeriesResult,
    coefficients,
    evaluate,
    evaluate_order_m,
    fundamental_pair,
    kernel_K1,
    kernel_K2,
    series,
)
from .quadrature import Grid, Interval, build_grid, cumulative_integral  # noqa: F401
from .volterra import DiscreteKernel, compose, neumann_series, resolve_second_kind  # noqa: F401

__version__ = "0.1.0"
