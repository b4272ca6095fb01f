"""Positive-temperature radial solver for the spinless self-consistency equation in d = 3."""

from .convolution import ConvolutionOperator
from .grid import GridSpec, RadialGrid
from .solver import (
    BracketError,
    ConvergenceError,
    FixedPointResult,
    MonotonicityError,
    Occupation,
    SolverConfig,
    free_energy,
    solve_at_density,
    solve_extremal,
    solve_middle,
    solve_pair,
)

__all__ = [
    "ConvolutionOperator",
    "GridSpec",
    "RadialGrid",
    "BracketError",
    "ConvergenceError",
    "FixedPointResult",
    "MonotonicityError",
    "Occupation",
    "SolverConfig",
    "free_energy",
    "solve_at_density",
    "solve_extremal",
    "solve_middle",
    "solve_pair",
]
