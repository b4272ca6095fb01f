"""Spin phase diagram of the translation-invariant Hartree-Fock gas."""

from __future__ import annotations

from importlib import metadata

from .kernels import RieszPotential, coulomb, energy_coefficients
from .radial.solver import SolverConfig, solve_at_density, solve_middle, solve_pair
from .zero_temperature import classify_transition, nospin_energy_T0, scan_polarization

try:
    __version__ = metadata.version("artifact")
except metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0+unknown"

__all__ = [
    "RieszPotential",
    "coulomb",
    "energy_coefficients",
    "SolverConfig",
    "solve_at_density",
    "solve_pair",
    "solve_middle",
    "classify_transition",
    "nospin_energy_T0",
    "scan_polarization",
    "__version__",
]
