"""Viscous Cahn–Larché system with rate-dependent unidirectional damage.

Incremental-minimisation solver and verification tools on uniform
structured grids.
"""

from .energetics import EnergyBreakdown, State, total_energy
from .grid import GridSpec
from .material import ModelParams

__all__ = ["EnergyBreakdown", "GridSpec", "ModelParams", "State", "total_energy"]
__version__ = "0.1.0"
