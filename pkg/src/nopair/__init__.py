"""Variational no-pair Dirac-Coulomb(-Breit) energies for two-electron systems."""
from .system import (ClampedNucleus, ECGPrimitive, InvalidSystem, PhysicalConstants,
                     StateSelector, SystemSpec, preset, validate_system)

__version__ = "0.1.0"

__all__ = ["ClampedNucleus", "ECGPrimitive", "InvalidSystem", "PhysicalConstants",
           "StateSelector", "SystemSpec", "preset", "validate_system"]
