"""One-electron (hydrogen-like) Dirac energies in a kinetically balanced s-Gaussian basis."""
from __future__ import annotations

import numpy as np

from .dirac import OperatorKind, assemble
from .eigensolve import lowest_eigenvalues
from .system import ECGPrimitive, PhysicalConstants, helium_like


def one_electron_basis(exponents) -> list[ECGPrimitive]:
    return [ECGPrimitive([[float(a)]]) for a in exponents]


def one_electron_energy(Z: float, exponents, constants: PhysicalConstants | None = None,
                        cutoff: float = 1e-13) -> float:
    """Lowest positive-energy Dirac eigenvalue (rest mass removed) for charge Z.

    In the one-electron m_j = 1/2 s-wave block the positive- and negative-energy
    branches are separated by the -c^2 line, so no projector is needed.
    """
    system = helium_like(Z, constants=constants or PhysicalConstants())
    om = assemble(system, one_electron_basis(exponents), OperatorKind.NON_INTERACTING, n=1)
    c = system.constants.c
    vals = lowest_eigenvalues(om.hamiltonian(0.0).real, om.S.real, om.dim, cutoff)
    return float(vals[vals > -c * c][0])


def even_tempered(n: int, lo: float, hi: float) -> np.ndarray:
    return np.geomspace(lo, hi, n)


DEFAULT_RANGE = (2e-3, 1e7)


def default_exponents(Z: float, n: int = 50, span=DEFAULT_RANGE) -> np.ndarray:
    """Even-tempered exponents covering ``span`` in units of Z^2.

    Tighter or looser end points do not help at this size: with exponents
    beyond ~1e7 Z^2 the matrix elements reach 1e7 E_h and double-precision
    rounding (~1e-10 E_h) exceeds the remaining basis error.
    """
    return even_tempered(n, span[0] * Z * Z, span[1] * Z * Z)
