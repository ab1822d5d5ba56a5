import numpy as np
import pytest

from nopair.breit_pauli import dirac_energy, one_electron_exact_gap
from nopair.hydrogenic import default_exponents, even_tempered, one_electron_energy
from nopair.system import PhysicalConstants


@pytest.mark.parametrize("Z", [1.0, 2.0, 5.0])
def test_kinetically_balanced_basis_reaches_dirac_energy(Z):
    e = one_electron_energy(Z, default_exponents(Z))
    assert abs(e - dirac_energy(Z)) < 1e-9 * max(1.0, Z)


def test_variational_from_above_in_small_basis():
    # kinetic balance keeps the positive branch bounded from below
    exact = dirac_energy(1.0)
    for n in (10, 20, 30):
        e = one_electron_energy(1.0, even_tempered(n, 1e-2, 1e4))
        assert e > exact - 1e-12


def test_nonrelativistic_limit():
    big_c = PhysicalConstants(1e4)
    e = one_electron_energy(1.0, default_exponents(1.0), constants=big_c)
    # the remaining error is the Gaussian basis' nonrelativistic incompleteness
    assert dirac_energy(1.0, constants=big_c) == pytest.approx(-0.5, abs=1e-8)
    assert e == pytest.approx(-0.5, abs=1e-6)


def test_exponent_grid():
    x = even_tempered(5, 1.0, 1e4)
    assert np.allclose(np.diff(np.log10(x)), 1.0)
    assert default_exponents(2.0)[0] == pytest.approx(4 * 2e-3)


def test_gap_magnitudes():
    _, _, g1 = one_electron_exact_gap(1.0)
    _, _, g2 = one_electron_exact_gap(2.0)
    assert g1 < 0 and g2 < 0
    assert abs(g1) == pytest.approx(0.18, abs=0.01)
    assert abs(g2) == pytest.approx(11.3, abs=0.1)
