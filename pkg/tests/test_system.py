import numpy as np
import pytest

from nopair.system import (ClampedNucleus, ECGPrimitive, InvalidSystem, PhysicalConstants,
                           StateSelector, SystemSpec, helium_like, pair_exponents, preset,
                           validate_system)


def test_presets_geometry():
    h2 = preset("H2")
    d = np.diff(h2.position_array, axis=0)
    assert np.linalg.norm(d) == pytest.approx(1.4)
    assert h2.is_linear_z() and not h2.is_atom()
    h3 = preset("h3+")
    P = h3.position_array
    sides = [np.linalg.norm(P[i] - P[j]) for i, j in ((0, 1), (1, 2), (0, 2))]
    assert np.allclose(sides, 1.65)
    assert preset("he(2s)").state.index == 2
    assert preset("he").is_atom()
    assert not h3.is_linear_z()


def test_unknown_preset():
    with pytest.raises(InvalidSystem):
        preset("li")


@pytest.mark.parametrize("spec", [
    SystemSpec(nuclei=()),
    SystemSpec(nuclei=(ClampedNucleus(-1.0),)),
    SystemSpec(nuclei=(ClampedNucleus(1.0), ClampedNucleus(1.0))),
    SystemSpec(nuclei=(ClampedNucleus(1.0),), masses=(1.0, -1.0)),
    SystemSpec(nuclei=(ClampedNucleus(1.0),), state=StateSelector("S", "triplet", 1)),
    SystemSpec(nuclei=(ClampedNucleus(1.0),), state=StateSelector("S", "singlet", 0)),
])
def test_invalid_systems(spec):
    with pytest.raises(InvalidSystem):
        validate_system(spec)


def test_nuclei_canonical_order():
    a = SystemSpec(nuclei=(ClampedNucleus(2.0, (0, 0, 1)), ClampedNucleus(1.0, (0, 0, -1))))
    b = SystemSpec(nuclei=(ClampedNucleus(1.0, (0, 0, -1)), ClampedNucleus(2.0, (0, 0, 1))))
    assert validate_system(a) == validate_system(b)


def test_spec_round_trip():
    for name in ("h2", "heh+", "h3+", "he", "he(2s)"):
        s = preset(name)
        assert SystemSpec.loads(s.dumps()) == s


def test_constants():
    c = PhysicalConstants()
    assert c.c == pytest.approx(137.035999084)
    assert c.alpha * c.c == pytest.approx(1.0)
    assert c.scaled(10.0).c == pytest.approx(10 * c.c)


def test_ecg_validation_and_transforms(rng):
    with pytest.raises(InvalidSystem):
        ECGPrimitive([[1.0, 2.0], [2.0, 1.0]])           # not positive definite
    with pytest.raises(InvalidSystem):
        ECGPrimitive([[1.0, 0.5], [0.4, 1.0]])           # not symmetric
    g = ECGPrimitive(pair_exponents(1.0, 2.0, 0.3), rng.normal(size=(2, 3)))
    assert np.allclose(g.permuted().permuted().A, g.A)
    assert np.allclose(g.permuted().s, g.s[::-1])
    assert np.allclose(g.translated([1, 2, 3]).s - g.s, [1, 2, 3])


def test_pair_exponents_form():
    A = pair_exponents(1.0, 2.0, 0.5)
    # exp(-a1 r1^2 - a2 r2^2 - a12 r12^2)
    r1, r2 = np.array([0.3, 0.1, -0.2]), np.array([-0.5, 0.4, 0.7])
    q = sum(A[i, j] * (r1, r2)[i] @ (r1, r2)[j] for i in range(2) for j in range(2))
    assert q == pytest.approx(1.0 * r1 @ r1 + 2.0 * r2 @ r2 + 0.5 * (r1 - r2) @ (r1 - r2))


def test_helium_like_name():
    assert helium_like(3).name == "Z3"
