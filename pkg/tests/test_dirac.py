import numpy as np
import pytest

from nopair.dirac import (OperatorKind, OperatorMatrices, Sector, assemble, detect_sector,
                          generators, kb_block)
from nopair.hydrogenic import one_electron_energy
from nopair.integrals import PairBatch, nonrel_pair_terms
from nopair.projector import classify_noninteracting, projected_energy
from nopair.system import ECGPrimitive, InvalidSystem, PhysicalConstants, SystemSpec, preset


def hermiticity_error(M):
    return np.abs(M - M.conj().T).max() / np.abs(M).max()


@pytest.mark.parametrize("name,fixture", [("he", "he_basis"), ("h2", "h2_basis")])
def test_hermitian_at_zero_angle(request, name, fixture):
    basis = request.getfixturevalue(fixture)
    om = assemble(preset(name), basis, OperatorKind.DCB)
    for part, M in om.parts.items():
        if np.any(M):
            assert hermiticity_error(M) < 1e-12, part
    assert hermiticity_error(om.hamiltonian(0.0)) < 1e-12


def test_sector_detection(he_basis, h2_basis):
    assert detect_sector(preset("he"), he_basis) is Sector.ATOM_J0
    assert detect_sector(preset("h2"), h2_basis) is Sector.LINEAR_OMEGA0
    assert detect_sector(preset("h3+"), h2_basis) is Sector.FULL
    assert generators(Sector.ATOM_J0).shape == (16, 4)


def test_charge_free_limit_is_noninteracting(he_basis, h2_basis):
    for name, basis in (("he", he_basis), ("h2", h2_basis)):
        sysm = preset(name)
        free = assemble(sysm, basis, OperatorKind.DC, pair_charge=0.0)
        ni = assemble(sysm, basis, OperatorKind.NON_INTERACTING)
        for theta in (0.0, 0.15):
            assert np.array_equal(free.hamiltonian(theta), ni.hamiltonian(theta))
        assert np.array_equal(free.S, ni.S)


def test_small_component_metric(rng):
    # <sigma_2.p_2 g_i | sigma_2.p_2 g_j> / (2c)^2 = 2 T_ij / (4 c^2) on the spin diagonal
    he = preset("he")
    gi = ECGPrimitive([[1.3, 0.2], [0.2, 0.7]], rng.normal(scale=0.3, size=(2, 3)))
    gj = ECGPrimitive([[0.9, -0.1], [-0.1, 1.6]], rng.normal(scale=0.3, size=(2, 3)))
    S = kb_block(he, gi, gj, part="S")
    batch = PairBatch.from_primitives([gi], [gj])
    c = he.constants.c
    # kinetic energy of particle 2 alone (a huge mass removes particle 1)
    _, T2, _ = nonrel_pair_terms(batch, [2.0], [[0, 0, 0]], masses=[1e300, 1.0])
    ls_up_up = 4 * 1 + 0            # pattern ls, spins up-up
    assert S[ls_up_up, ls_up_up].real == pytest.approx(2 * T2[0] / (4 * c * c), rel=1e-12)
    ss = 4 * 3
    assert S[0, 0].real == pytest.approx(batch.overlap[0], rel=1e-13)
    assert abs(S[ss, ss]) > 0


def test_mass_and_nuclear_repulsion_parts(h2_basis):
    h2 = preset("h2")
    om = assemble(h2, h2_basis[:4], OperatorKind.DC)
    assert np.allclose(om.parts["nn"], h2.nuclear_repulsion() * om.S, rtol=1e-14, atol=0)
    m = om.m
    c2 = h2.constants.c ** 2
    S = om.S.reshape(4, m, 4, m)
    M = om.parts["mass"].reshape(4, m, 4, m)
    # Omega0 generators: components 2*lam, 2*lam+1; lam = 3 is small-small
    assert np.allclose(M[:, 6:, :, 6:], -4 * c2 * S[:, 6:, :, 6:], rtol=1e-13)
    assert not np.any(M[:, :2, :, :2])


def test_noninteracting_product_basis_gives_twice_one_electron():
    Z = 2.0
    exps = np.geomspace(0.05, 2e3, 7)
    basis = [ECGPrimitive([[a, 0.0], [0.0, b]]) for i, a in enumerate(exps) for b in exps[i:]]
    he = preset("he")
    om = assemble(he, basis, OperatorKind.NON_INTERACTING)
    cl = classify_noninteracting(om)
    phys = [e for e, lab in zip(cl.real_energies, cl.real_labels) if lab.value == "PhysicalPositive"]
    e1 = one_electron_energy(Z, exps)
    assert min(phys) == pytest.approx(2 * e1, rel=1e-10)


def test_sector_reduction_matches_full_atom(he_basis):
    he = preset("he")
    b = he_basis[:5]
    for kind in (OperatorKind.DC, OperatorKind.DCB):
        red = projected_energy(he, b, kind)
        full = projected_energy(he, b, kind, matrices=assemble(he, b, kind, sector=Sector.FULL))
        assert full.energy == pytest.approx(red.energy, abs=1e-9)


def test_sector_reduction_matches_full_linear(h2_basis):
    h2 = preset("h2")
    b = h2_basis[:4]
    red = projected_energy(h2, b, OperatorKind.DCB)
    full = projected_energy(h2, b, OperatorKind.DCB,
                            matrices=assemble(h2, b, OperatorKind.DCB, sector=Sector.FULL))
    assert full.energy == pytest.approx(red.energy, abs=1e-9)


def test_breit_shift_scales_as_inverse_c_squared(he_basis):
    he = preset("he")
    b = he_basis[:8]
    shifts = []
    for f in (1.0, 10.0):
        s = he.with_constants(he.constants.scaled(f))
        shifts.append(projected_energy(s, b, OperatorKind.DCB).energy
                      - projected_energy(s, b, OperatorKind.DC).energy)
    assert shifts[0] > 0
    assert shifts[0] / shifts[1] == pytest.approx(100.0, rel=2e-3)


def test_truncation_equals_prefix_assembly(he_basis):
    he = preset("he")
    big = assemble(he, he_basis, OperatorKind.DCB)
    small = assemble(he, he_basis[:5], OperatorKind.DCB)
    for p in small.parts:
        assert np.allclose(big.truncated(5).parts[p], small.parts[p], rtol=1e-13, atol=1e-13)


def test_dump_round_trip_and_checksum(h2_basis):
    om = assemble(preset("h2"), h2_basis[:3], OperatorKind.DCB, theta=0.1)
    data = om.dumps()
    back = OperatorMatrices.loads(data)
    assert back.theta == 0.1 and back.kind is OperatorKind.DCB and back.sector is om.sector
    for p in om.parts:
        assert np.array_equal(back.parts[p], om.parts[p])
    assert data[:8] == b"NPDIRAC1"
    bad = bytearray(data)
    bad[100] ^= 1
    with pytest.raises(ValueError, match="checksum"):
        OperatorMatrices.loads(bytes(bad))


def test_ccr_scaling_of_hamiltonian(he_basis):
    om = assemble(preset("he"), he_basis[:3], OperatorKind.DC)
    th = 0.2
    H = om.hamiltonian(th)
    expected = np.exp(-1j * th) * (om.hamiltonian(0.0) - om.parts["mass"]) + om.parts["mass"]
    assert np.allclose(H, expected, rtol=1e-14, atol=1e-12)


def test_assembly_errors(he_basis):
    he = preset("he")
    with pytest.raises(InvalidSystem):
        assemble(he, he_basis, theta=0.8)
    heavy = SystemSpec(nuclei=he.nuclei, masses=(1.0, 2.0))
    with pytest.raises(InvalidSystem):
        assemble(heavy, he_basis)
    with pytest.raises(InvalidSystem):
        assemble(he, [ECGPrimitive([[1.0]])], OperatorKind.DCB, n=1)


def test_operator_kind_parse():
    assert OperatorKind.parse("DiracCoulombBreit") is OperatorKind.DCB
    assert OperatorKind.parse("dc") is OperatorKind.DC
    assert OperatorKind.parse("NonInteracting") is OperatorKind.NON_INTERACTING
    with pytest.raises(ValueError):
        OperatorKind.parse("QED")
