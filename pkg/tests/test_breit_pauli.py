import numpy as np
import pytest
from scipy.special import dawsn

from nopair.breit_pauli import (PerturbationError, _product_pairs, dirac_energy, epsilon4,
                                expectation_values, one_electron_exact_gap, pt4_energy)
from nopair.integrals import (UNITY, DerivativeDressing, contact_inter, contact_nucleus,
                              inter_coulomb, kernel_integral, nuclear_attraction)
from nopair.nonrel import nonrel_solution
from nopair.system import ECGPrimitive, PhysicalConstants, preset

from sampling import random_ecg


def _laplacian_dressing(particles):
    # <g_i| K |p_j . p_j g_j> summed over the listed particles and components
    return [DerivativeDressing((), ((j, a), (j, a))) for j in particles for a in range(3)]


def test_p4_squared_equals_direct(rng):
    for _ in range(6):
        gi, gj = random_ecg(rng), random_ecg(rng)
        for i in range(2):
            sq = direct = 0.0
            for a in range(3):
                for b in range(3):
                    sq += kernel_integral(gi, gj, UNITY,
                                          DerivativeDressing(((i, a), (i, a)), ((i, b), (i, b))))
                    direct += kernel_integral(gi, gj, UNITY, DerivativeDressing(
                        (), ((i, a), (i, a), (i, b), (i, b))))
            assert abs(sq - direct) <= 1e-9 * abs(direct)


def _gaussian_moments(gi, gj, J, R):
    """Overlap, exponent and centre distance of the u = J^T r distribution."""
    C = gi.A + gj.A
    e = np.linalg.solve(C, gi.A @ gi.s + gj.A @ gj.s)
    beta = 1.0 / (J @ np.linalg.solve(C, J))
    d = np.linalg.norm(J @ e - R)
    return beta, d


def _inverse_square(S, beta, d):
    # <1/u^2> over a normalised Gaussian exp(-beta |u - d|^2): 2 beta D(x)/x
    x = np.sqrt(beta) * d
    return S * 2.0 * beta * (dawsn(x) / x if x > 1e-8 else 1.0)


def test_inverse_square_r12_against_dawson(rng):
    he = preset("he")
    for _ in range(4):
        gi, gj = random_ecg(rng), random_ecg(rng)
        out = _product_pairs(he, gi.A[None], gi.s[None], gj.A[None], gj.s[None], 48)
        S = kernel_integral(gi, gj).real
        beta, d = _gaussian_moments(gi, gj, np.array([1.0, -1.0]), np.zeros(3))
        assert out["WW"][0] == pytest.approx(_inverse_square(S, beta, d), rel=1e-10)


def test_nuclear_products_separable_case(rng):
    # uncorrelated shifted Gaussians factorise, so 1/(r_1 r_2) is a product of
    # one-electron Coulomb integrals and 1/r_i^2 has the Dawson form
    he = preset("he")
    Z = 2.0
    for _ in range(3):
        a = np.exp(rng.uniform(-1, 1, 2))
        b = np.exp(rng.uniform(-1, 1, 2))
        gi = ECGPrimitive(np.diag(a), rng.normal(scale=0.5, size=(2, 3)))
        gj = ECGPrimitive(np.diag(b), rng.normal(scale=0.5, size=(2, 3)))
        out = _product_pairs(he, gi.A[None], gi.s[None], gj.A[None], gj.s[None], 48)
        S = kernel_integral(gi, gj).real
        inv = [kernel_integral(gi, gj, nuclear_attraction((0, 0, 0), k)).real / S for k in range(2)]
        sq = [_inverse_square(S, *_gaussian_moments(gi, gj, np.eye(2)[k], np.zeros(3)))
              for k in range(2)]
        ref = Z * Z * (sq[0] + sq[1] + 2.0 * S * inv[0] * inv[1])
        assert out["DD"][0] == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("which", ["nucleus", "inter"])
def test_contact_gradient_identity(rng, which):
    """-4 pi w <delta> = 2 Re <g|K lap g> + 2 sum_j <grad_j g|K|grad_j g> for smooth g.

    Integrating the Laplacian of 1/|u| by parts holds for any smooth function;
    w is the number of electrons whose Laplacian acts on u.
    """
    g = random_ecg(rng)
    if which == "nucleus":
        K, delta, w = nuclear_attraction((0.1, -0.2, 0.3), 0), contact_nucleus((0.1, -0.2, 0.3), 0), 1
    else:
        K, delta, w = inter_coulomb(), contact_inter(), 2
    lap = -sum(kernel_integral(g, g, K, d) for d in _laplacian_dressing((0, 1))).real
    grad = sum(kernel_integral(g, g, K, DerivativeDressing(((j, a),), ((j, a),)))
               for j in range(2) for a in range(3)).real
    lhs = -4.0 * np.pi * w * kernel_integral(g, g, delta).real
    assert lhs == pytest.approx(2.0 * lap + 2.0 * grad, rel=1e-10)


def test_forms_share_energy_and_orbit_orbit(he_basis):
    he = preset("he")
    E1, d, _ = expectation_values(he, he_basis, form="direct")
    E2, r, _ = expectation_values(he, he_basis, form="regularized")
    assert E1 == E2
    assert d["p1Wp2"] == r["p1Wp2"]
    assert set(d) == set(r)


def test_regularized_quadrature_converged(he_basis):
    he = preset("he")
    _, a, _ = expectation_values(he, he_basis, npts=24)
    _, b, _ = expectation_values(he, he_basis, npts=64)
    for k in a:
        assert a[k] == pytest.approx(b[k], rel=1e-9)


@pytest.mark.parametrize("form", ["direct", "regularized"])
def test_inverse_c_squared_scaling(he_basis, form):
    he = preset("he")
    c1 = PhysicalConstants()
    c10 = PhysicalConstants(10.0 * c1.inverse_alpha)
    a = epsilon4(he, he_basis, constants=c1, form=form)
    b = epsilon4(he, he_basis, constants=c10, form=form)
    assert b.eps_dc == pytest.approx(a.eps_dc / 100.0, rel=1e-13)
    assert b.eps_breit == pytest.approx(a.eps_breit / 100.0, rel=1e-13)


def test_grouping_and_signs(he_basis):
    r = epsilon4(preset("he"), he_basis)
    assert r.eps_dcb == pytest.approx(r.eps_dc + r.eps_breit)
    assert r.eps_dc < 0 < r.eps_breit
    assert {c.group for c in r.contributions} == {"DC", "Breit"}


def test_two_centre_molecule(h2_basis):
    r = epsilon4(preset("h2"), h2_basis)
    assert r.eps_dc < 0 < r.eps_breit
    assert r.norm_residual < 1e-8


def test_errors(he_basis):
    he = preset("he")
    with pytest.raises(PerturbationError):
        expectation_values(he.with_state(spin="triplet"), he_basis)
    with pytest.raises(PerturbationError):
        expectation_values(he, he_basis, form="bogus")
    sol = nonrel_solution(he, he_basis)
    mixed = sol.vectors[:, 0].real + sol.vectors[:, 1].real
    with pytest.raises(PerturbationError):
        epsilon4(he, he_basis, coeffs=mixed)


def test_given_eigenvector_matches_default(he_basis):
    he = preset("he")
    sol = nonrel_solution(he, he_basis)
    a = epsilon4(he, he_basis)
    b = epsilon4(he, he_basis, coeffs=-3.0 * sol.vectors[:, 0].real)
    assert b.eps_dc == pytest.approx(a.eps_dc, rel=1e-12)


def test_one_electron_closed_forms():
    assert dirac_energy(0.0) == 0.0
    assert pt4_energy(0.0) == 0.0
    c = PhysicalConstants().c
    # 2p_{1/2} is degenerate with 2s_{1/2}
    assert dirac_energy(3.0, 2, -1) == pytest.approx(dirac_energy(3.0, 2, 1), rel=1e-14)
    e, p, gap = one_electron_exact_gap(1.0)
    assert gap == pytest.approx((e - p) * 1e9)
    # the remainder is of order Z^6 alpha^4
    _, _, gap2 = one_electron_exact_gap(2.0)
    assert gap2 / gap == pytest.approx(64.0, rel=0.01)
    with pytest.raises(PerturbationError):
        dirac_energy(1.0, 1, 1)
    with pytest.raises(PerturbationError):
        dirac_energy(1.01 * c)
