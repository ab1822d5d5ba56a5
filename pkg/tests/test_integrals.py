import numpy as np
import pytest
from scipy.special import gammainc, gamma
from scipy.spatial.transform import Rotation

from nopair.integrals import (UNITY, DerivativeDressing, IntegralError, PairBatch,
                              ScaledIntegralContext, boys, contact_inter, contact_nucleus,
                              inter_coulomb, inter_linear, kernel_integral, nonrel_pair_terms,
                              nuclear_attraction, overlap, permuted_integral)
from nopair.oracle import quadrature_oracle
from nopair.system import ECGPrimitive

from sampling import random_ecg, sample_case


def test_boys_against_incomplete_gamma():
    T = np.array([1e-12, 1e-3, 0.5, 3.0, 17.0, 45.0, 300.0])
    F = boys(4, T)
    for m in range(5):
        ref = gamma(m + 0.5) * gammainc(m + 0.5, T) / (2 * T ** (m + 0.5))
        assert np.allclose(F[m], ref, rtol=1e-13)


def test_overlap_closed_form(rng):
    g = random_ecg(rng, shifted=False)
    ref = np.pi ** 3 / np.linalg.det(2 * g.A) ** 1.5
    assert overlap(g, g) == pytest.approx(ref, rel=1e-14)


def test_oracle_agreement_sample(rng):
    for _ in range(12):
        gi, gj, K, d = sample_case(rng)
        a = kernel_integral(gi, gj, K, d)
        o = quadrature_oracle(gi, gj, K, d)
        assert abs(a - o) <= 1e-9 * abs(o) + 1e-14


@pytest.mark.parametrize("which", ["nucleus", "inter"])
def test_contact_against_broadened_oracle(rng, which):
    gi, gj = random_ecg(rng), random_ecg(rng)
    K = contact_nucleus([0.1, -0.2, 0.3], 1) if which == "nucleus" else contact_inter()
    assert kernel_integral(gi, gj, K).real == pytest.approx(
        quadrature_oracle(gi, gj, K).real, rel=1e-6)


def test_hermitian_pair_symmetry(rng):
    gi, gj = random_ecg(rng), random_ecg(rng)
    d = DerivativeDressing(((0, 1), (1, 2)), ((1, 0),))
    dt = DerivativeDressing(d.ket, d.bra)
    for K in (UNITY, inter_coulomb(), nuclear_attraction([0.2, 0, 0], 0)):
        assert kernel_integral(gi, gj, K, d) == pytest.approx(
            np.conj(kernel_integral(gj, gi, K, dt)), rel=1e-13)


def test_translation_invariance(rng):
    gi, gj = random_ecg(rng), random_ecg(rng)
    R = np.array([0.3, -0.1, 0.5])
    T = np.array([1.7, -2.2, 0.9])
    d = DerivativeDressing(((0, 0),), ((1, 2), (0, 1)))
    for K, Kt in [(nuclear_attraction(R, 1), nuclear_attraction(R + T, 1)),
                  (inter_linear(), inter_linear()), (UNITY, UNITY)]:
        a = kernel_integral(gi, gj, K, d)
        b = kernel_integral(gi.translated(T), gj.translated(T), Kt, d)
        assert abs(a - b) <= 1e-12 * abs(a)


def test_rotation_invariance_of_scalars(rng):
    gi, gj = random_ecg(rng), random_ecg(rng)
    Rm = Rotation.from_rotvec([0.4, -1.1, 0.7]).as_matrix()
    R = np.array([0.3, -0.1, 0.5])

    def p1p2(a, b, K):
        return sum(kernel_integral(a, b, K, DerivativeDressing(((0, c),), ((1, c),)))
                   for c in range(3))

    for K, Kr in [(nuclear_attraction(R, 0), nuclear_attraction(Rm @ R, 0)),
                  (inter_coulomb(), inter_coulomb())]:
        a = p1p2(gi, gj, K)
        b = p1p2(gi.rotated(Rm), gj.rotated(Rm), Kr)
        assert abs(a - b) <= 1e-12 * abs(a)


def test_momentum_is_derivative_of_overlap(rng):
    # <g_i| p_x |g_j> = -i d/dx acting on g_j, checked by finite differences in the shift
    gi, gj = random_ecg(rng), random_ecg(rng)
    d = DerivativeDressing((), ((1, 2),))
    h = 1e-5
    e = np.zeros((2, 3))
    e[1, 2] = h
    # shifting the ket centre by +h equals translating the function: g(r - h) -> -d/dr
    fd = (overlap(gi, ECGPrimitive(gj.A, gj.s + e)) - overlap(gi, ECGPrimitive(gj.A, gj.s - e))) / (2 * h)
    assert kernel_integral(gi, gj, UNITY, d) == pytest.approx(1j * fd, rel=1e-8)


def test_permutation(rng):
    gi, gj = random_ecg(rng), random_ecg(rng)
    K = inter_coulomb()
    assert permuted_integral(gi, gj, K) == pytest.approx(kernel_integral(gi.permuted(), gj, K),
                                                         rel=1e-13)


def test_ccr_scaling_factor():
    ctx = ScaledIntegralContext(0.2)
    assert ctx.factor(inter_coulomb()) == pytest.approx(np.exp(-0.2j))
    assert ctx.factor(UNITY, DerivativeDressing(((0, 0),), ((0, 0),))) == pytest.approx(1.0)
    assert ctx.factor(inter_linear(), DerivativeDressing((), (), (0, 1))) == pytest.approx(
        np.exp(-0.2j))
    with pytest.raises(IntegralError):
        ScaledIntegralContext(1.0)


def test_derivative_order_limit():
    with pytest.raises(IntegralError):
        DerivativeDressing(((0, 0),) * 3, ((0, 0),) * 2)


def test_nonrel_fast_path_matches_general(rng):
    gi, gj = random_ecg(rng), random_ecg(rng)
    Z, R = 1.5, np.array([0.1, 0.2, -0.3])
    batch = PairBatch.from_primitives([gi], [gj])
    S, T, V = nonrel_pair_terms(batch, [Z], [R])
    t = sum(kernel_integral(gi, gj, UNITY, DerivativeDressing(((k, c),), ((k, c),)))
            for k in range(2) for c in range(3)).real / 2
    v = (-Z * (kernel_integral(gi, gj, nuclear_attraction(R, 0))
               + kernel_integral(gi, gj, nuclear_attraction(R, 1)))
         + kernel_integral(gi, gj, inter_coulomb())).real
    assert T[0] == pytest.approx(t, rel=1e-12)
    assert V[0] == pytest.approx(v, rel=1e-12)
