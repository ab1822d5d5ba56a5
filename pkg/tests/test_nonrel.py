import numpy as np
import pytest

from nopair.nonrel import (BasisParameterization, OptimizationError, _ReducedProblem,
                           dumps_basis, energy_gradient, load_basis, loads_basis,
                           nonrel_energy, nonrel_matrices, optimize_basis, refine_all,
                           save_basis)
from nopair.system import ECGPrimitive, preset

HE_EXACT = -2.903724377034
H2_EXACT = -1.174475714220


def test_he_energy_is_upper_bound(he_basis):
    E = nonrel_energy(preset("he"), he_basis)
    assert HE_EXACT < E < -2.90


def test_h2_energy_is_upper_bound(h2_basis):
    E = nonrel_energy(preset("h2"), h2_basis)
    assert H2_EXACT < E < -1.16


def test_matrices_symmetric_and_singlet(he_basis):
    S, H = nonrel_matrices(preset("he"), he_basis)
    assert np.allclose(S, S.T, rtol=0, atol=1e-15 * abs(S).max())
    assert np.allclose(H, H.T, rtol=0, atol=1e-14 * abs(H).max())
    # the symmetrised basis is unchanged by relabelling the electrons
    S2, H2 = nonrel_matrices(preset("he"), [g.permuted() for g in he_basis])
    assert np.allclose(S2, S, rtol=1e-13) and np.allclose(H2, H, rtol=1e-13)


def test_interlacing_on_nested_bases(he_basis):
    he = preset("he")
    energies = [nonrel_energy(he, he_basis[:k]) for k in range(3, len(he_basis) + 1)]
    assert np.all(np.diff(energies) <= 1e-14)


def test_interlacing_excited_root(he_basis):
    he2 = preset("he(2s)")
    e = [nonrel_energy(he2, he_basis[:k]) for k in range(4, len(he_basis) + 1)]
    assert np.all(np.diff(e) <= 1e-14)


def test_reduced_problem_scores_match_direct(he_basis):
    he = preset("he")
    red = _ReducedProblem(he, he_basis[:-3], 1)
    scores = red.score(he_basis[-3:])
    for g, sc in zip(he_basis[-3:], scores):
        assert sc == pytest.approx(nonrel_energy(he, he_basis[:-3] + [g]), abs=1e-12)


def test_reduced_problem_excited_root(he_basis):
    he2 = preset("he(2s)")
    red = _ReducedProblem(he2, he_basis[:-1], 2)
    assert red.score(he_basis[-1:])[0] == pytest.approx(nonrel_energy(he2, he_basis), abs=1e-11)


def test_optimizer_deterministic():
    he = preset("he")
    a, ra = optimize_basis(he, 6, seed=3, refine_cycles=1, max_evals=10)
    b, rb = optimize_basis(he, 6, seed=3, refine_cycles=1, max_evals=10)
    assert dumps_basis(a) == dumps_basis(b)
    assert ra.energies == rb.energies


def test_powell_refinement_lowers_energy():
    he = preset("he")
    b, rec = optimize_basis(he, 5, seed=1, refine_cycles=1, max_evals=30, refine="powell")
    assert rec.energies[-1] <= rec.energies[-2] + 1e-15


def test_unknown_refinement():
    with pytest.raises(OptimizationError):
        optimize_basis(preset("he"), 3, refine="newton")


@pytest.mark.parametrize("name", ["he", "h2", "h3+"])
def test_parameterization_round_trip(rng, name):
    param = BasisParameterization.for_system(preset(name))
    v = rng.normal(size=param.size)
    g = param.from_vector(v)
    assert np.allclose(param.to_vector(g), v, rtol=1e-13, atol=1e-13)


def test_parameterization_shift_modes():
    assert BasisParameterization.for_system(preset("he")).shift_mode == "none"
    assert BasisParameterization.for_system(preset("h2")).shift_mode == "z"
    assert BasisParameterization.for_system(preset("h3+")).shift_mode == "xy"


def test_energy_gradient_matches_finite_differences(h2_basis):
    h2 = preset("h2")
    param = BasisParameterization.for_system(h2)
    v = np.array([param.to_vector(g) for g in h2_basis])
    E, g, pen = energy_gradient(h2, param, v, 1)
    assert pen == 0.0
    h = 1e-6
    for i, k in [(0, 0), (3, 1), (7, 2), (5, 3), (9, 4)]:
        vp, vm = v.copy(), v.copy()
        vp[i, k] += h
        vm[i, k] -= h
        fd = (nonrel_energy(h2, [param.from_vector(x) for x in vp])
              - nonrel_energy(h2, [param.from_vector(x) for x in vm])) / (2 * h)
        assert g[i, k] == pytest.approx(fd, rel=1e-4, abs=1e-9)


def test_overlap_penalty_gradient(he_basis):
    he = preset("he")
    param = BasisParameterization.for_system(he)
    v = np.array([param.to_vector(g) for g in he_basis])

    def f(x):
        E, _, p = energy_gradient(he, param, x, 1, overlap_limit=0.5)
        return E + p

    _, g, pen = energy_gradient(he, param, v, 1, overlap_limit=0.5)
    assert pen > 0
    h = 1e-6
    for i, k in [(0, 0), (4, 1), (9, 2)]:
        vp, vm = v.copy(), v.copy()
        vp[i, k] += h
        vm[i, k] -= h
        assert g[i, k] == pytest.approx((f(vp) - f(vm)) / (2 * h), rel=1e-4, abs=1e-9)


def test_refine_all_does_not_raise_energy(he_basis):
    he = preset("he")
    before = nonrel_energy(he, he_basis)
    _, after = refine_all(he, he_basis, maxiter=5)
    assert after <= before + 1e-12


def test_checkpoint_round_trip_is_exact(tmp_path, h2_basis):
    h2 = preset("h2")
    E = nonrel_energy(h2, h2_basis)
    path = tmp_path / "h2.txt"
    save_basis(path, h2_basis, h2, E, {"seed": 5})
    basis, meta = load_basis(path)
    assert basis == h2_basis
    assert meta["energy"] == E
    assert nonrel_energy(h2, basis) == E
    assert meta["system"] == h2


def test_checkpoint_rejects_garbage():
    with pytest.raises(ValueError):
        loads_basis("not a checkpoint\n1 2 3\n")
