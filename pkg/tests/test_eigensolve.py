import numpy as np
import pytest
import scipy.linalg as sla

from nopair.eigensolve import (PencilError, PencilSolveOptions, lowest_eigenvalues,
                               orthogonalizer, solve_pencil)


def spd(rng, n, cond=1e3):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return Q @ np.diag(np.geomspace(1.0, 1.0 / cond, n)) @ Q.T


def test_hermitian_matches_scipy(rng):
    S = spd(rng, 12)
    H = rng.normal(size=(12, 12))
    H = H + H.T
    sol = solve_pencil(H, S)
    assert np.allclose(sol.values.real, sla.eigh(H, S, eigvals_only=True), atol=1e-10)
    assert sol.residuals.max() < 1e-10
    V = sol.vectors
    assert np.allclose(V.conj().T @ S @ V, np.eye(12), atol=1e-10)


def test_non_hermitian_left_vectors(rng):
    S = spd(rng, 10)
    H = rng.normal(size=(10, 10)) + 1j * rng.normal(size=(10, 10))
    sol = solve_pencil(H, S, PencilSolveOptions(left=True))
    assert np.all(np.diff(sol.values.real) >= 0)
    L, R = sol.left, sol.vectors
    assert np.allclose(L.conj().T @ S @ R, np.eye(10), atol=1e-8)
    assert np.allclose(L.conj().T @ H @ R, np.diag(sol.values), atol=1e-8)


def test_near_dependence_is_dropped(rng):
    B = rng.normal(size=(8, 5))
    S = B @ B.T + 1e-18 * np.eye(8)            # rank 5
    X, dropped = orthogonalizer(S, 1e-12)
    assert dropped == 3 and X.shape == (8, 5)
    assert np.allclose(X.T @ S @ X, np.eye(5), atol=1e-9)


def test_indefinite_metric_rejected(rng):
    S = np.diag([1.0, -0.5, 2.0])
    with pytest.raises(PencilError):
        solve_pencil(np.eye(3), S)


def test_lowest_eigenvalues(rng):
    S = spd(rng, 6)
    H = np.diag(np.arange(6.0))
    vals = lowest_eigenvalues(H, S, 2)
    assert len(vals) == 2
    assert np.allclose(vals, sla.eigh(H, S, eigvals_only=True)[:2])
