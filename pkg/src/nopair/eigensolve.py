"""Generalised eigenproblems H c = E S c with an ill-conditioned overlap.

The overlap is Jacobi-prescaled to unit diagonal and then canonically
orthogonalised: eigenvectors of the scaled overlap with eigenvalue below
``cutoff * max_eigenvalue`` are discarded, and the reduced standard problem is
solved with ``eigh`` (Hermitian H) or ``eig`` (general H).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


class PencilError(np.linalg.LinAlgError):
    """The overlap matrix is not Hermitian positive (semi)definite."""


@dataclass(frozen=True)
class PencilSolveOptions:
    cutoff: float = 1e-13           # relative overlap-eigenvalue threshold
    hermitian: bool | None = None    # None: decide from the matrix
    left: bool = False               # also return left eigenvectors (general case)
    check_tol: float = 1e-10         # Hermiticity tolerance for S (and H if hermitian)


@dataclass
class PencilSolution:
    values: np.ndarray          # sorted by real part
    vectors: np.ndarray         # columns, S-normalised (c^H S c = 1 for Hermitian H)
    left: np.ndarray | None     # left vectors with l^H S c = delta (general H)
    residuals: np.ndarray       # ||H c - E S c|| / (||H|| + |E| ||S||) / ||c||
    n_kept: int
    n_dropped: int
    X: np.ndarray               # orthogonalising transform (original basis -> reduced)

    def lowest(self, k: int = 1) -> np.ndarray:
        return self.values[:k]


def orthogonalizer(S: np.ndarray, cutoff: float = 1e-13) -> tuple[np.ndarray, int]:
    """Matrix X with X^H S X = 1 spanning the well-conditioned part of S."""
    S = np.asarray(S)
    diag = np.real(np.diag(S))
    if np.any(diag <= 0):
        raise PencilError("overlap has non-positive diagonal")
    D = 1.0 / np.sqrt(diag)
    Ss = S * D[:, None] * D[None, :]
    w, V = np.linalg.eigh(Ss)
    if w[-1] <= 0:
        raise PencilError("overlap is not positive")
    if w[0] < -1e3 * cutoff * w[-1] - 1e-12:
        raise PencilError(f"overlap is indefinite (min eigenvalue {w[0]:.3e})")
    keep = w > cutoff * w[-1]
    X = (D[:, None] * V[:, keep]) / np.sqrt(w[keep])[None, :]
    return X, int(np.count_nonzero(~keep))


def _is_hermitian(M, tol):
    scale = max(np.max(np.abs(M)), 1e-300)
    return np.max(np.abs(M - M.conj().T)) <= tol * scale


def solve_pencil(H: np.ndarray, S: np.ndarray,
                 options: PencilSolveOptions = PencilSolveOptions()) -> PencilSolution:
    H = np.asarray(H)
    S = np.asarray(S)
    if H.shape != S.shape or H.shape[0] != H.shape[1]:
        raise PencilError(f"shape mismatch {H.shape} vs {S.shape}")
    if not _is_hermitian(S, options.check_tol):
        raise PencilError("overlap is not Hermitian")
    S = 0.5 * (S + S.conj().T)
    hermitian = options.hermitian
    if hermitian is None:
        hermitian = _is_hermitian(H, options.check_tol)
    elif hermitian and not _is_hermitian(H, options.check_tol):
        raise PencilError("Hamiltonian declared Hermitian but is not")
    X, dropped = orthogonalizer(S, options.cutoff)
    Hr = X.conj().T @ H @ X
    left = None
    if hermitian:
        Hr = 0.5 * (Hr + Hr.conj().T)
        vals, U = np.linalg.eigh(Hr)
        vecs = X @ U
    else:
        if options.left:
            vals, UL, UR = sla.eig(Hr, left=True, right=True)
        else:
            vals, UR = sla.eig(Hr)
        order = np.lexsort((vals.imag, vals.real))
        vals, UR = vals[order], UR[:, order]
        vecs = X @ UR
        if options.left:
            UL = UL[:, order]
            # biorthonormalise: l^H S c = delta for nondegenerate pairs
            norms = np.einsum("ki,ki->i", UL.conj(), UR)
            UL = UL / norms.conj()[None, :]
            left = X @ UL
    Hn = np.linalg.norm(H, 2) if H.shape[0] <= 400 else np.linalg.norm(H)
    Sn = np.linalg.norm(S, 2) if S.shape[0] <= 400 else np.linalg.norm(S)
    R = H @ vecs - (S @ vecs) * vals[None, :]
    res = np.linalg.norm(R, axis=0) / ((Hn + np.abs(vals) * Sn) * np.linalg.norm(vecs, axis=0))
    return PencilSolution(vals, vecs, left, res, X.shape[1], dropped, X)


def lowest_eigenvalues(H, S, k: int = 1, cutoff: float = 1e-13) -> np.ndarray:
    """Lowest ``k`` eigenvalues of a Hermitian pencil (cheap path, no residuals)."""
    X, _ = orthogonalizer(S, cutoff)
    Hr = X.conj().T @ H @ X
    return np.linalg.eigvalsh(0.5 * (Hr + Hr.conj().T))[:k]
