"""Positive-energy projector from the non-interacting problem, via CCR.

The eigenstates of the Hamiltonian without electron-electron interaction fall
into three families: both electrons in positive-energy states (physical,
labelled ``PhysicalPositive``), one positive and one negative (the
Brown-Ravenhall continuum, real parts near -2 m c^2 and above) and both
negative (near -4 m c^2).  On the real axis the first two overlap in energy.
Under complex coordinate rotation by theta the Brown-Ravenhall branch is
rotated far into the lower half plane (slope about -tan(theta) from the
-2 m c^2 threshold), whereas physical states stay near the real axis (bound
states) or rotate by -2 theta about their own thresholds, which separates
the families cleanly.

Two projected problems are offered:

``mode="real"`` (default)
    Eigenvectors of the Hermitian non-interacting problem at theta = 0 are
    labelled by their weight in the span of the rotated physical states; the
    interacting Hamiltonian is projected onto the labelled subspace.  The
    energy is real and a variational upper bound.
``mode="rotated"``
    Biorthogonal (oblique) projection onto the physical eigenvectors of the
    rotated non-interacting problem, applied to the rotated interacting
    Hamiltonian; the imaginary part of the result is a convergence diagnostic.
"""
from __future__ import annotations

import csv
import enum
import io
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .dirac import OperatorKind, OperatorMatrices, assemble
from .eigensolve import orthogonalizer
from .system import SystemSpec

DEFAULT_THETA = 0.15
DEFAULT_THETA_REF = 0.225


class ProjectorError(RuntimeError):
    pass


class StateLabel(enum.Enum):
    PHYSICAL_POSITIVE = "PhysicalPositive"
    BROWN_RAVENHALL = "BrownRavenhall"
    NEGATIVE_CONTINUUM = "NegativeContinuumLike"


@dataclass
class StateClassification:
    """Labels of the non-interacting spectrum.

    ``energies``/``labels`` refer to the rotated eigenvalues at ``theta``;
    ``energies_ref`` are the matched eigenvalues at ``theta_ref`` and
    ``displacement`` their distance.  ``real_energies``/``real_labels``/
    ``weights`` label the Hermitian eigenvectors at theta = 0 (weight = norm
    of the vector's component in the span of rotated physical states).
    """

    theta: float
    theta_ref: float
    energies: np.ndarray
    labels: list
    energies_ref: np.ndarray
    displacement: np.ndarray
    ambiguous: np.ndarray
    real_energies: np.ndarray
    real_labels: list
    weights: np.ndarray
    real_vectors: np.ndarray = field(repr=False)
    rotated_right: np.ndarray = field(repr=False)
    rotated_left: np.ndarray = field(repr=False)
    n_dropped: int = 0

    @property
    def n_physical(self) -> int:
        return sum(lab is StateLabel.PHYSICAL_POSITIVE for lab in self.labels)

    @property
    def n_ambiguous(self) -> int:
        return int(np.count_nonzero(self.ambiguous))

    def lowest_physical(self) -> complex:
        E = [e for e, lab in zip(self.energies, self.labels) if lab is StateLabel.PHYSICAL_POSITIVE]
        return min(E, key=lambda z: z.real)

    def counts(self) -> dict:
        out = {lab.value: 0 for lab in StateLabel}
        for lab in self.labels:
            out[lab.value] += 1
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# theta={self.theta!r} theta_ref={self.theta_ref!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "re_energy", "im_energy", "label", "re_energy_ref", "im_energy_ref",
                    "displacement", "ambiguous"])
        for k, (z, lab, zr, d, a) in enumerate(zip(self.energies, self.labels, self.energies_ref,
                                                  self.displacement, self.ambiguous)):
            w.writerow([k, f"{z.real:.12g}", f"{z.imag:.12g}", lab.value, f"{zr.real:.12g}",
                        f"{zr.imag:.12g}", f"{d:.6g}", int(a)])
        return buf.getvalue()


def _locate(z: np.ndarray, theta: float, mc2: float, n: int):
    """Label rotated eigenvalues by their position in the complex plane."""
    labels = []
    ambiguous = np.zeros(len(z), bool)
    if n == 1:
        for k, e in enumerate(z):
            labels.append(StateLabel.PHYSICAL_POSITIVE if e.real > -mc2
                          else StateLabel.NEGATIVE_CONTINUUM)
        return labels, ambiguous
    phys = z.real >= -mc2
    e_low = np.min(z.real[phys]) if np.any(phys) else 0.0
    t1, t2 = np.tan(theta), np.tan(2 * theta)
    for k, e in enumerate(z):
        if e.real < -3 * mc2:
            labels.append(StateLabel.NEGATIVE_CONTINUUM)
        elif e.real < -mc2:
            labels.append(StateLabel.BROWN_RAVENHALL)
        else:
            im_pp = -max(e.real - e_low, 0.0) * t2      # rotated ++ continuum edge
            im_br = -(e.real + 2 * mc2) * t1            # rotated BR threshold line
            bound = 0.5 * (im_pp + im_br)
            if e.imag > bound:
                labels.append(StateLabel.PHYSICAL_POSITIVE)
            else:
                labels.append(StateLabel.BROWN_RAVENHALL)
            if abs(e.imag - bound) < 0.25 * abs(im_br - im_pp):
                ambiguous[k] = True
    return labels, ambiguous


def _rotated_eig(Hr):
    vals, L, R = sla.eig(Hr, left=True, right=True)
    order = np.lexsort((vals.imag, vals.real))
    vals, L, R = vals[order], L[:, order], R[:, order]
    norms = np.einsum("ki,ki->i", L.conj(), R)
    L = L / norms.conj()[None, :]
    return vals, L, R


def classify_noninteracting(matrices: OperatorMatrices, theta: float = DEFAULT_THETA,
                            theta_ref: float = DEFAULT_THETA_REF, cutoff: float = 1e-13,
                            mass: float = 1.0, n: int = 2,
                            weight_threshold: float = 0.5) -> StateClassification:
    """Classify non-interacting eigenstates with CCR at two angles."""
    if theta == 0 or theta_ref == 0 or theta == theta_ref:
        raise ProjectorError("classification needs two distinct non-zero angles")
    c = matrices.meta.get("c")
    if c is None:
        raise ProjectorError("matrices carry no speed of light")
    mc2 = mass * c * c
    X, dropped = orthogonalizer(matrices.S, cutoff)
    Xh = X.conj().T

    def reduced(th):
        return Xh @ matrices.noninteracting(th) @ X

    z, L, R = _rotated_eig(reduced(theta))
    zr, Lr, Rr = _rotated_eig(reduced(theta_ref))
    labels, ambiguous = _locate(z, theta, mc2, n)
    # trajectory matching between the two angles by eigenvector overlap
    ov = np.abs(L.conj().T @ Rr)
    rows, cols = linear_sum_assignment(-ov)
    match = np.empty(len(z), int)
    match[rows] = cols
    z_ref = zr[match]
    disp = np.abs(z - z_ref)
    labels_ref, _ = _locate(zr, theta_ref, mc2, n)
    for k in range(len(z)):
        if labels_ref[match[k]] is not labels[k]:
            ambiguous[k] = True
    # Hermitian eigenvectors at theta = 0, labelled by weight in the rotated ++ span
    H0 = reduced(0.0)
    e0, U0 = np.linalg.eigh(0.5 * (H0 + H0.conj().T))
    phys = np.array([lab is StateLabel.PHYSICAL_POSITIVE for lab in labels])
    if np.any(phys):
        Qp, _ = np.linalg.qr(R[:, phys])
        weights = np.sum(np.abs(Qp.conj().T @ U0) ** 2, axis=0)
    else:
        weights = np.zeros(len(e0))
    real_labels = []
    for k, e in enumerate(e0):
        if weights[k] > weight_threshold and e > -mc2:
            real_labels.append(StateLabel.PHYSICAL_POSITIVE)
        elif n == 2 and e > -3 * mc2:
            real_labels.append(StateLabel.BROWN_RAVENHALL)
        else:
            real_labels.append(StateLabel.NEGATIVE_CONTINUUM)
    return StateClassification(theta, theta_ref, z, labels, z_ref, disp, ambiguous,
                               e0, real_labels, weights, X @ U0, X @ R, X @ L, dropped)


@dataclass
class ProjectorSubspace:
    """Columns spanning the physical non-interacting subspace.

    For ``mode == "real"`` the columns are S-orthonormal and the projector is
    Lambda = Q Q^H S.  For ``mode == "rotated"`` ``left``/``vectors`` are
    biorthonormal and Lambda = Q L^H S (oblique).
    """

    vectors: np.ndarray
    theta: float
    mode: str
    S: np.ndarray = field(repr=False)
    left: np.ndarray | None = field(default=None, repr=False)
    orthonormality_error: float = 0.0

    @property
    def count(self) -> int:
        return self.vectors.shape[1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        W = self.vectors if self.left is None else self.left
        return self.vectors @ (W.conj().T @ (self.S @ x))

    def idempotence_error(self, rng: np.random.Generator | None = None, samples: int = 4) -> float:
        """max ||L(Lx) - Lx||_S / ||x||_S over random vectors x."""
        rng = rng or np.random.default_rng(0)
        worst = 0.0
        for _ in range(samples):
            x = rng.normal(size=self.S.shape[0]) + 1j * rng.normal(size=self.S.shape[0])
            px = self.apply(x)
            d = self.apply(px) - px
            nx = np.sqrt(abs(np.vdot(x, self.S @ x)))
            worst = max(worst, np.sqrt(abs(np.vdot(d, self.S @ d))) / nx)
        return worst


def build_projector(classification: StateClassification, matrices: OperatorMatrices,
                    mode: str = "real") -> ProjectorSubspace:
    S = matrices.S
    if mode == "real":
        sel = [k for k, lab in enumerate(classification.real_labels)
               if lab is StateLabel.PHYSICAL_POSITIVE]
        if not sel:
            raise ProjectorError("no physical positive-energy states")
        Q = classification.real_vectors[:, sel]
        M = Q.conj().T @ S @ Q
        err = float(np.max(np.abs(M - np.eye(len(sel)))))
        w, V = np.linalg.eigh(0.5 * (M + M.conj().T))
        if w[0] <= 1e-8 * w[-1]:
            raise ProjectorError("physical subspace lost rank in orthonormalisation")
        Q = Q @ (V / np.sqrt(w)) @ V.conj().T
        return ProjectorSubspace(Q, 0.0, mode, S, None, err)
    if mode == "rotated":
        sel = [k for k, lab in enumerate(classification.labels)
               if lab is StateLabel.PHYSICAL_POSITIVE]
        if not sel:
            raise ProjectorError("no physical positive-energy states")
        R = classification.rotated_right[:, sel]
        L = classification.rotated_left[:, sel]
        M = L.conj().T @ S @ R
        err = float(np.max(np.abs(M - np.eye(len(sel)))))
        L = L @ np.linalg.inv(M).conj().T
        return ProjectorSubspace(R, classification.theta, mode, S, L, err)
    raise ValueError(f"unknown projector mode {mode!r}")


@dataclass
class EnergyResult:
    energy: float
    imag: float
    index: int
    kind: str
    mode: str
    theta: float
    theta_ref: float
    n_basis: int
    dim: int
    n_plus: int
    n_ambiguous: int
    spectrum: np.ndarray = field(repr=False)
    lowest_noninteracting: complex = 0j
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("energy", "imag", "index", "kind", "mode", "theta",
                                               "theta_ref", "n_basis", "dim", "n_plus",
                                               "n_ambiguous")}


def solve_projected(matrices: OperatorMatrices, projector: ProjectorSubspace,
                    kind: OperatorKind | None = None) -> np.ndarray:
    """Eigenvalues of the projected interacting pencil, sorted by real part."""
    kind = kind or matrices.kind
    inc = matrices.included(kind)
    Q = projector.vectors
    if projector.mode == "real":
        Hp = Q.conj().T @ matrices.hamiltonian(0.0, inc) @ Q
        return np.linalg.eigvalsh(0.5 * (Hp + Hp.conj().T)).astype(complex)
    L = projector.left
    Hp = L.conj().T @ matrices.hamiltonian(projector.theta, inc) @ Q
    vals = np.linalg.eigvals(Hp)
    return vals[np.lexsort((vals.imag, vals.real))]


def projected_energy(system: SystemSpec, basis, kind: OperatorKind = OperatorKind.DC,
                     theta: float = DEFAULT_THETA, theta_ref: float = DEFAULT_THETA_REF,
                     index: int | None = None, mode: str = "real",
                     matrices: OperatorMatrices | None = None,
                     classification: StateClassification | None = None,
                     imag_tol: float | None = None) -> EnergyResult:
    """No-pair energy of the selected root for a fixed basis."""
    if not kind.coulomb:
        raise ProjectorError("projected energies need an interacting operator")
    index = system.state.index if index is None else index
    t0 = time.perf_counter()
    if matrices is None or (kind.breit and not matrices.kind.breit):
        matrices = assemble(system, basis, kind)
    t1 = time.perf_counter()
    if classification is None:
        classification = classify_noninteracting(matrices, theta, theta_ref,
                                                 mass=min(system.masses))
    proj = build_projector(classification, matrices, mode)
    t2 = time.perf_counter()
    vals = solve_projected(matrices, proj, kind)
    t3 = time.perf_counter()
    if len(vals) < index:
        raise ProjectorError(f"selector index {index} exceeds projected dimension {len(vals)}")
    E = vals[index - 1]
    if imag_tol is not None and abs(E.imag) > imag_tol:
        raise ProjectorError(f"imaginary part {E.imag:.3e} exceeds {imag_tol:.1e}")
    return EnergyResult(float(E.real), float(E.imag), index, kind.value, mode, theta, theta_ref,
                        matrices.n_functions, matrices.dim, proj.count,
                        classification.n_ambiguous, vals,
                        classification.lowest_physical(),
                        {"assemble": t1 - t0, "classify": t2 - t1, "solve": t3 - t2})


def unprojected_spectrum(matrices: OperatorMatrices, kind: OperatorKind | None = None,
                         cutoff: float = 1e-13) -> np.ndarray:
    """Real eigenvalues of the interacting pencil without any projection."""
    X, _ = orthogonalizer(matrices.S, cutoff)
    H = X.conj().T @ matrices.hamiltonian(0.0, matrices.included(kind or matrices.kind)) @ X
    return np.linalg.eigvalsh(0.5 * (H + H.conj().T))
