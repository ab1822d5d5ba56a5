"""Kinetically balanced Dirac-Coulomb(-Breit) matrices over an ECG basis.

Each spatial ECG g generates 4^n spinor functions K_B (e_k g), where e_k is a
unit vector over (large/small pattern, spin) and

    K_B = diag over patterns of  prod_{i small} sigma_i.p_i / (2 m_i c).

Component index ``k = 2^n * lam + spin`` with ``lam`` the binary pattern
(particle 1 most significant, 1 = small) and ``spin`` the binary spin label
(1 = down).  For two electrons this is ll, ls, sl, ss times
uu, ud, du, dd.

All spinor matrix elements reduce to dressed scalar integrals
<p^a g_i| K |p^b g_j> multiplied by 2^n x 2^n Pauli products; the assembly
collects the distinct scalar integrals once and contracts them with
precomputed coefficient tensors.  Rest mass is subtracted: a component with
small-component particles i carries -sum 2 m_i c^2.
"""
from __future__ import annotations

import dataclasses
import enum
import hashlib
import io
import itertools
import struct
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .integrals import (UNITY, DerivativeDressing, Kernel, PairBatch, _slots_for,
                        inter_coulomb, inter_linear, nuclear_attraction)
from .system import ECGPrimitive, InvalidSystem, SystemSpec

SIGMA = (np.array([[0, 1], [1, 0]], complex),
         np.array([[0, -1j], [1j, 0]], complex),
         np.array([[1, 0], [0, -1]], complex))
ID2 = np.eye(2, dtype=complex)

PART_NAMES = ("S", "kin", "nuc", "nn", "ee", "breit", "mass")
DUMP_MAGIC = b"NPDIRAC1"


class OperatorKind(enum.Enum):
    NON_INTERACTING = "NonInteracting"   # no electron-electron terms
    DC = "DiracCoulomb"
    DCB = "DiracCoulombBreit"

    @property
    def coulomb(self) -> bool:
        return self is not OperatorKind.NON_INTERACTING

    @property
    def breit(self) -> bool:
        return self is OperatorKind.DCB

    @classmethod
    def parse(cls, name: str) -> "OperatorKind":
        key = name.replace("-", "").replace("_", "").lower()
        aliases = {"ni": cls.NON_INTERACTING, "noninteracting": cls.NON_INTERACTING,
                   "dc": cls.DC, "diraccoulomb": cls.DC,
                   "dcb": cls.DCB, "diraccoulombbreit": cls.DCB}
        if key not in aliases:
            raise ValueError(f"unknown operator kind {name!r}")
        return aliases[key]


class Sector(enum.Enum):
    """Exact symmetry block used to select spinor generators."""

    ATOM_J0 = "atom-J0"          # spherical ECGs, two electrons, J = 0
    LINEAR_OMEGA0 = "linear-Omega0"  # ECGs and nuclei on the z axis, M_J = 0
    FULL = "full"
    ONE_S_HALF = "one-electron-j1/2"   # one electron, spherical ECGs, m_j = +1/2
    ONE_FULL = "one-electron-full"


# ---------------------------------------------------------------------------
# Term generation

def _pauli_product(n: int, factors: dict[int, np.ndarray]) -> np.ndarray:
    return reduce(np.kron, [factors.get(i, ID2) for i in range(n)])


def _balance(n: int, lam: int, masses, c: float):
    """Expansion of K_lam as [(coef, spin matrix, momentum tuple)]."""
    small = [i for i in range(n) if lam >> (n - 1 - i) & 1]
    out = []
    for axes in itertools.product(range(3), repeat=len(small)):
        spin = _pauli_product(n, {i: SIGMA[a] for i, a in zip(small, axes)})
        coef = np.prod([1.0 / (2.0 * masses[i] * c) for i in small]) if small else 1.0
        out.append((coef, spin, tuple(zip(small, axes))))
    return out


def _operator_terms(system: SystemSpec, n: int, kind: OperatorKind, pair_charge=None):
    """Terms of the Hamiltonian (and overlap) between patterns, before balancing."""
    c = system.constants.c
    masses = system.masses[:n]
    q = system.charges[:n]
    qq = q[0] * q[1] if (n == 2 and pair_charge is None) else pair_charge
    Z = system.charge_array
    R = system.position_array
    vnn = system.nuclear_repulsion()
    I = _pauli_product(n, {})
    terms = []   # (part, lam, lam', coef, spin, ket momenta, kernel, kd)
    for lam in range(2**n):
        terms.append(("S", lam, lam, 1.0, I, (), UNITY, ()))
        small = [i for i in range(n) if lam >> (n - 1 - i) & 1]
        shift = -sum(2.0 * masses[i] * c * c for i in small)
        if shift:
            terms.append(("mass", lam, lam, shift, I, (), UNITY, ()))
        for i in range(n):
            for Za, Ra in zip(Z, R):
                terms.append(("nuc", lam, lam, q[i] * Za, I, (), nuclear_attraction(Ra, i, n), ()))
        if n == 2 and vnn:
            terms.append(("nn", lam, lam, vnn, I, (), UNITY, ()))
        if n == 2 and kind.coulomb and qq:
            terms.append(("ee", lam, lam, qq, I, (), inter_coulomb(), ()))
        # c sigma_i . p_i couples patterns differing in particle i only
        for i in range(n):
            lam2 = lam ^ (1 << (n - 1 - i))
            for a in range(3):
                spin = _pauli_product(n, {i: SIGMA[a]})
                terms.append(("kin", lam, lam2, c, spin, ((i, a),), UNITY, ()))
        if n == 2 and kind.breit and qq:
            lam2 = lam ^ 3
            for a in range(3):
                spin = _pauli_product(2, {0: SIGMA[a], 1: SIGMA[a]})
                terms.append(("breit", lam, lam2, -qq, spin, (), inter_coulomb(), ()))
            for a in range(3):
                for b in range(3):
                    spin = _pauli_product(2, {0: SIGMA[a], 1: SIGMA[b]})
                    # -q1q2/2 sigma1a sigma2b d_1a d_2b r12 = +q1q2/2 (d_a d_b |u|)
                    terms.append(("breit", lam, lam2, 0.5 * qq, spin, (), inter_linear(),
                                  (a, b)))
    return terms


def _swap_perm(n: int) -> np.ndarray:
    """Component permutation induced by exchanging the two electrons."""
    dim = 4**n
    if n == 1:
        return np.arange(dim)
    perm = np.empty(dim, int)
    for k in range(dim):
        lam, s = divmod(k, 4)
        lam_s = ((lam & 1) << 1) | (lam >> 1)
        s_s = ((s & 1) << 1) | (s >> 1)
        perm[k] = 4 * lam_s + s_s
    return perm


def generators(sector: Sector) -> np.ndarray:
    """Columns spanning the spinor directions kept in ``sector``."""
    if sector is Sector.FULL:
        return np.eye(16, dtype=complex)
    if sector is Sector.ONE_FULL:
        return np.eye(4, dtype=complex)
    if sector is Sector.ONE_S_HALF:
        G = np.zeros((4, 2), complex)
        G[0, 0] = G[2, 1] = 1.0
        return G
    if sector is Sector.ATOM_J0:
        G = np.zeros((16, 4), complex)
        for lam in range(4):
            G[4 * lam + 1, lam] = 1 / np.sqrt(2)
            G[4 * lam + 2, lam] = -1 / np.sqrt(2)
        return G
    if sector is Sector.LINEAR_OMEGA0:
        G = np.zeros((16, 8), complex)
        for lam in range(4):
            G[4 * lam + 1, 2 * lam] = 1.0
            G[4 * lam + 2, 2 * lam + 1] = 1.0
        return G
    raise ValueError(sector)


def detect_sector(system: SystemSpec, basis, n: int = 2) -> Sector:
    s = np.array([g.s for g in basis]).reshape(len(basis), n, 3)
    pos = system.position_array
    if n == 1:
        return Sector.ONE_S_HALF if system.is_atom() and not np.any(s) else Sector.ONE_FULL
    if system.is_atom() and not np.any(s):
        return Sector.ATOM_J0
    if system.is_linear_z() and not np.any(s[:, :, :2]):
        return Sector.LINEAR_OMEGA0
    return Sector.FULL


@dataclass
class _Plan:
    """Distinct scalar integrals and their coefficient tensors per part."""

    requests: list          # [(slots, kernel)]
    coef: dict              # part -> (R, m, m) complex, direct
    coef_x: dict            # part -> (R, m, m) complex, exchange (columns permuted)
    m: int


def build_plan(system: SystemSpec, n: int, kind: OperatorKind, sector: Sector,
               pair_charge=None) -> _Plan:
    c = system.constants.c
    masses = system.masses[:n]
    G = generators(sector)
    dim = 4**n
    nspin = 2**n
    perm = _swap_perm(n)
    Pi = np.eye(dim)[:, perm]        # (B @ Pi)[:, k] = B[:, perm[k]]
    index: dict = {}
    full: dict = {}
    for part, lam, lam2, coef, spin_op, ket_mom, kernel, kd in _operator_terms(system, n, kind, pair_charge):
        for ca, sa, ma in _balance(n, lam, masses, c):
            for cb, sb, mb in _balance(n, lam2, masses, c):
                dress = DerivativeDressing(ma, mb + ket_mom, kd)
                slots = tuple(_slots_for(dress, n))
                # canonical order inside each group keeps requests unique
                key = (tuple(sorted(slots)), kernel)
                spin = sa.conj().T @ spin_op @ sb
                if not np.any(spin):
                    continue
                block = np.zeros((dim, dim), complex)
                block[lam * nspin:(lam + 1) * nspin, lam2 * nspin:(lam2 + 1) * nspin] = (
                    coef * ca * cb * dress.phase * spin)
                r = index.setdefault(key, len(index))
                acc = full.setdefault(part, {})
                acc[r] = acc[r] + block if r in acc else block
    R = len(index)
    m = G.shape[1]
    coef_d, coef_x = {}, {}
    keep = np.zeros(R, bool)
    for part, acc in full.items():
        Cd = np.zeros((R, m, m), complex)
        Cx = np.zeros((R, m, m), complex)
        for r, block in acc.items():
            Cd[r] = G.conj().T @ block @ G
            Cx[r] = G.conj().T @ block @ Pi @ G
        Cd[np.abs(Cd) < 1e-15 * max(1.0, np.max(np.abs(Cd)))] = 0
        Cx[np.abs(Cx) < 1e-15 * max(1.0, np.max(np.abs(Cx)))] = 0
        keep |= np.any(Cd != 0, axis=(1, 2)) | np.any(Cx != 0, axis=(1, 2))
        coef_d[part], coef_x[part] = Cd, Cx
    requests = [None] * R
    for key, r in index.items():
        requests[r] = key
    sel = np.flatnonzero(keep)
    return _Plan([requests[r] for r in sel], {p: C[sel] for p, C in coef_d.items()},
                 {p: C[sel] for p, C in coef_x.items()}, m)


# ---------------------------------------------------------------------------
# Assembly

@dataclass
class OperatorMatrices:
    """Part matrices over the (antisymmetrised) kinetically balanced basis.

    ``H = kin + nuc + nn + ee + breit + mass`` (nn: nuclear repulsion) and, under complex coordinate
    rotation by theta, ``H(theta) = exp(-i theta) (H - mass) + mass``.
    """

    parts: dict
    n_functions: int
    m: int
    sector: Sector
    kind: OperatorKind
    theta: float = 0.0
    meta: dict = field(default_factory=dict)

    shift_convention = "rest mass 2*m_i*c^2 of every electron subtracted"

    @property
    def S(self) -> np.ndarray:
        return self.parts["S"]

    @property
    def H(self) -> np.ndarray:
        return self.hamiltonian(self.theta)

    @property
    def dim(self) -> int:
        return self.S.shape[0]

    def included(self, kind: OperatorKind | None = None) -> tuple[str, ...]:
        kind = kind or self.kind
        return ("kin", "nuc", "nn") + (("ee",) if kind.coulomb else ()) + (
            ("breit",) if kind.breit else ())

    def hamiltonian(self, theta: float | None = None, include=None) -> np.ndarray:
        theta = self.theta if theta is None else theta
        include = self.included() if include is None else include
        H = self.parts[include[0]]
        for p in include[1:]:
            H = H + self.parts[p]
        if theta:
            H = np.exp(-1j * theta) * H
        return H + self.parts["mass"]

    def noninteracting(self, theta: float | None = None) -> np.ndarray:
        return self.hamiltonian(theta, include=("kin", "nuc"))

    def with_theta(self, theta: float) -> "OperatorMatrices":
        return dataclasses.replace(self, theta=theta)

    def truncated(self, n_functions: int) -> "OperatorMatrices":
        """Matrices over the first ``n_functions`` basis functions."""
        if not 0 < n_functions <= self.n_functions:
            raise ValueError(f"cannot truncate {self.n_functions} functions to {n_functions}")
        k = n_functions * self.m
        parts = {p: M[:k, :k].copy() for p, M in self.parts.items()}
        return dataclasses.replace(self, parts=parts, n_functions=n_functions)

    # -- binary dump ------------------------------------------------------
    def dumps(self) -> bytes:
        buf = io.BytesIO()
        names = [p for p in PART_NAMES if p in self.parts]
        buf.write(DUMP_MAGIC)
        buf.write(struct.pack("<IIIId", 1, self.dim, len(names), self.n_functions, self.theta))
        for tag in (self.sector.value, self.kind.value):
            b = tag.encode()
            buf.write(struct.pack("<I", len(b)) + b)
        for p in names:
            b = p.encode().ljust(8, b"\0")
            buf.write(b)
            buf.write(np.ascontiguousarray(self.parts[p], dtype="<c16").tobytes())
        body = buf.getvalue()
        return body + hashlib.sha256(body).digest()

    @classmethod
    def loads(cls, data: bytes) -> "OperatorMatrices":
        body, digest = data[:-32], data[-32:]
        if not body.startswith(DUMP_MAGIC):
            raise ValueError("not an operator-matrix dump")
        if hashlib.sha256(body).digest() != digest:
            raise ValueError("operator-matrix dump checksum mismatch")
        off = len(DUMP_MAGIC)
        version, dim, nparts, nfun, theta = struct.unpack_from("<IIIId", body, off)
        off += struct.calcsize("<IIIId")
        tags = []
        for _ in range(2):
            (L,) = struct.unpack_from("<I", body, off)
            off += 4
            tags.append(body[off:off + L].decode())
            off += L
        parts = {}
        size = dim * dim * 16
        for _ in range(nparts):
            name = body[off:off + 8].rstrip(b"\0").decode()
            off += 8
            parts[name] = np.frombuffer(body[off:off + size], dtype="<c16").reshape(dim, dim).copy()
            off += size
        return cls(parts, nfun, dim // max(nfun, 1), Sector(tags[0]), OperatorKind(tags[1]), theta)


def _pair_values(plan: _Plan, A_bra, s_bra, A_ket, s_ket, chunk: int) -> np.ndarray:
    P = len(A_bra)
    out = np.empty((P, len(plan.requests)))
    for lo in range(0, P, chunk):
        hi = min(P, lo + chunk)
        batch = PairBatch(A_bra[lo:hi], s_bra[lo:hi], A_ket[lo:hi], s_ket[lo:hi])
        out[lo:hi] = batch.table(plan.requests)
    return out


def assemble(system: SystemSpec, basis, kind: OperatorKind = OperatorKind.DC,
             theta: float = 0.0, sector: Sector | None = None, n: int | None = None,
             pair_charge: float | None = None, chunk: int = 3000) -> OperatorMatrices:
    """Part matrices for an antisymmetrised two-electron (or one-electron) basis.

    For ``n == 1`` only the first electron's mass and charge are used and no
    antisymmetrisation is applied.  ``pair_charge`` overrides q1*q2 in the
    electron-electron terms.  ``theta`` is recorded as the default rotation
    angle of :attr:`OperatorMatrices.H`; the parts themselves are unscaled.
    """
    if abs(theta) >= np.pi / 4:
        raise InvalidSystem("rotation angle must satisfy |theta| < pi/4")
    n = basis[0].n if n is None else n
    if any(g.n != n for g in basis):
        raise InvalidSystem("mixed particle numbers in basis")
    if n == 2 and system.masses[0] != system.masses[1]:
        raise InvalidSystem("antisymmetrisation requires equal particle masses")
    if n == 1 and kind.breit:
        raise InvalidSystem("the Breit operator needs two electrons")
    sector = sector or detect_sector(system, basis, n)
    plan = build_plan(system, n, kind, sector, pair_charge)
    N, m = len(basis), plan.m
    A = np.array([g.A for g in basis])
    s = np.array([g.s for g in basis])
    I, J = np.triu_indices(N)
    D = _pair_values(plan, A[I], s[I], A[J], s[J], chunk)
    if n == 2:
        Dx = _pair_values(plan, A[I], s[I], A[J][:, ::-1, ::-1], s[J][:, ::-1, :], chunk)
    parts = {}
    for part, Cd in plan.coef.items():
        R = Cd.shape[0]
        blocks = D @ Cd.reshape(R, m * m)
        if n == 2:
            blocks = blocks - Dx @ plan.coef_x[part].reshape(R, m * m)
        blocks = blocks.reshape(-1, m, m)
        M = np.zeros((N, m, N, m), complex)
        M[I, :, J, :] = blocks
        # Hermitian completion of the strictly lower ECG blocks
        low = I != J
        M[J[low], :, I[low], :] = blocks[low].conj().transpose(0, 2, 1)
        parts[part] = M.reshape(N * m, N * m)
    for p in PART_NAMES:
        if p not in parts:
            parts[p] = np.zeros((N * m, N * m), complex)
    return OperatorMatrices(parts, N, m, sector, kind, theta,
                            meta={"system": system.name, "c": system.constants.c})


def kb_block(system: SystemSpec, gi: ECGPrimitive, gj: ECGPrimitive,
             kind: OperatorKind = OperatorKind.DC, part: str | None = None,
             permute_ket: bool = False) -> np.ndarray:
    """Full 4^n x 4^n spinor block <K_B e_k g_i | H | K_B e_k' g_j> (no symmetry).

    ``part`` selects a single operator part (e.g. 'S'); by default the sum of
    all Hamiltonian parts is returned.
    """
    n = gi.n
    sector = Sector.FULL if n == 2 else Sector.ONE_FULL
    plan = build_plan(system, n, kind, sector)
    if permute_ket:
        gj = gj.permuted()
    batch = PairBatch.from_primitives([gi], [gj])
    d = batch.table(plan.requests)[0]
    names = [part] if part else [p for p in plan.coef if p != "S"]
    # kind restricts which parts exist in the plan, so summing all is correct
    m = plan.m
    out = np.zeros((m, m), complex)
    for p in names:
        if p in plan.coef:
            out += np.tensordot(d, plan.coef[p], axes=1)
    return out
