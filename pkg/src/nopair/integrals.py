"""Analytic integrals over pairs of floating explicitly correlated Gaussians.

Every integral handled here has the form

    I(s_bra, s_ket, R) = \\int g_bra(r) g_ket(r) f(|J^T r - R|^2) d^{3n} r

for a radial kernel ``f`` acting on a fixed linear combination ``u = J^T r`` of
particle coordinates (``J = e_i`` for electron-nucleus terms, ``J = (1, -1)``
for electron-electron terms).  Completing the square in the Gaussian product
gives

    I = N exp(-sum_c y_c^T Q y_c) F(rho),    rho = sum_c (l^T y_c - R_c)^2,

with ``y_c`` the c-th Cartesian components of all shift vectors.  Momentum
dressings are generated by differentiating ``I`` with respect to the shifts
(``p g = i d g / d s`` for a floating Gaussian) and kernel derivatives by
differentiating with respect to the kernel centre ``R``.  Mixed derivatives up
to fourth order follow from a Leibniz split between the Gaussian prefactor and
the kernel, each expanded over matchings of the derivative slots.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gamma as gamma_fn, gammainc

from .system import ECGPrimitive

MAX_DERIVATIVE_ORDER = 4
CONDITION_LIMIT = 1e14


class IntegralError(ArithmeticError):
    """Raised for singular exponent sums or unsupported derivative requests."""


def boys(m_max: int, T) -> np.ndarray:
    """Boys functions F_0..F_m_max at real T >= 0, shape (m_max + 1,) + T.shape."""
    T = np.asarray(T, dtype=float)
    out = np.empty((m_max + 1,) + T.shape)
    a = m_max + 0.5
    small = T < 1e-6
    Ts = np.where(small, 1.0, T)
    top = gamma_fn(a) * gammainc(a, Ts) / (2.0 * Ts**a)
    series = 1.0 / (2 * m_max + 1) - T / (2 * m_max + 3) + T * T / (2.0 * (2 * m_max + 5))
    out[m_max] = np.where(small, series, top)
    eT = np.exp(-T)
    for m in range(m_max - 1, -1, -1):
        out[m] = (2.0 * T * out[m + 1] + eT) / (2 * m + 1)
    return out


class KernelKind(enum.Enum):
    UNITY = "unity"
    NUCLEAR_ATTRACTION = "nuclear"      # 1/|r_i - R_a|
    INTER_ELECTRON_COULOMB = "coulomb"  # 1/r12
    INTER_ELECTRON_LINEAR = "linear"    # r12
    CONTACT = "contact"                 # delta^3(J^T r - R)


@dataclass(frozen=True)
class Kernel:
    """A multiplicative kernel f(|J^T r - center|) together with its geometry."""

    kind: KernelKind
    weights: tuple[float, ...] = ()
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def radial(self) -> str:
        if self.kind in (KernelKind.NUCLEAR_ATTRACTION, KernelKind.INTER_ELECTRON_COULOMB):
            return "inverse"
        if self.kind is KernelKind.INTER_ELECTRON_LINEAR:
            return "linear"
        if self.kind is KernelKind.CONTACT:
            return "delta"
        return "unity"

    @property
    def homogeneity(self) -> int:
        """Degree of the kernel under r -> lambda r."""
        return {"unity": 0, "inverse": -1, "linear": 1, "delta": -3}[self.radial]


UNITY = Kernel(KernelKind.UNITY)


def nuclear_attraction(position, particle: int, n: int = 2) -> Kernel:
    """1/|r_particle - position| (no charge prefactor)."""
    J = [0.0] * n
    J[particle] = 1.0
    return Kernel(KernelKind.NUCLEAR_ATTRACTION, tuple(J), tuple(float(x) for x in position))


def inter_coulomb() -> Kernel:
    return Kernel(KernelKind.INTER_ELECTRON_COULOMB, (1.0, -1.0))


def inter_linear() -> Kernel:
    return Kernel(KernelKind.INTER_ELECTRON_LINEAR, (1.0, -1.0))


def contact_nucleus(position, particle: int, n: int = 2) -> Kernel:
    J = [0.0] * n
    J[particle] = 1.0
    return Kernel(KernelKind.CONTACT, tuple(J), tuple(float(x) for x in position))


def contact_inter() -> Kernel:
    return Kernel(KernelKind.CONTACT, (1.0, -1.0))


@dataclass(frozen=True)
class DerivativeDressing:
    """Momentum factors on bra and ket plus Cartesian derivatives of the kernel.

    ``bra`` and ``ket`` hold ``(particle, cartesian)`` pairs, each standing for
    one factor p = -i d/dr.  ``kernel_derivs`` are derivatives of the kernel
    function with respect to its own argument u = J^T r.
    """

    bra: tuple[tuple[int, int], ...] = ()
    ket: tuple[tuple[int, int], ...] = ()
    kernel_derivs: tuple[int, ...] = ()

    def __post_init__(self):
        if self.order > MAX_DERIVATIVE_ORDER:
            raise IntegralError(f"derivative order {self.order} exceeds {MAX_DERIVATIVE_ORDER}")

    @property
    def order(self) -> int:
        return len(self.bra) + len(self.ket) + len(self.kernel_derivs)

    @property
    def phase(self) -> complex:
        # <p^a g_i| = (-i)^|a| d/ds_i ..., |p^b g_j> = i^|b| d/ds_j ...
        return (-1j) ** len(self.bra) * (1j) ** len(self.ket) * (-1) ** len(self.kernel_derivs)


NO_DRESSING = DerivativeDressing()


@dataclass(frozen=True)
class ScaledIntegralContext:
    """Complex coordinate rotation angle applied to a kernel's homogeneity."""

    theta: float = 0.0

    def __post_init__(self):
        if abs(self.theta) >= np.pi / 4:
            raise IntegralError("rotation angle must satisfy |theta| < pi/4")

    def factor(self, kernel: Kernel, dressing: DerivativeDressing = NO_DRESSING) -> complex:
        degree = kernel.homogeneity - len(dressing.kernel_derivs)
        return complex(np.exp(1j * self.theta * degree))


# Derivative slot = (k, c): k < n -> bra shift of particle k, n <= k < 2n -> ket
# shift of particle k - n, k == 2n -> kernel centre; c = Cartesian component.
Slot = tuple[int, int]


def _matchings_first(elems: tuple):
    """Yield (rest, pair_partner_or_None) splits used by the recursions."""
    first, rest = elems[0], elems[1:]
    yield first, None, rest
    for j in range(len(rest)):
        yield first, rest[j], rest[:j] + rest[j + 1:]


class PairBatch:
    """Vectorised Gaussian-product data for P (bra, ket) pairs of n-particle ECGs."""

    def __init__(self, A_bra, s_bra, A_ket, s_ket, check: bool = True):
        A_bra = np.asarray(A_bra, float)
        A_ket = np.asarray(A_ket, float)
        s_bra = np.asarray(s_bra, float)
        s_ket = np.asarray(s_ket, float)
        P, n, _ = A_bra.shape
        self.P, self.n = P, n
        C = A_bra + A_ket
        if check:
            ev = np.linalg.eigvalsh(C)
            if np.any(ev[:, 0] <= 0) or np.any(ev[:, -1] > CONDITION_LIMIT * ev[:, 0]):
                raise IntegralError("exponent sum is numerically singular")
        Cinv = np.linalg.inv(C)
        det = np.linalg.det(C)
        B = np.concatenate([A_bra, A_ket], axis=1)                  # (P, 2n, n)
        Q = -np.einsum("pkm,pml,pjl->pkj", B, Cinv, B)
        Q[:, :n, :n] += A_bra
        Q[:, n:, n:] += A_ket
        y = np.concatenate([s_bra, s_ket], axis=1)                   # (P, 2n, 3)
        gam = np.einsum("pkc,pkj,pjc->p", y, Q, y)
        self.Cinv = Cinv
        self.B = B
        self.Q = Q
        self.y = y
        self.e = np.einsum("pml,plc->pmc", Cinv,
                           np.einsum("pml,plc->pmc", A_bra, s_bra)
                           + np.einsum("pml,plc->pmc", A_ket, s_ket))
        self.norm = np.pi ** (1.5 * n) / det**1.5
        self.overlap = self.norm * np.exp(-gam)
        # first derivatives of the Gaussian factor, zero for the kernel-centre slot
        a = -2.0 * np.einsum("pkj,pjc->pkc", Q, y)
        self.a = np.concatenate([a, np.zeros((P, 1, 3))], axis=1)
        self._h_memo: dict[tuple, np.ndarray] = {(): np.ones(P)}
        self._one = np.ones(P)
        self._zero = np.zeros(P)

    @classmethod
    def from_primitives(cls, bras: Sequence[ECGPrimitive], kets: Sequence[ECGPrimitive],
                        check: bool = True) -> "PairBatch":
        return cls(np.array([g.A for g in bras]), np.array([g.s for g in bras]),
                   np.array([g.A for g in kets]), np.array([g.s for g in kets]), check=check)

    # -- Gaussian prefactor --------------------------------------------------
    def _b(self, s: Slot, t: Slot):
        if s[1] != t[1] or s[0] == 2 * self.n or t[0] == 2 * self.n:
            return None
        return -2.0 * self.Q[:, s[0], t[0]]

    def hermite(self, slots: tuple) -> np.ndarray:
        """(d^slots exp(-q)) / exp(-q) for a sorted tuple of slots."""
        memo = self._h_memo
        if slots in memo:
            return memo[slots]
        total = None
        for first, partner, rest in _matchings_first(slots):
            if partner is None:
                term = self.a[:, first[0], first[1]] * self.hermite(rest)
            else:
                b = self._b(first, partner)
                if b is None:
                    continue
                term = b * self.hermite(rest)
            total = term if total is None else total + term
        memo[slots] = total if total is not None else self._zero
        return memo[slots]

    # -- kernel factor --------------------------------------------------------
    def kernel_data(self, kernel: Kernel) -> "_KernelData":
        return _KernelData(self, kernel)

    def derivative(self, slots: Sequence[Slot], kernel: Kernel = UNITY,
                   kd: "_KernelData | None" = None) -> np.ndarray:
        """Mixed shift/centre derivative of the kernel integral, shape (P,)."""
        slots = tuple(slots)
        if len(slots) > MAX_DERIVATIVE_ORDER:
            raise IntegralError("derivative order too high")
        if kernel.radial == "unity":
            return self.overlap * self.hermite(tuple(sorted(slots)))
        kd = kd or self.kernel_data(kernel)
        m = len(slots)
        total = np.zeros(self.P)
        for mask in range(1 << m):
            S = tuple(sorted(slots[i] for i in range(m) if mask >> i & 1))
            U = tuple(sorted(slots[i] for i in range(m) if not mask >> i & 1))
            g = kd.value(U)
            if g is None:
                continue
            h = self.hermite(S)
            total = total + h * g
        return self.overlap * total

    def table(self, requests: Iterable[tuple[Sequence[Slot], Kernel]]) -> np.ndarray:
        """Evaluate several derivatives at once; returns (P, len(requests))."""
        requests = list(requests)
        kds: dict[Kernel, _KernelData] = {}
        out = np.empty((self.P, len(requests)))
        for i, (slots, kernel) in enumerate(requests):
            if kernel.radial != "unity" and kernel not in kds:
                kds[kernel] = self.kernel_data(kernel)
            out[:, i] = self.derivative(slots, kernel, kds.get(kernel))
        return out


class _KernelData:
    """Radial-kernel factor F(rho) and its slot derivatives for one batch."""

    def __init__(self, batch: PairBatch, kernel: Kernel):
        n = batch.n
        J = np.asarray(kernel.weights, float)
        if J.shape != (n,):
            raise IntegralError(f"kernel weights {kernel.weights} do not match n={n}")
        w = np.einsum("pml,l->pm", batch.Cinv, J)
        beta = 1.0 / (w @ J)
        ell = np.einsum("pkm,pm->pk", batch.B, w)
        self.ell = np.concatenate([ell, -np.ones((batch.P, 1))], axis=1)
        d = np.einsum("m,pmc->pc", J, batch.e) - np.asarray(kernel.center, float)[None, :]
        rho = np.sum(d * d, axis=1)
        T = beta * rho
        self.d = d
        self.batch = batch
        M = MAX_DERIVATIVE_ORDER
        radial = kernel.radial
        if radial == "inverse":
            F = boys(M, T)
            pref = 2.0 * np.sqrt(beta / np.pi)
            self.f = [pref * (-beta) ** k * F[k] for k in range(M + 1)]
        elif radial == "linear":
            F = boys(M, T)
            pref = 1.0 / np.sqrt(np.pi * beta)
            h0 = np.exp(-T) + (1.0 + 2.0 * T) * F[0]
            self.f = [pref * h0] + [pref * beta**k * (-1) ** (k - 1) * (F[k - 1] - F[k])
                                    for k in range(1, M + 1)]
        elif radial == "delta":
            base = (beta / np.pi) ** 1.5 * np.exp(-T)
            self.f = [(-beta) ** k * base for k in range(M + 1)]
        else:
            raise IntegralError(f"no radial factor for {kernel}")
        self._memo: dict[tuple, list] = {(): [batch._one]}

    def _poly(self, slots: tuple) -> list:
        """Coefficients G_m of f^(m) in the derivative of F(rho)."""
        memo = self._memo
        if slots in memo:
            return memo[slots]
        res: list = [None] * (len(slots) + 1)
        for first, partner, rest in _matchings_first(slots):
            sub = self._poly(rest)
            if partner is None:
                fac = 2.0 * self.d[:, first[1]] * self.ell[:, first[0]]
            else:
                if first[1] != partner[1]:
                    continue
                fac = 2.0 * self.ell[:, first[0]] * self.ell[:, partner[0]]
            for m, coef in enumerate(sub):
                if coef is None:
                    continue
                t = fac * coef
                res[m + 1] = t if res[m + 1] is None else res[m + 1] + t
        memo[slots] = res
        return res

    def value(self, slots: tuple):
        poly = self._poly(slots)
        total = None
        for m, coef in enumerate(poly):
            if coef is None:
                continue
            t = self.f[m] * coef
            total = t if total is None else total + t
        return total


# ---------------------------------------------------------------------------
# Single-pair public surface

def _slots_for(dressing: DerivativeDressing, n: int) -> list[Slot]:
    slots = [(p, c) for p, c in dressing.bra]
    slots += [(n + p, c) for p, c in dressing.ket]
    slots += [(2 * n, c) for c in dressing.kernel_derivs]
    return slots


def overlap(gi: ECGPrimitive, gj: ECGPrimitive) -> float:
    """Overlap of two unnormalised ECGs (real, positive)."""
    return float(PairBatch.from_primitives([gi], [gj]).overlap[0])


def kernel_integral(gi: ECGPrimitive, gj: ECGPrimitive, kernel: Kernel = UNITY,
                    dressing: DerivativeDressing = NO_DRESSING,
                    ctx: ScaledIntegralContext | None = None) -> complex:
    """<p^bra g_i | (d^kd K) | p^ket g_j> for one pair, optionally CCR-scaled."""
    if gi.n != gj.n:
        raise IntegralError("particle number mismatch")
    batch = PairBatch.from_primitives([gi], [gj])
    val = batch.derivative(_slots_for(dressing, gi.n), kernel)[0] * dressing.phase
    if ctx is not None:
        val *= ctx.factor(kernel, dressing)
    return complex(val)


def permuted_integral(gi: ECGPrimitive, gj: ECGPrimitive, kernel: Kernel = UNITY,
                      dressing: DerivativeDressing = NO_DRESSING,
                      ctx: ScaledIntegralContext | None = None) -> complex:
    """Same as :func:`kernel_integral` with the ket's particle labels exchanged."""
    return kernel_integral(gi, gj.permuted(), kernel, dressing, ctx)


# ---------------------------------------------------------------------------
# Nonrelativistic fast path (no derivative machinery)

def nonrel_pair_terms(batch: PairBatch, charges, positions, masses=None,
                      electron_charges=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Overlap, kinetic and potential energy integrals for every pair in ``batch``."""
    n = batch.n
    masses = np.ones(n) if masses is None else np.asarray(masses, float)
    q = -np.ones(n) if electron_charges is None else np.asarray(electron_charges, float)
    S = batch.overlap
    A_bra = batch.B[:, :n, :]
    A_ket = batch.B[:, n:, :]
    lam = 1.0 / masses
    M = np.einsum("pkl,l,plm->pkm", A_bra, lam, A_ket)
    tr = np.einsum("pkm,pmk->p", M, batch.Cinv)
    db = batch.e - batch.y[:, :n, :]
    dk = batch.e - batch.y[:, n:, :]
    vec = np.einsum("pkc,pkm,pmc->p", db, M, dk)
    T = 2.0 * S * (1.5 * tr + vec)
    V = np.zeros(batch.P)
    Cinv = batch.Cinv
    for i in range(n):
        beta = 1.0 / Cinv[:, i, i]
        for Z, R in zip(charges, np.asarray(positions, float).reshape(-1, 3)):
            d = batch.e[:, i, :] - R[None, :]
            V += q[i] * Z * _inverse_average(beta, np.sum(d * d, axis=1))
    for i in range(n):
        for j in range(i + 1, n):
            J = np.zeros(n)
            J[i], J[j] = 1.0, -1.0
            beta = 1.0 / np.einsum("l,plm,m->p", J, Cinv, J)
            d = np.einsum("m,pmc->pc", J, batch.e)
            V += q[i] * q[j] * _inverse_average(beta, np.sum(d * d, axis=1))
    return S, T, S * V


def _inverse_average(beta, rho):
    return 2.0 * np.sqrt(beta / np.pi) * boys(0, beta * rho)[0]


def all_pairs(basis: Sequence[ECGPrimitive], permute_ket: bool = False, upper: bool = True):
    """Index arrays and batch for the (i <= j) pairs of a basis."""
    N = len(basis)
    if upper:
        I, J = np.triu_indices(N)
    else:
        I, J = np.indices((N, N)).reshape(2, -1)
    A = np.array([g.A for g in basis])
    s = np.array([g.s for g in basis])
    Ak, sk = A[J], s[J]
    if permute_ket:
        Ak = Ak[:, ::-1, ::-1]
        sk = sk[:, ::-1, :]
    return I, J, PairBatch(A[I], s[I], Ak, sk)


def dressing_slots(bra: Iterable[tuple[int, int]], ket: Iterable[tuple[int, int]],
                   kernel_derivs: Iterable[int] = (), n: int = 2) -> tuple[Slot, ...]:
    return tuple(_slots_for(DerivativeDressing(tuple(bra), tuple(ket), tuple(kernel_derivs)), n))


def cartesian_monomials(particles: Sequence[int]):
    """All products of one momentum component per listed particle."""
    return list(itertools.product(*[[(p, c) for c in range(3)] for p in particles]))
