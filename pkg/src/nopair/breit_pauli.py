"""Leading-order (alpha^2) Breit-Pauli energies over nonrelativistic singlets.

For a spin-singlet state with unit electron masses and charges

    eps_DC    = alpha^2 < -1/8 sum_i p_i^4 + pi/2 sum_a Z_a sum_i delta(r_ia)
                           - pi delta(r_12) >
    eps_Breit = alpha^2 < -1/2 p_1 . W . p_2 + 2 pi delta(r_12) >,
    W_ab      = delta_ab / r_12 + r_12a r_12b / r_12^3
              = 2 delta_ab / r_12 - d_a d_b r_12,

the second line being the orbit-orbit and spin-spin contact terms that the
Breit operator adds.  p^4 is evaluated as <p^2 psi | p^2 psi>.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .integrals import (UNITY, boys, DerivativeDressing, PairBatch, _slots_for, contact_inter,
                        contact_nucleus, inter_coulomb, inter_linear, nuclear_attraction)
from .nonrel import nonrel_matrices
from .eigensolve import PencilSolveOptions, solve_pencil
from .system import PhysicalConstants, SystemSpec


class PerturbationError(ValueError):
    pass


class BPTerm(enum.Enum):
    MASS_VELOCITY = "MassVelocity"
    ONE_ELECTRON_DARWIN = "OneElectronDarwin"
    TWO_ELECTRON_CONTACT = "TwoElectronDarwinContact"
    ORBIT_ORBIT = "OrbitOrbit"


@dataclass(frozen=True)
class BPContribution:
    term: BPTerm
    group: str          # "DC" or "Breit"
    value: float        # E_h, alpha^2 included


@dataclass
class BreitPauliResult:
    energy_nonrel: float
    expectation: dict                    # bare operator expectation values
    contributions: list = field(default_factory=list)
    alpha: float = 0.0
    norm_residual: float = 0.0

    def group(self, name: str) -> float:
        return float(sum(c.value for c in self.contributions if c.group == name))

    @property
    def eps_dc(self) -> float:
        return self.group("DC")

    @property
    def eps_breit(self) -> float:
        return self.group("Breit")

    @property
    def eps_dcb(self) -> float:
        return self.eps_dc + self.eps_breit


def _operator_pairs(system: SystemSpec, A_bra, s_bra, A_ket, s_ket) -> dict:
    """Bare operator integrals <g_i|X|g_j> for aligned pairs (no symmetrisation)."""
    n = 2
    batch = PairBatch(A_bra, s_bra, A_ket, s_ket, check=False)
    out = {}

    def dressed(bra, ket, kernel, kd=()):
        d = DerivativeDressing(tuple(bra), tuple(ket), tuple(kd))
        return (batch.derivative(_slots_for(d, n), kernel) * d.phase).real

    p4 = 0.0
    for i in range(n):
        for a in range(3):
            for b in range(3):
                p4 = p4 + dressed(((i, a), (i, a)), ((i, b), (i, b)), UNITY)
    out["p4"] = p4
    dn = 0.0
    for i in range(n):
        for Z, R in zip(system.charge_array, system.position_array):
            dn = dn + Z * batch.derivative((), contact_nucleus(R, i, n))
    out["delta_nuc"] = dn
    out["delta_12"] = batch.derivative((), contact_inter())
    coul, lin = inter_coulomb(), inter_linear()
    oo = 0.0
    for a in range(3):
        oo = oo + 2.0 * dressed(((0, a),), ((1, a),), coul)
        for b in range(3):
            oo = oo - dressed(((0, a),), ((1, b),), lin, (a, b))
    out["p1Wp2"] = oo
    return out


def bp_matrices(system: SystemSpec, basis) -> dict:
    """Singlet-symmetrised operator matrices (same normalisation as nonrel)."""
    return _symmetrised(system, basis, _operator_pairs)


def _coulomb_terms(system: SystemSpec):
    """(weight, J, centre) for the attractive sum K_D = sum_a Z_a sum_i 1/r_ia and for 1/r12."""
    nuc = []
    for i in range(2):
        J = np.zeros(2)
        J[i] = 1.0
        for Z, R in zip(system.charge_array, system.position_array):
            if Z != 0:
                nuc.append((float(Z), J, np.asarray(R, float)))
    return nuc, (1.0, np.array([1.0, -1.0]), np.zeros(3))


def _gauss_legendre01(npts: int):
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def _product_pairs(system: SystemSpec, A_bra, s_bra, A_ket, s_ket, npts: int) -> dict:
    """<g_i|K1 K2|g_j> for K1, K2 in {K_D, 1/r12} on aligned pairs.

    The first factor is written as 1/|u| = 2/sqrt(pi) int_0^inf exp(-t^2 u^2) dt.
    For fixed t the extra Gaussian is a rank-one update of the pair's product
    Gaussian (exponent C, centre e), handled in closed form, and the second
    factor is the usual Boys-function average.  The t axis is mapped onto
    (0, 1) with a per-pair scale equal to the width of the u distribution,
    then integrated by Gauss-Legendre.
    """
    nuc, ee = _coulomb_terms(system)
    batch = PairBatch(A_bra, s_bra, A_ket, s_ket, check=False)
    Cinv, e, S = batch.Cinv, batch.e, batch.overlap
    terms = [(z, J, R, "D") for z, J, R in nuc] + [(1.0, ee[1], ee[2], "W")]
    v, wq = _gauss_legendre01(npts)
    P = batch.P
    out = {"DD": np.zeros(P), "DW": np.zeros(P), "WW": np.zeros(P)}
    for z1, J1, R1, lab1 in terms:
        w1 = np.einsum("l,plm,m->p", J1, Cinv, J1)
        d1 = np.einsum("m,pmc->pc", J1, e) - R1
        dd1 = np.sum(d1 * d1, axis=1)
        tau = 1.0 / np.sqrt(w1)
        second = []
        for z2, J2, R2, lab2 in terms:
            if lab1 == "W" and lab2 == "D":
                continue            # DW is collected from the D side
            same = np.array_equal(J1, J2)
            w12 = np.einsum("l,plm,m->p", J2, Cinv, J1)
            w22 = np.einsum("l,plm,m->p", J2, Cinv, J2)
            d2 = np.einsum("m,pmc->pc", J2, e) - R2
            second.append((z2, lab1 + lab2, same, w12, w22, d2, R1 - R2))
        for vk, wk in zip(v, wq):
            t2 = (tau * vk / (1.0 - vk)) ** 2
            dt = wk * tau / (1.0 - vk) ** 2
            h = 1.0 / (1.0 + t2 * w1)
            gam = t2 * h
            pref = dt * h**1.5 * np.exp(-gam * dd1)
            for z2, key, same, w12, w22, d2, dR in second:
                if same:
                    var = w1 * h
                    dv = d1 * h[:, None] + dR[None, :]
                else:
                    var = w22 - gam * w12 * w12
                    dv = d2 - (gam * w12)[:, None] * d1
                beta = 1.0 / var
                val = 2.0 * np.sqrt(beta / np.pi) * boys(0, beta * np.sum(dv * dv, axis=1))[0]
                out[key] += z1 * z2 * pref * val
    for k in out:
        out[k] *= 2.0 / np.sqrt(np.pi) * S
    return out


def _regularization_pairs(system: SystemSpec, A_bra, s_bra, A_ket, s_ket) -> dict:
    """Single-kernel pieces of the regularised forms on aligned pairs."""
    nuc, _ = _coulomb_terms(system)
    batch = PairBatch(A_bra, s_bra, A_ket, s_ket, check=False)
    n = 2
    kernels = [(Z, nuclear_attraction(R, int(np.argmax(J)))) for Z, J, R in nuc]
    coul = inter_coulomb()
    grad = lambda k: sum(batch.derivative(_slots_for(DerivativeDressing(((j, a),), ((j, a),)), n), k)
                         for j in range(n) for a in range(3))
    out = {"D": sum(Z * batch.derivative((), k) for Z, k in kernels),
           "W": batch.derivative((), coul),
           "gradD": sum(Z * grad(k) for Z, k in kernels),
           "gradW": grad(coul)}
    p12 = 0.0
    for a in range(3):
        for b in range(3):
            d = DerivativeDressing(((0, a), (0, a)), ((1, b), (1, b)))
            p12 = p12 + (batch.derivative(_slots_for(d, n), UNITY) * d.phase).real
    out["p1sq_p2sq"] = p12
    return out


def _symmetrised(system: SystemSpec, basis, fn, *args) -> dict:
    A = np.array([g.A for g in basis])
    s = np.array([g.s for g in basis])
    N = len(basis)
    I, J = np.triu_indices(N)
    d = fn(system, A[I], s[I], A[J], s[J], *args)
    x = fn(system, A[I], s[I], A[J][:, ::-1, ::-1], s[J][:, ::-1, :], *args)
    mats = {}
    for k in d:
        M = np.zeros((N, N))
        M[I, J] = d[k] + x[k]
        M[J, I] = d[k] + x[k]
        mats[k] = M
    return mats


def coulomb_product_matrices(system: SystemSpec, basis, npts: int = 32) -> dict:
    """Singlet-symmetrised matrices of K_D^2, K_D/r12 and 1/r12^2."""
    return _symmetrised(system, basis, _product_pairs, npts)


def regularized_expectations(system: SystemSpec, E: float, avg) -> dict:
    """Contact and p^4 expectation values from eigenstate identities.

    ``avg(key)`` returns the normalised expectation of a matrix from
    :func:`_regularization_pairs` or :func:`coulomb_product_matrices`.
    With V = Vnn - K_D + 1/r12 and sum_i p_i^2 psi = 2 (E - V) psi:

        sum_a Z_a sum_i <delta(r_ia)> = <(E-V) K_D>/pi - sum_j <grad_j psi|K_D|grad_j psi>/(2 pi)
        <delta(r_12)>                = <(E-V)/r12>/(2 pi) - sum_j <grad_j psi|1/r12|grad_j psi>/(4 pi)
        <p_1^4 + p_2^4>              = 4 <(E-V)^2> - 2 <p_1^2 p_2^2>
    """
    e = E - system.nuclear_repulsion()
    D, W, DD, DW, WW = (avg(k) for k in ("D", "W", "DD", "DW", "WW"))
    ev_D = e * D + DD - DW
    ev_W = e * W + DW - WW
    ev_sq = e * e + DD + WW + 2 * e * D - 2 * e * W - 2 * DW
    return {
        "delta_nuc": ev_D / np.pi - avg("gradD") / (2 * np.pi),
        "delta_12": ev_W / (2 * np.pi) - avg("gradW") / (4 * np.pi),
        "p4": 4.0 * ev_sq - 2.0 * avg("p1sq_p2sq"),
    }


FORMS = ("regularized", "direct")


def expectation_values(system: SystemSpec, basis, coeffs: np.ndarray | None = None,
                       index: int | None = None, form: str = "regularized",
                       npts: int = 32) -> tuple[float, dict, float]:
    """Nonrelativistic energy and bare operator expectation values.

    ``form="direct"`` integrates the contact operators and <p^2 psi|p^2 psi>
    as they stand; ``form="regularized"`` replaces them by the eigenstate
    identities of :func:`regularized_expectations`, which converge much faster
    with basis size for Gaussian wave functions lacking the exact cusps.
    """
    if form not in FORMS:
        raise PerturbationError(f"unknown expectation form {form!r}")
    if system.state.spin != "singlet":
        raise PerturbationError("only spin singlets are supported")
    index = system.state.index if index is None else index
    S, H = nonrel_matrices(system, basis)
    if coeffs is None:
        sol = solve_pencil(H, S, PencilSolveOptions(hermitian=True))
        coeffs = sol.vectors[:, index - 1].real
    coeffs = np.asarray(coeffs, float)
    norm = coeffs @ S @ coeffs
    E = coeffs @ H @ coeffs / norm
    resid = np.linalg.norm(H @ coeffs - E * (S @ coeffs)) / (np.linalg.norm(H @ coeffs) + 1e-300)
    mats = bp_matrices(system, basis)
    avg = lambda M: float(coeffs @ M @ coeffs / norm)
    ev = {k: avg(M) for k, M in mats.items()}
    if form == "regularized":
        extra = _symmetrised(system, basis, _regularization_pairs)
        extra.update(coulomb_product_matrices(system, basis, npts))
        ev.update(regularized_expectations(system, float(E), lambda k: avg(extra[k])))
    return float(E), ev, float(resid)


def epsilon4(system: SystemSpec, basis, coeffs=None, index: int | None = None,
             constants: PhysicalConstants | None = None,
             residual_tol: float = 1e-6, form: str = "regularized") -> BreitPauliResult:
    """alpha^2 Breit-Pauli energy with DC / Breit grouping."""
    if any(m != 1.0 for m in system.masses) or any(q != -1.0 for q in system.charges):
        raise PerturbationError("Breit-Pauli terms implemented for electrons only")
    E, ev, resid = expectation_values(system, basis, coeffs, index, form)
    if resid > residual_tol:
        raise PerturbationError(f"input is not an eigenvector (residual {resid:.2e})")
    a2 = (constants or system.constants).alpha ** 2
    contrib = [
        BPContribution(BPTerm.MASS_VELOCITY, "DC", -a2 / 8.0 * ev["p4"]),
        BPContribution(BPTerm.ONE_ELECTRON_DARWIN, "DC", a2 * np.pi / 2.0 * ev["delta_nuc"]),
        BPContribution(BPTerm.TWO_ELECTRON_CONTACT, "DC", -a2 * np.pi * ev["delta_12"]),
        BPContribution(BPTerm.TWO_ELECTRON_CONTACT, "Breit", 2.0 * a2 * np.pi * ev["delta_12"]),
        BPContribution(BPTerm.ORBIT_ORBIT, "Breit", -a2 / 2.0 * ev["p1Wp2"]),
    ]
    return BreitPauliResult(E, ev, contrib, np.sqrt(a2), resid)


# ---------------------------------------------------------------------------
# One-electron closed forms

def dirac_energy(Z: float, n: int = 1, kappa: int = -1,
                 constants: PhysicalConstants | None = None) -> float:
    """Sommerfeld fine-structure energy with the rest mass removed (E_h)."""
    c = (constants or PhysicalConstants()).c
    za = Z / c
    if abs(kappa) < 1 or abs(kappa) > n or (kappa > 0 and kappa == n):
        raise PerturbationError(f"invalid quantum numbers n={n}, kappa={kappa}")
    if za >= abs(kappa):
        raise PerturbationError("supercritical nuclear charge")
    gamma = np.sqrt(kappa * kappa - za * za)
    denom = n - abs(kappa) + gamma
    return float(c * c * (1.0 / np.sqrt(1.0 + (za / denom) ** 2) - 1.0))


def pt4_energy(Z: float, n: int = 1, kappa: int = -1,
               constants: PhysicalConstants | None = None) -> float:
    """Nonrelativistic energy plus the leading alpha^2 correction."""
    a = (constants or PhysicalConstants()).alpha
    return float(-Z**2 / (2 * n * n) - Z**4 * a * a / (2 * n**4) * (n / abs(kappa) - 0.75))


def one_electron_exact_gap(Z: float, n: int = 1, kappa: int = -1,
                           constants: PhysicalConstants | None = None):
    """(E_exact, E_pt4, gap in nE_h) for a hydrogen-like level."""
    e = dirac_energy(Z, n, kappa, constants)
    p = pt4_energy(Z, n, kappa, constants)
    return e, p, (e - p) * 1e9
