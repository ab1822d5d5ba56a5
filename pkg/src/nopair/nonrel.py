"""Nonrelativistic reference: spin-singlet ECG energies and basis optimisation."""
from __future__ import annotations

import dataclasses
import io
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from .eigensolve import PencilSolveOptions, lowest_eigenvalues, solve_pencil
from .integrals import PairBatch, nonrel_pair_terms
from .system import ECGPrimitive, InvalidSystem, SystemSpec, pair_exponents

CHECKPOINT_MAGIC = "# nopair-basis v1"


class OptimizationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Matrices

def _pair_rows(system: SystemSpec, A_bra, s_bra, A_ket, s_ket):
    """Singlet-symmetrised (S, H) elements <g_i|(1+P)|g_j> for aligned pairs.

    H includes the nuclear repulsion, so eigenvalues are total energies.
    """
    q, R = system.charge_array, system.position_array
    m, e = system.masses, system.charges
    out_S = 0.0
    out_H = 0.0
    for perm in (False, True):
        Ak, sk = (A_ket[:, ::-1, ::-1], s_ket[:, ::-1, :]) if perm else (A_ket, s_ket)
        batch = PairBatch(A_bra, s_bra, Ak, sk, check=False)
        S, T, V = nonrel_pair_terms(batch, q, R, m, e)
        out_S = out_S + S
        out_H = out_H + T + V
    return out_S, out_H + system.nuclear_repulsion() * out_S


def nonrel_matrices(system: SystemSpec, basis) -> tuple[np.ndarray, np.ndarray]:
    """Overlap and Hamiltonian over the singlet functions (1 + P) g_i / sqrt(2).

    The normalisation constant is chosen so that each matrix element equals
    <g_i|X|g_j> + <g_i|X|P g_j>.
    """
    A = np.array([g.A for g in basis])
    s = np.array([g.s for g in basis])
    N = len(basis)
    I, J = np.triu_indices(N)
    S_u, H_u = _pair_rows(system, A[I], s[I], A[J], s[J])
    S = np.zeros((N, N))
    H = np.zeros((N, N))
    S[I, J] = S_u
    S[J, I] = S_u
    H[I, J] = H_u
    H[J, I] = H_u
    return S, H


def nonrel_energy(system: SystemSpec, basis, index: int | None = None,
                  cutoff: float = 1e-13) -> float:
    """Variational energy of the requested singlet root (1-based)."""
    index = system.state.index if index is None else index
    S, H = nonrel_matrices(system, basis)
    vals = lowest_eigenvalues(H, S, index, cutoff)
    if len(vals) < index:
        raise OptimizationError("basis too small for the requested root")
    return float(vals[index - 1])


def nonrel_solution(system: SystemSpec, basis, cutoff: float = 1e-13):
    S, H = nonrel_matrices(system, basis)
    return solve_pencil(H, S, PencilSolveOptions(cutoff=cutoff, hermitian=True))


# ---------------------------------------------------------------------------
# Parameterisation

@dataclass(frozen=True)
class BasisParameterization:
    """Map between ECG primitives and unconstrained optimiser vectors.

    Exponents are stored as a scaled Cholesky factor (log L11, L21/L11, log L22),
    which is invariant under a uniform rescaling of A apart from a log shift;
    shift components are free only along the axes allowed by ``shift_mode``
    ('none' for atoms, 'z' for linear molecules on the z axis, 'xy' for planar
    molecules in the xy plane, 'xyz' otherwise).
    """

    shift_mode: str = "none"

    @classmethod
    def for_system(cls, system: SystemSpec) -> "BasisParameterization":
        pos = system.position_array
        if system.is_atom():
            return cls("none")
        if system.is_linear_z():
            return cls("z")
        if not np.any(pos[:, 2]):
            return cls("xy")
        return cls("xyz")

    @property
    def axes(self) -> tuple[int, ...]:
        return {"none": (), "z": (2,), "xy": (0, 1), "xyz": (0, 1, 2)}[self.shift_mode]

    @property
    def size(self) -> int:
        return 3 + 2 * len(self.axes)

    def to_vector(self, g: ECGPrimitive) -> np.ndarray:
        L = np.linalg.cholesky(g.A)
        v = [np.log(L[0, 0]), L[1, 0] / L[0, 0], np.log(L[1, 1])]
        v += [g.s[p, c] for p in range(2) for c in self.axes]
        return np.array(v)

    def from_vector(self, v) -> ECGPrimitive:
        v = np.asarray(v, float)
        l11 = np.exp(v[0])
        L = np.array([[l11, 0.0], [v[1] * l11, np.exp(v[2])]])
        s = np.zeros((2, 3))
        k = 3
        for p in range(2):
            for c in self.axes:
                s[p, c] = v[k]
                k += 1
        return ECGPrimitive(L @ L.T, s)


# ---------------------------------------------------------------------------
# Rank-one update of a solved basis

class _ReducedProblem:
    """Eigen-decomposition of a fixed basis used to score one extra function."""

    def __init__(self, system: SystemSpec, basis, index: int, matrices=None):
        self.system = system
        self.index = index
        self.A = np.array([g.A for g in basis]).reshape(-1, 2, 2)
        self.s = np.array([g.s for g in basis]).reshape(-1, 2, 3)
        if len(basis):
            S, H = matrices if matrices is not None else nonrel_matrices(system, basis)
            d = 1.0 / np.sqrt(np.diag(S))
            Ss = S * d[:, None] * d[None, :]
            w, U = np.linalg.eigh(Ss)
            keep = w > 1e-13 * w[-1]
            X = d[:, None] * U[:, keep] / np.sqrt(w[keep])
            eps, Y = np.linalg.eigh(X.T @ H @ X)
            self.eps = eps
            self.V = X @ Y
        else:
            self.eps = np.zeros(0)
            self.V = np.zeros((0, 0))

    @property
    def energy(self) -> float:
        return float(self.eps[self.index - 1]) if len(self.eps) >= self.index else np.inf

    def score(self, cands: list[ECGPrimitive], min_norm: float = 1e-9) -> np.ndarray:
        """Target-root energy after adding each candidate separately."""
        K = len(cands)
        N = len(self.A)
        Ac = np.array([g.A for g in cands])
        sc = np.array([g.s for g in cands])
        Sd, Hd = _pair_rows(self.system, Ac, sc, Ac, sc)
        if N:
            Sb, Hb = _pair_rows(self.system, np.repeat(Ac, N, 0), np.repeat(sc, N, 0),
                                np.tile(self.A, (K, 1, 1)), np.tile(self.s, (K, 1, 1)))
            sk = Sb.reshape(K, N) @ self.V
            hk = Hb.reshape(K, N) @ self.V
        else:
            sk = hk = np.zeros((K, 0))
        out = np.full(K, np.inf)
        for i in range(K):
            out[i] = self._root(Sd[i], Hd[i], sk[i], hk[i], min_norm)
        return out

    def _root(self, Snn, Hnn, s, h, min_norm):
        eps = self.eps
        norm2 = Snn - s @ s
        if not np.isfinite(norm2) or norm2 <= min_norm * Snn:
            return np.inf
        w = (h - eps * s) / np.sqrt(norm2)
        d = (Hnn - 2.0 * s @ h + s @ (eps * s)) / norm2
        k = self.index
        n = len(eps)

        def f(E):
            return d - E - np.sum(w * w / (eps - E))

        lo = eps[k - 2] if k >= 2 and n >= k - 1 else None
        hi = eps[k - 1] if n >= k else None
        if hi is None and lo is None:
            return d
        span = max(abs(d), 1.0) + np.sum(np.abs(w))
        a = lo if lo is not None else min(d, hi) - span
        b = hi if hi is not None else max(d, lo) + span
        tiny = 1e-14 * max(1.0, abs(b))
        a_, b_ = (a + tiny if lo is not None else a), (b - tiny if hi is not None else b)
        if a_ >= b_:
            return hi if hi is not None else np.inf
        fa, fb = f(a_), f(b_)
        if not (fa > 0 > fb):
            # root pinned to a pole within rounding
            return b if hi is not None else np.inf
        return optimize.brentq(f, a_, b_, xtol=1e-15, rtol=1e-15, maxiter=200)


# ---------------------------------------------------------------------------
# Optimisation driver

@dataclass
class OptimizationRecord:
    system: str
    seed: int
    size: int
    energies: list[float] = field(default_factory=list)   # after each growth/refine stage
    sizes: list[int] = field(default_factory=list)
    evaluations: int = 0
    wall_time: float = field(default=0.0, compare=False)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _scale(system: SystemSpec) -> float:
    return float(np.max(system.charge_array)) ** 2


def _draw_candidates(rng: np.random.Generator, system: SystemSpec, param: BasisParameterization,
                     basis, K: int) -> list[ECGPrimitive]:
    z2 = _scale(system)
    pos = system.position_array
    out = []
    while len(out) < K:
        if basis and rng.random() < 0.5:
            tmpl = basis[rng.integers(len(basis))]
            v = param.to_vector(tmpl)
            v[:3] += rng.normal(scale=0.4, size=3)
            if param.axes:
                v[3:] += rng.normal(scale=0.15, size=len(v) - 3)
            try:
                out.append(param.from_vector(v))
            except InvalidSystem:
                continue
            continue
        a1, a2 = np.exp(rng.uniform(np.log(0.03), np.log(30.0), size=2)) * z2
        a12 = np.exp(rng.uniform(np.log(0.005), np.log(3.0))) * np.sqrt(z2)
        if rng.random() < 0.2:
            a12 = -0.3 * a12 * min(a1, a2) / (a12 + min(a1, a2))
        A = pair_exponents(a1, a2, a12)
        s = np.zeros((2, 3))
        if param.axes:
            for p in range(2):
                centre = pos[rng.integers(len(pos))]
                for c in param.axes:
                    s[p, c] = centre[c] * rng.uniform(0.0, 1.2) + rng.normal(scale=0.1)
        try:
            out.append(ECGPrimitive(A, s))
        except InvalidSystem:
            continue
    return out


def _refine_one(system, param, basis, i, index, max_evals):
    rest = basis[:i] + basis[i + 1:]
    red = _ReducedProblem(system, rest, index)
    v0 = param.to_vector(basis[i])
    e0 = red.score([basis[i]])[0]
    count = [0]

    def obj(v):
        count[0] += 1
        try:
            g = param.from_vector(v)
        except InvalidSystem:
            return 1e6
        if np.any(np.abs(v[[0, 2]]) > 12):
            return 1e6
        e = red.score([g])[0]
        return e if np.isfinite(e) else 1e6

    res = optimize.minimize(obj, v0, method="Powell",
                            options={"maxfev": max_evals, "xtol": 1e-4, "ftol": 1e-13})
    if res.fun < e0:
        basis[i] = param.from_vector(res.x)
        return res.fun, count[0]
    return e0, count[0]


def replacement_cycle(system: SystemSpec, basis, rng: np.random.Generator,
                      candidates: int = 30, index: int | None = None) -> float:
    """One stochastic sweep: each function is replaced by the best of random
    perturbations of itself whenever that lowers the target-root energy.

    Works in place on ``basis`` and returns the final energy.
    """
    index = system.state.index if index is None else index
    param = BasisParameterization.for_system(system)
    S, H = nonrel_matrices(system, basis)
    A = np.array([g.A for g in basis])
    s = np.array([g.s for g in basis])
    N = len(basis)
    energy = np.inf
    for i in range(N):
        keep = np.arange(N) != i
        red = _ReducedProblem(system, [basis[k] for k in np.flatnonzero(keep)], index,
                              matrices=(S[np.ix_(keep, keep)], H[np.ix_(keep, keep)]))
        v0 = param.to_vector(basis[i])
        cands = [basis[i]]
        while len(cands) < candidates:
            width = 10.0 ** rng.uniform(-3.0, -0.5)
            v = v0 + rng.normal(scale=width, size=v0.size)
            if np.any(np.abs(v[[0, 2]]) > 12):
                continue
            try:
                cands.append(param.from_vector(v))
            except InvalidSystem:
                continue
        scores = red.score(cands)
        best = int(np.argmin(scores))
        energy = scores[best]
        if best == 0:
            continue
        g = cands[best]
        basis[i] = g
        A[i], s[i] = g.A, g.s
        Sr, Hr = _pair_rows(system, np.repeat(g.A[None], N, 0), np.repeat(g.s[None], N, 0), A, s)
        S[i, :] = S[:, i] = Sr
        H[i, :] = H[:, i] = Hr
    return float(energy)


def optimize_basis(system: SystemSpec, size: int, seed: int = 0, candidates: int = 50,
                   refine_every: int = 10, sweeps: int = 2, refine_cycles: int = 1,
                   max_evals: int = 200, initial=None, refine: str = "lbfgs", log=None
                   ) -> tuple[list[ECGPrimitive], OptimizationRecord]:
    """Grow a basis to ``size`` functions by stochastic selection, then refine.

    Each new function is the best of ``candidates`` random draws scored by the
    exact target-root energy of the enlarged basis.  Every ``refine_every``
    additions the basis gets ``sweeps`` stochastic replacement sweeps.  At the
    end, ``refine_cycles`` times, it gets the same sweeps followed by a local
    refinement: with ``refine="lbfgs"`` all parameters move together for
    ``max_evals`` L-BFGS iterations; with ``refine="powell"`` each function is
    re-optimised in turn with Powell's method (``max_evals`` energy calls each).
    Results are deterministic for a given ``seed``.
    """
    if refine not in ("lbfgs", "powell"):
        raise OptimizationError(f"unknown refinement method {refine!r}")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    param = BasisParameterization.for_system(system)
    index = system.state.index
    basis = list(initial or [])
    rec = OptimizationRecord(system.name, seed, size)

    def note(label, e):
        rec.energies.append(float(e))
        rec.sizes.append(len(basis))
        if log:
            log(f"{system.name}: {label} N={len(basis)} E={e:.12f}")

    red = _ReducedProblem(system, basis, index)
    while len(basis) < size:
        cands = _draw_candidates(rng, system, param, basis, candidates)
        scores = red.score(cands)
        rec.evaluations += len(cands)
        best = int(np.argmin(scores))
        if not np.isfinite(scores[best]):
            continue
        basis.append(cands[best])
        if refine_every and len(basis) % refine_every == 0 and len(basis) > index:
            for _ in range(sweeps):
                replacement_cycle(system, basis, rng, candidates, index)
                rec.evaluations += len(basis) * candidates
        red = _ReducedProblem(system, basis, index)
        if len(basis) % 10 == 0 or len(basis) == size:
            note("grow", red.energy)
    for cycle in range(refine_cycles):
        for _ in range(sweeps):
            replacement_cycle(system, basis, rng, candidates, index)
            rec.evaluations += len(basis) * candidates
        if refine == "lbfgs":
            basis, _ = refine_all(system, basis, maxiter=max_evals, index=index)
            rec.evaluations += max_evals
        else:
            for i in range(len(basis)):
                _, ne = _refine_one(system, param, basis, i, index, max_evals)
                rec.evaluations += ne
        note(f"refine {cycle + 1}", _ReducedProblem(system, basis, index).energy)
    rec.wall_time = time.perf_counter() - t0
    return basis, rec


def _solve_root(S, H, index, cutoff=1e-14):
    d = 1.0 / np.sqrt(np.diag(S))
    w, U = np.linalg.eigh(S * d[:, None] * d[None, :])
    keep = w > cutoff * w[-1]
    X = d[:, None] * U[:, keep] / np.sqrt(w[keep])
    eps, Y = np.linalg.eigh(X.T @ H @ X)
    return eps[index - 1], X @ Y[:, index - 1]


def energy_gradient(system: SystemSpec, param: BasisParameterization, vecs: np.ndarray,
                    index: int, step: float = 1e-5, overlap_limit: float = 0.999,
                    penalty: float = 1.0) -> tuple[float, np.ndarray, float]:
    """Target-root energy and its gradient with respect to all basis parameters.

    The gradient uses the Hellmann-Feynman form dE = c^T (dH - E dS) c; the
    derivative of each basis function's matrix row is taken by central
    differences, so only O(N^2) extra pair integrals are needed.  A quadratic
    penalty on normalised overlaps above ``overlap_limit`` keeps functions from
    coalescing into a numerically singular metric.  Returns (E, grad, penalty);
    the gradient includes the penalty.
    """
    N, P = vecs.shape
    basis = [param.from_vector(v) for v in vecs]
    S, H = nonrel_matrices(system, basis)
    E, c = _solve_root(S, H, index)
    A = np.array([g.A for g in basis])
    s = np.array([g.s for g in basis])
    pert_A, pert_s = [], []
    for i in range(N):
        for k in range(P):
            for sign in (1.0, -1.0):
                v = vecs[i].copy()
                v[k] += sign * step
                g = param.from_vector(v)
                pert_A.append(g.A)
                pert_s.append(g.s)
    pert_A = np.array(pert_A)
    pert_s = np.array(pert_s)
    M = len(pert_A)
    Sr, Hr = _pair_rows(system, np.repeat(pert_A, N, 0), np.repeat(pert_s, N, 0),
                        np.tile(A, (M, 1, 1)), np.tile(s, (M, 1, 1)))
    Sr = Sr.reshape(N, P, 2, N)
    Hr = Hr.reshape(N, P, 2, N)
    dS = (Sr[:, :, 0] - Sr[:, :, 1]) / (2 * step)
    dH = (Hr[:, :, 0] - Hr[:, :, 1]) / (2 * step)
    grad = 2.0 * c[:, None] * np.einsum("ikj,j->ik", dH - E * dS, c)
    d = 1.0 / np.sqrt(np.diag(S))
    Sn = S * d[:, None] * d[None, :]
    np.fill_diagonal(Sn, 0.0)
    excess = np.maximum(np.abs(Sn) - overlap_limit, 0.0)
    pen = 0.5 * penalty * float(np.sum(excess ** 2))
    if pen > 0.0:
        fprime = 2.0 * penalty * excess * np.sign(Sn)
        idx = np.arange(N)
        dSii = 2.0 * dS[idx, :, idx]                       # (N, P)
        dSn = dS * d[:, None, None] * d[None, None, :] \
            - 0.5 * Sn[:, None, :] * (dSii / np.diag(S)[:, None])[:, :, None]
        grad = grad + np.einsum("ikj,ij->ik", dSn, fprime)
    return float(E), grad + 0.0, pen


def refine_all(system: SystemSpec, basis, maxiter: int = 200, index: int | None = None,
               log=None) -> tuple[list[ECGPrimitive], float]:
    """Simultaneous L-BFGS refinement of every nonlinear parameter."""
    index = system.state.index if index is None else index
    param = BasisParameterization.for_system(system)
    x0 = np.array([param.to_vector(g) for g in basis])
    shape = x0.shape
    best = [np.inf, x0.ravel().copy()]

    def fg(x):
        v = x.reshape(shape)
        if np.any(np.abs(v[:, [0, 2]]) > 12):
            return 1e3, np.zeros_like(x)
        try:
            E, g, pen = energy_gradient(system, param, v, index)
        except (InvalidSystem, np.linalg.LinAlgError):
            return 1e3, np.zeros_like(x)
        if E + pen < best[0]:
            best[0], best[1] = E + pen, x.copy()
        return E + pen, g.ravel()

    res = optimize.minimize(fg, x0.ravel(), jac=True, method="L-BFGS-B",
                            options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-10,
                                     "maxcor": 30})
    if log:
        log(f"{system.name}: L-BFGS {res.nit} iterations objective={best[0]:.12f}")
    out = [param.from_vector(r) for r in best[1].reshape(shape)]
    return out, nonrel_energy(system, out, index)


# ---------------------------------------------------------------------------
# Checkpoints

def dumps_basis(basis, system: SystemSpec | None = None, energy: float | None = None,
                meta: dict | None = None) -> str:
    buf = io.StringIO()
    buf.write(CHECKPOINT_MAGIC + "\n")
    if system is not None:
        buf.write(f"# system {system.dumps()}\n")
    if energy is not None:
        buf.write(f"# energy {energy:.17g}\n")
    for k, v in (meta or {}).items():
        buf.write(f"# {k} {v}\n")
    buf.write(f"# count {len(basis)}\n")
    buf.write("# A11 A12 A22 s1x s1y s1z s2x s2y s2z\n")
    for g in basis:
        vals = [g.A[0, 0], g.A[0, 1], g.A[1, 1], *g.s.ravel()]
        buf.write(" ".join(f"{x:.17g}" for x in vals) + "\n")
    return buf.getvalue()


def loads_basis(text: str) -> tuple[list[ECGPrimitive], dict]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != CHECKPOINT_MAGIC:
        raise InvalidSystem("not a basis checkpoint")
    meta: dict = {}
    basis = []
    for line in lines[1:]:
        if line.startswith("#"):
            parts = line[1:].strip().split(" ", 1)
            if len(parts) == 2:
                meta[parts[0]] = parts[1]
            continue
        if not line.strip():
            continue
        v = [float(x) for x in line.split()]
        if len(v) != 9:
            raise InvalidSystem(f"malformed basis line: {line!r}")
        A = np.array([[v[0], v[1]], [v[1], v[2]]])
        basis.append(ECGPrimitive(A, np.array(v[3:]).reshape(2, 3)))
    if "count" in meta:
        meta["count"] = int(meta["count"])
        if meta["count"] != len(basis):
            raise InvalidSystem("checkpoint count does not match its body")
    if "energy" in meta:
        meta["energy"] = float(meta["energy"])
    if "system" in meta:
        meta["system"] = SystemSpec.loads(meta["system"])
    return basis, meta


def save_basis(path, basis, system=None, energy=None, meta=None) -> None:
    from .io import atomic_write_text
    atomic_write_text(path, dumps_basis(basis, system, energy, meta))


def load_basis(path) -> tuple[list[ECGPrimitive], dict]:
    return loads_basis(Path(path).read_text())
