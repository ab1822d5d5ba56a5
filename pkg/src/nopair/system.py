"""Physical system description: constants, clamped nuclei, ECG primitives."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

CODATA18_INVERSE_ALPHA = 137.035999084


class InvalidSystem(ValueError):
    """Raised when a system or basis description violates its invariants."""


@dataclass(frozen=True)
class PhysicalConstants:
    """Constants in Hartree atomic units; the speed of light equals 1/alpha."""

    inverse_alpha: float = CODATA18_INVERSE_ALPHA
    hartree_units: bool = True

    def __post_init__(self):
        if not self.inverse_alpha > 0:
            raise InvalidSystem(f"inverse_alpha must be positive, got {self.inverse_alpha}")

    @property
    def c(self) -> float:
        return float(self.inverse_alpha)

    @property
    def alpha(self) -> float:
        return 1.0 / self.inverse_alpha

    def scaled(self, factor: float) -> "PhysicalConstants":
        """Same constants with the speed of light multiplied by ``factor``."""
        return replace(self, inverse_alpha=self.inverse_alpha * factor)


@dataclass(frozen=True)
class ClampedNucleus:
    charge: float
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        pos = tuple(float(x) for x in self.position)
        if len(pos) != 3:
            raise InvalidSystem("nucleus position must be a 3-vector")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "charge", float(self.charge))


@dataclass(frozen=True)
class StateSelector:
    """Which eigenstate to target: spatial label, spin, 1-based root index."""

    symmetry: str = "S"
    spin: str = "singlet"
    index: int = 1


@dataclass(frozen=True)
class SystemSpec:
    nuclei: tuple[ClampedNucleus, ...]
    masses: tuple[float, ...] = (1.0, 1.0)
    charges: tuple[float, ...] = (-1.0, -1.0)
    state: StateSelector = field(default_factory=StateSelector)
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    name: str = ""

    # subtracted from every Dirac energy: 2 m_i c^2 summed over electrons
    @property
    def shift_convention(self) -> str:
        return "rest-mass 2*(m1+m2)*c^2 subtracted"

    @property
    def n_electrons(self) -> int:
        return len(self.masses)

    @property
    def charge_array(self) -> np.ndarray:
        return np.array([n.charge for n in self.nuclei])

    @property
    def position_array(self) -> np.ndarray:
        return np.array([n.position for n in self.nuclei]).reshape(-1, 3)

    def nuclear_repulsion(self) -> float:
        """Coulomb energy of the clamped nuclei."""
        q, R = self.charge_array, self.position_array
        e = 0.0
        for a in range(len(q)):
            for b in range(a):
                e += q[a] * q[b] / float(np.linalg.norm(R[a] - R[b]))
        return e

    def is_atom(self) -> bool:
        return len(self.nuclei) == 1 and not np.any(self.position_array)

    def is_linear_z(self) -> bool:
        """True when every nucleus lies on the z axis."""
        return not np.any(self.position_array[:, :2])

    def with_constants(self, constants: PhysicalConstants) -> "SystemSpec":
        return replace(self, constants=constants)

    def with_state(self, **kw) -> "SystemSpec":
        return replace(self, state=replace(self.state, **kw))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "nuclei": [{"charge": n.charge, "position": list(n.position)} for n in self.nuclei],
            "masses": list(self.masses),
            "charges": list(self.charges),
            "state": {"symmetry": self.state.symmetry, "spin": self.state.spin,
                      "index": self.state.index},
            "constants": {"inverse_alpha": self.constants.inverse_alpha},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SystemSpec":
        nuclei = tuple(ClampedNucleus(n["charge"], tuple(n.get("position", (0, 0, 0))))
                       for n in d["nuclei"])
        st = d.get("state", {})
        return cls(
            nuclei=nuclei,
            masses=tuple(float(m) for m in d.get("masses", (1.0, 1.0))),
            charges=tuple(float(q) for q in d.get("charges", (-1.0, -1.0))),
            state=StateSelector(st.get("symmetry", "S"), st.get("spin", "singlet"),
                                int(st.get("index", 1))),
            constants=PhysicalConstants(float(d.get("constants", {}).get(
                "inverse_alpha", CODATA18_INVERSE_ALPHA))),
            name=d.get("name", ""),
        )

    def dumps(self) -> str:
        # json writes floats with repr(), which round-trips bit-exactly
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "SystemSpec":
        return cls.from_dict(json.loads(text))


def validate_system(spec: SystemSpec) -> SystemSpec:
    """Check invariants and return the system with nuclei in canonical order."""
    if not spec.nuclei:
        raise InvalidSystem("system has no nuclei")
    if spec.n_electrons != 2 or len(spec.charges) != 2:
        raise InvalidSystem("exactly two electrons are supported")
    if any(m <= 0 for m in spec.masses):
        raise InvalidSystem("particle masses must be positive")
    if any(n.charge <= 0 for n in spec.nuclei):
        raise InvalidSystem("nuclear charges must be positive")
    if spec.state.index < 1:
        raise InvalidSystem("state selector index must be >= 1")
    if spec.state.spin != "singlet":
        raise InvalidSystem(f"unsupported spin state {spec.state.spin!r}")
    positions = [n.position for n in spec.nuclei]
    if len(set(positions)) != len(positions):
        raise InvalidSystem("two nuclei share the same position")
    nuclei = tuple(sorted(spec.nuclei, key=lambda n: (n.position, n.charge)))
    return replace(spec, nuclei=nuclei)


class ECGPrimitive:
    """Floating ECG exp(-(r-s)^T (A x 1_3) (r-s)) for n particles.

    ``A`` is n x n symmetric positive definite, ``s`` is stored as an n x 3
    array (one shift vector per particle); a flat 3n-vector is accepted.
    """

    __slots__ = ("A", "s")

    def __init__(self, A, s=None):
        A = np.array(A, dtype=float)
        if A.ndim == 0:
            A = A.reshape(1, 1)
        n = A.shape[0]
        if A.shape != (n, n):
            raise InvalidSystem(f"exponent matrix must be square, got {A.shape}")
        if not np.allclose(A, A.T, rtol=1e-14, atol=0.0):
            raise InvalidSystem("exponent matrix is not symmetric")
        A = 0.5 * (A + A.T)
        try:
            np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            raise InvalidSystem(f"exponent matrix is not positive definite:\n{A}") from None
        s = np.zeros((n, 3)) if s is None else np.array(s, dtype=float).reshape(n, 3)
        self.A = A
        self.s = s
        self.A.setflags(write=False)
        self.s.setflags(write=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def permuted(self) -> "ECGPrimitive":
        """Exchange the particle labels (only meaningful for n == 2)."""
        P = np.eye(self.n)[::-1]
        return ECGPrimitive(P @ self.A @ P, self.s[::-1])

    def translated(self, vec) -> "ECGPrimitive":
        return ECGPrimitive(self.A, self.s + np.asarray(vec, float)[None, :])

    def rotated(self, R) -> "ECGPrimitive":
        return ECGPrimitive(self.A, self.s @ np.asarray(R, float).T)

    def __repr__(self):
        return f"ECGPrimitive(A={self.A.tolist()}, s={self.s.tolist()})"

    def __eq__(self, other):
        return (isinstance(other, ECGPrimitive) and np.array_equal(self.A, other.A)
                and np.array_equal(self.s, other.s))

    __hash__ = None


def pair_exponents(a1: float, a2: float, a12: float) -> np.ndarray:
    """A for exp(-a1 r1^2 - a2 r2^2 - a12 r12^2)."""
    return np.array([[a1 + a12, -a12], [-a12, a2 + a12]])


# ---------------------------------------------------------------------------
# Presets for the systems of the benchmark table

def helium_like(Z: float, index: int = 1, constants: PhysicalConstants | None = None,
                name: str | None = None) -> SystemSpec:
    return validate_system(SystemSpec(
        nuclei=(ClampedNucleus(Z, (0.0, 0.0, 0.0)),),
        state=StateSelector("S", "singlet", index),
        constants=constants or PhysicalConstants(),
        name=name or f"Z{Z:g}",
    ))


def diatomic(Z1: float, Z2: float, R: float, name: str = "") -> SystemSpec:
    return validate_system(SystemSpec(
        nuclei=(ClampedNucleus(Z1, (0.0, 0.0, -R / 2)), ClampedNucleus(Z2, (0.0, 0.0, R / 2))),
        name=name,
    ))


def h3plus(side: float = 1.65) -> SystemSpec:
    r = side / np.sqrt(3.0)
    pos = [(r * np.cos(t), r * np.sin(t), 0.0) for t in (np.pi / 2, np.pi / 2 + 2 * np.pi / 3,
                                                        np.pi / 2 + 4 * np.pi / 3)]
    return validate_system(SystemSpec(
        nuclei=tuple(ClampedNucleus(1.0, p) for p in pos), name="H3+"))


def preset(name: str) -> SystemSpec:
    key = name.replace(" ", "").lower()
    table = {
        "h2": lambda: diatomic(1.0, 1.0, 1.4, "H2"),
        "heh+": lambda: diatomic(2.0, 1.0, 1.46, "HeH+"),
        "h3+": lambda: h3plus(1.65),
        "he": lambda: helium_like(2.0, 1, name="He"),
        "he(1s)": lambda: helium_like(2.0, 1, name="He"),
        "he(2s)": lambda: helium_like(2.0, 2, name="He(2S)"),
        "he21s": lambda: helium_like(2.0, 2, name="He(2S)"),
    }
    if key not in table:
        raise InvalidSystem(f"unknown preset {name!r}; known: {sorted(table)}")
    return table[key]()


def nuclei_from_arrays(charges: Sequence[float], positions) -> tuple[ClampedNucleus, ...]:
    positions = np.asarray(positions, float).reshape(-1, 3)
    return tuple(ClampedNucleus(q, tuple(p)) for q, p in zip(charges, positions))
