"""Run configuration: YAML text validated into a :class:`RunConfig`."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .system import (CODATA18_INVERSE_ALPHA, ClampedNucleus, InvalidSystem, PhysicalConstants,
                     StateSelector, SystemSpec, preset, validate_system)

MODES = ("optimize", "nonrel", "dc", "dcb", "pt4", "zscan", "full")
BUILTIN = "builtin"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BasisSchedule:
    sizes: tuple[int, ...] = (16, 32, 64)
    checkpoint: str | None = None      # path, "builtin", or None (optimise from scratch)
    candidates: int = 50
    refine_every: int = 10
    sweeps: int = 2
    refine_cycles: int = 1
    max_evals: int = 100
    method: str = "lbfgs"


@dataclass(frozen=True)
class CCRSettings:
    theta: float = 0.15
    theta_ref: float = 0.225
    projector: str = "real"
    cutoff: float = 1e-13


@dataclass(frozen=True)
class ZScanSettings:
    charges: tuple[float, ...] = (1, 2, 3, 4, 5, 6)
    size: int = 40
    recipe: str = "optimize"           # "optimize" per Z, or "scaled" template basis


@dataclass(frozen=True)
class RunConfig:
    mode: str
    system: SystemSpec
    basis: BasisSchedule = field(default_factory=BasisSchedule)
    seed: int | None = None
    ccr: CCRSettings = field(default_factory=CCRSettings)
    zscan: ZScanSettings = field(default_factory=ZScanSettings)
    output_dir: str = "results"
    threads: int = 1
    verbosity: int = 1
    dump_matrices: bool = False

    @property
    def constants(self) -> PhysicalConstants:
        return self.system.constants

    def with_mode(self, mode: str) -> "RunConfig":
        return validate_config(replace(self, mode=mode))


_TOP_KEYS = {"mode", "system", "basis", "seed", "ccr", "zscan", "output_dir", "threads",
             "verbosity", "constants", "dump_matrices"}


def _section(raw: dict, key: str, cls):
    sec = raw.get(key) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"'{key}' must be a mapping")
    known = set(cls.__dataclass_fields__)
    extra = set(sec) - known
    if extra:
        raise ConfigError(f"unknown keys in '{key}': {sorted(extra)}")
    return sec


def _system_from(raw: dict, constants: PhysicalConstants) -> SystemSpec:
    sys_raw = raw.get("system")
    if not isinstance(sys_raw, dict):
        raise ConfigError("a 'system' mapping is required")
    try:
        if "preset" in sys_raw:
            spec = preset(str(sys_raw["preset"]))
            if "state" in sys_raw:
                spec = spec.with_state(index=int(sys_raw["state"].get("index", 1)))
        else:
            nuclei = sys_raw.get("nuclei")
            if not nuclei:
                raise ConfigError("system needs either 'preset' or 'nuclei'")
            st = sys_raw.get("state", {})
            spec = SystemSpec(
                nuclei=tuple(ClampedNucleus(float(n["charge"]),
                                            tuple(float(x) for x in n.get("position", (0, 0, 0))))
                             for n in nuclei),
                state=StateSelector(st.get("symmetry", "S"), st.get("spin", "singlet"),
                                    int(st.get("index", 1))),
                name=str(sys_raw.get("name", "custom")),
            )
        return validate_system(spec.with_constants(constants))
    except (InvalidSystem, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid system: {exc}") from exc


def parse_config(raw: dict, base_dir: Path | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    extra = set(raw) - _TOP_KEYS
    if extra:
        raise ConfigError(f"unknown configuration keys: {sorted(extra)}")
    consts = raw.get("constants") or {}
    try:
        constants = PhysicalConstants(float(consts.get("inverse_alpha", CODATA18_INVERSE_ALPHA)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid constants: {exc}") from exc
    basis = _section(raw, "basis", BasisSchedule)
    if "sizes" in basis:
        basis = dict(basis, sizes=tuple(basis["sizes"]))
    ccr = _section(raw, "ccr", CCRSettings)
    zs = _section(raw, "zscan", ZScanSettings)
    if "charges" in zs:
        zs = dict(zs, charges=tuple(zs["charges"]))
    mode = raw.get("mode")
    system = _system_from(raw, constants) if mode != "zscan" or "system" in raw else \
        validate_system(preset("he").with_constants(constants))
    try:
        cfg = RunConfig(
            mode=mode,
            system=system,
            basis=BasisSchedule(**basis),
            seed=raw.get("seed"),
            ccr=CCRSettings(**ccr),
            zscan=ZScanSettings(**zs),
            output_dir=str(raw.get("output_dir", "results")),
            threads=raw.get("threads", 1),
            verbosity=raw.get("verbosity", 1),
            dump_matrices=bool(raw.get("dump_matrices", False)),
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if base_dir is not None and cfg.basis.checkpoint not in (None, BUILTIN):
        ck = Path(cfg.basis.checkpoint)
        if not ck.is_absolute():
            cfg = replace(cfg, basis=replace(cfg.basis, checkpoint=str(base_dir / ck)))
    return validate_config(cfg)


def validate_config(cfg: RunConfig) -> RunConfig:
    """Mode-specific checks; raises :class:`ConfigError` before any computation."""
    if cfg.mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {cfg.mode!r}")
    if cfg.seed is not None and (isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int)
                                 or cfg.seed < 0):
        raise ConfigError("seed must be a non-negative integer")
    needs_optimizer = cfg.mode == "optimize" or (cfg.mode != "zscan" and cfg.basis.checkpoint is None) \
        or (cfg.mode == "zscan" and cfg.zscan.recipe == "optimize")
    if cfg.mode == "optimize" and cfg.seed is None:
        raise ConfigError("mode 'optimize' requires a seed")
    if needs_optimizer and cfg.seed is None:
        raise ConfigError("no basis checkpoint given: a seed is required to optimise one")
    sizes = cfg.basis.sizes
    if not sizes or any(not isinstance(n, int) or n < 1 for n in sizes):
        raise ConfigError("basis.sizes must be a non-empty list of positive integers")
    if list(sizes) != sorted(set(sizes)):
        raise ConfigError("basis.sizes must be strictly increasing")
    if cfg.basis.method not in ("lbfgs", "powell"):
        raise ConfigError("basis.method must be 'lbfgs' or 'powell'")
    for k in ("candidates", "max_evals"):
        if getattr(cfg.basis, k) < 1:
            raise ConfigError(f"basis.{k} must be positive")
    if min(cfg.basis.refine_every, cfg.basis.refine_cycles, cfg.basis.sweeps) < 0:
        raise ConfigError("basis refinement counts must be non-negative")
    if not 0 < cfg.ccr.theta < 0.785 or not 0 < cfg.ccr.theta_ref < 0.785:
        raise ConfigError("CCR angles must lie in (0, pi/4)")
    if cfg.ccr.theta == cfg.ccr.theta_ref:
        raise ConfigError("ccr.theta_ref must differ from ccr.theta")
    if cfg.ccr.projector not in ("real", "rotated"):
        raise ConfigError("ccr.projector must be 'real' or 'rotated'")
    if cfg.mode == "zscan":
        if len(cfg.zscan.charges) < 2:
            raise ConfigError("zscan needs at least two nuclear charges")
        if any(z <= 0 for z in cfg.zscan.charges):
            raise ConfigError("zscan charges must be positive")
        if cfg.zscan.recipe not in ("optimize", "scaled"):
            raise ConfigError("zscan.recipe must be 'optimize' or 'scaled'")
        if cfg.zscan.size < 1:
            raise ConfigError("zscan.size must be positive")
    if not isinstance(cfg.threads, int) or cfg.threads < 1:
        raise ConfigError("threads must be a positive integer")
    if not isinstance(cfg.verbosity, int):
        raise ConfigError("verbosity must be an integer")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parse_config(raw, base_dir=path.parent)


def loads_config(text: str) -> RunConfig:
    try:
        return parse_config(yaml.safe_load(text))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc
