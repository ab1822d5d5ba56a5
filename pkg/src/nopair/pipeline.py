"""End-to-end driver: basis, nonrelativistic reference, no-pair energies, perturbation theory."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .breit_pauli import epsilon4
from .config import BUILTIN, RunConfig
from .dirac import OperatorKind, assemble
from .io import (atomic_write_bytes, atomic_write_text, convergence_csv, emit_plotdata,
                 result_csv, timings_csv, zscan_csv)
from .nonrel import load_basis, nonrel_solution, optimize_basis, save_basis
from .projector import classify_noninteracting, projected_energy
from .references import builtin_checkpoint
from .system import ECGPrimitive, SystemSpec, helium_like

log = logging.getLogger("nopair")


def deviation_nEh(e_var, e_nonrel, eps) -> float | None:
    if None in (e_var, e_nonrel, eps):
        return None
    return (e_var - e_nonrel - eps) * 1e9


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ResultRow:
    system: str
    state: str
    n_basis: int
    z: float | None = None
    e_nonrel: float | None = None
    e_dc: float | None = None
    e_dcb: float | None = None
    eps_dc: float | None = None
    eps_breit: float | None = None
    imag_dc: float | None = None
    imag_dcb: float | None = None
    n_plus: int | None = None
    n_ambiguous: int | None = None
    timings: dict = field(default_factory=dict)

    @property
    def eps_dcb(self) -> float | None:
        if self.eps_dc is None or self.eps_breit is None:
            return None
        return self.eps_dc + self.eps_breit

    @property
    def deviation_dc(self) -> float | None:
        """E_DC - (E_nonrel + eps_DC) in nE_h."""
        return deviation_nEh(self.e_dc, self.e_nonrel, self.eps_dc)

    @property
    def deviation_dcb(self) -> float | None:
        return deviation_nEh(self.e_dcb, self.e_nonrel, self.eps_dcb)

    @property
    def delta_dc(self) -> int | None:
        """Deviation rounded to whole nE_h."""
        d = self.deviation_dc
        return None if d is None else int(round(d))

    @property
    def delta_dcb(self) -> int | None:
        d = self.deviation_dcb
        return None if d is None else int(round(d))


@dataclass
class RunOutcome:
    rows: list
    files: dict
    status: str = "complete"
    failed_stage: str | None = None
    classification: object = None
    matrices: object = None
    bases: dict = field(default_factory=dict)


def state_label(system: SystemSpec) -> str:
    mult = {"singlet": 1, "triplet": 3}.get(system.state.spin, 0)
    return f"{system.state.index}_{mult}{system.state.symmetry}"


class _Stage:
    """Context manager naming the pipeline stage for error reports and timings."""

    def __init__(self, name: str, timings: dict):
        self.name, self.timings = name, timings

    def __enter__(self):
        self.t0 = time.perf_counter()
        log.info("stage %s", self.name)
        return self

    def __exit__(self, et, ev, tb):
        self.timings[self.name] = self.timings.get(self.name, 0.0) + time.perf_counter() - self.t0
        if ev is not None and not isinstance(ev, PipelineError):
            raise PipelineError(self.name, ev) from ev
        return False


# ---------------------------------------------------------------------------
# Basis provisioning

def _checkpoint_basis(cfg: RunConfig) -> list[ECGPrimitive]:
    ck = cfg.basis.checkpoint
    if ck == BUILTIN:
        ref = builtin_checkpoint(cfg.system.name)
        if ref is None:
            raise FileNotFoundError(f"no shipped basis for system {cfg.system.name!r}")
        from .nonrel import loads_basis
        return loads_basis(ref.read_text())[0]
    return load_basis(ck)[0]


def provide_bases(cfg: RunConfig, timings: dict) -> tuple[dict, bool]:
    """Map basis size -> basis.  The flag says whether bases are nested prefixes."""
    sizes = cfg.basis.sizes
    if cfg.basis.checkpoint is not None and cfg.mode != "optimize":
        with _Stage("basis", timings):
            full = _checkpoint_basis(cfg)
            if sizes[-1] > len(full):
                raise ValueError(f"checkpoint holds {len(full)} functions, "
                                 f"schedule asks for {sizes[-1]}")
            return {n: full[:n] for n in sizes}, True
    out = {}
    basis = None
    if cfg.basis.checkpoint is not None:
        with _Stage("basis", timings):
            basis = _checkpoint_basis(cfg)
    with _Stage("optimize", timings):
        for n in sizes:
            if basis is not None and len(basis) >= n:
                out[n] = basis[:n]
                continue
            basis, rec = optimize_basis(
                cfg.system, n, seed=cfg.seed + n, candidates=cfg.basis.candidates,
                refine_every=cfg.basis.refine_every, sweeps=cfg.basis.sweeps,
                refine_cycles=cfg.basis.refine_cycles,
                max_evals=cfg.basis.max_evals, initial=basis, refine=cfg.basis.method,
                log=log.debug)
            out[n] = list(basis)
    return out, False


# ---------------------------------------------------------------------------
# Per-system evaluation

def _wants(mode: str) -> dict:
    return {
        "dc": mode in ("dc", "dcb", "full", "zscan"),
        "dcb": mode in ("dcb", "full", "zscan"),
        "pt4": mode in ("pt4", "full", "zscan"),
    }


def evaluate(system: SystemSpec, bases: dict, nested: bool, mode: str, cfg: RunConfig,
             timings: dict, z: float | None = None):
    """ResultRows for every basis size, plus the classification and operator
    matrices of the largest basis (None when no no-pair stage ran)."""
    want = _wants(mode)
    rows = []
    classification = mats = None
    big = None
    kind = OperatorKind.DCB if want["dcb"] else OperatorKind.DC
    if (want["dc"] or want["dcb"]) and nested:
        with _Stage("assemble", timings):
            big = assemble(system, bases[max(bases)], kind)
    for n, basis in bases.items():
        row = ResultRow(system.name, state_label(system), n, z=z)
        rt = row.timings
        with _Stage("nonrel", rt):
            sol = nonrel_solution(system, basis, cfg.ccr.cutoff)
            k = system.state.index - 1
            row.e_nonrel = float(sol.values[k].real)
            coeffs = sol.vectors[:, k].real
        if want["dc"] or want["dcb"]:
            with _Stage("assemble", rt):
                mats = big.truncated(n) if big is not None else assemble(system, basis, kind)
            with _Stage("classify", rt):
                classification = classify_noninteracting(
                    mats, cfg.ccr.theta, cfg.ccr.theta_ref, cfg.ccr.cutoff,
                    mass=min(system.masses))
            with _Stage("dc", rt):
                r = projected_energy(system, basis, OperatorKind.DC, cfg.ccr.theta,
                                     cfg.ccr.theta_ref, mode=cfg.ccr.projector, matrices=mats,
                                     classification=classification)
                row.e_dc, row.imag_dc = r.energy, r.imag
                row.n_plus, row.n_ambiguous = r.n_plus, r.n_ambiguous
            if want["dcb"]:
                with _Stage("dcb", rt):
                    r = projected_energy(system, basis, OperatorKind.DCB, cfg.ccr.theta,
                                         cfg.ccr.theta_ref, mode=cfg.ccr.projector,
                                         matrices=mats, classification=classification)
                    row.e_dcb, row.imag_dcb = r.energy, r.imag
        if want["pt4"]:
            with _Stage("pt4", rt):
                bp = epsilon4(system, basis, coeffs)
                row.eps_dc, row.eps_breit = bp.eps_dc, bp.eps_breit
        rows.append(row)
        log.info("%s N=%d E_nonrel=%s E_DC=%s E_DCB=%s", system.name, n, row.e_nonrel,
                 row.e_dc, row.e_dcb)
    return rows, classification, mats


# ---------------------------------------------------------------------------
# Z-scan

def _scaled_basis(template, z_template: float, z: float):
    f = (z / z_template) ** 2
    return [ECGPrimitive(g.A * f, g.s * (z_template / z)) for g in template]


def _zscan_point(args):
    cfg, z = args
    system = helium_like(z, constants=cfg.constants, name=f"Z{z:g}")
    timings = {}
    if cfg.zscan.recipe == "optimize":
        with _Stage("optimize", timings):
            basis, _ = optimize_basis(system, cfg.zscan.size, seed=cfg.seed,
                                      candidates=cfg.basis.candidates,
                                      refine_every=cfg.basis.refine_every,
                                      sweeps=cfg.basis.sweeps,
                                      refine_cycles=cfg.basis.refine_cycles,
                                      max_evals=cfg.basis.max_evals, refine=cfg.basis.method)
    else:
        with _Stage("basis", timings):
            if cfg.basis.checkpoint is None:
                raise PipelineError("basis", ValueError("scaled recipe needs a checkpoint"))
            tcfg = replace(cfg, system=helium_like(2.0, constants=cfg.constants, name="He"))
            template = _checkpoint_basis(tcfg)[:cfg.zscan.size]
            basis = _scaled_basis(template, 2.0, z)
    rows, _, _ = evaluate(system, {len(basis): basis}, False, "zscan", cfg, timings, z=z)
    rows[0].timings.update(timings)
    return rows[0]


def run_zscan(cfg: RunConfig) -> list[ResultRow]:
    jobs = [(cfg, float(z)) for z in cfg.zscan.charges]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as ex:
            return list(ex.map(_zscan_point, jobs))
    return [_zscan_point(j) for j in jobs]


# ---------------------------------------------------------------------------
# Top level

def _header(cfg: RunConfig, status: str, failed: str | None) -> dict:
    c = cfg.constants
    h = {
        "inverse_alpha": repr(c.inverse_alpha),
        "c": repr(c.c),
        "overlap_cutoff": repr(cfg.ccr.cutoff),
        "theta": repr(cfg.ccr.theta),
        "theta_ref": repr(cfg.ccr.theta_ref),
        "projector": cfg.ccr.projector,
        "mode": cfg.mode,
        "seed": "none" if cfg.seed is None else str(cfg.seed),
        "status": status,
    }
    if failed:
        h["failed_stage"] = failed
    return h


def run(cfg: RunConfig, output_dir: str | Path | None = None) -> RunOutcome:
    """Execute the configured pipeline and write result files atomically.

    On failure the rows completed so far are written with ``status=partial``
    and the :class:`PipelineError` naming the stage is re-raised.
    """
    out = Path(output_dir or cfg.output_dir)
    outcome = RunOutcome([], {})
    timings: dict = {}
    error = None
    try:
        if cfg.mode == "zscan":
            outcome.rows = run_zscan(cfg)
        else:
            bases, nested = provide_bases(cfg, timings)
            outcome.bases = bases
            for n, b in bases.items():
                if cfg.mode == "optimize" or cfg.basis.checkpoint is None:
                    path = out / f"basis_{n}.txt"
                    save_basis(path, b, cfg.system, None, {"seed": cfg.seed, "size": n})
                    outcome.files[f"basis_{n}"] = path
            mode = "nonrel" if cfg.mode == "optimize" else cfg.mode
            outcome.rows, outcome.classification, outcome.matrices = evaluate(
                cfg.system, bases, nested, mode, cfg, timings)
    except PipelineError as exc:
        error = exc
        outcome.status, outcome.failed_stage = "partial", exc.stage
    header = _header(cfg, outcome.status, outcome.failed_stage)
    files = outcome.files
    if cfg.dump_matrices and outcome.matrices is not None:
        files["matrices"] = out / "matrices.bin"
        atomic_write_bytes(files["matrices"], outcome.matrices.dumps())
    files["results"] = out / "results.csv"
    atomic_write_text(files["results"], result_csv(outcome.rows, header))
    files["timings"] = out / "timings.csv"
    atomic_write_text(files["timings"], timings_csv(outcome.rows, timings, header))
    if cfg.mode != "zscan":
        files["convergence"] = out / "convergence.csv"
        atomic_write_text(files["convergence"], convergence_csv(outcome.rows, header))
    if outcome.classification is not None:
        files["classification"] = out / "classification.csv"
        atomic_write_text(files["classification"], outcome.classification.to_csv())
    if cfg.mode == "zscan" and outcome.rows:
        files["zscan"] = out / "zscan.csv"
        atomic_write_text(files["zscan"], zscan_csv(outcome.rows, header))
        series = {
            "DC": [(r.z, r.deviation_dc) for r in outcome.rows],
            "DCB": [(r.z, r.deviation_dcb) for r in outcome.rows],
        }
        files["plotdata"] = out / "zscan_plot.dat"
        atomic_write_text(files["plotdata"], emit_plotdata(series))
    if error is not None:
        raise error
    return outcome

