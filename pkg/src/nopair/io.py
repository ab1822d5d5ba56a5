"""File output helpers: atomic writes, result tables, plot data."""
from __future__ import annotations

import csv
import datetime
import io
import logging
import os
import tempfile
from pathlib import Path

log = logging.getLogger("nopair")

TIMESTAMP_PREFIX = "# generated "


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Result tables.  Every table starts with '#' comment lines naming the constants
# and settings used; the only line that varies between identical runs is the
# one beginning with TIMESTAMP_PREFIX.

def _e(x) -> str:
    return "" if x is None else f"{x:.9f}"


def _i(x) -> str:
    return "" if x is None else str(int(x))


def _g(x, spec=".3e") -> str:
    return "" if x is None else format(x, spec)


def _table(title: str, header: dict, columns: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    buf.write(f"# nopair {title}\n")
    buf.write("# " + " ".join(f"{k}={v}" for k, v in header.items()) + "\n")
    stamp = datetime.datetime.now(datetime.timezone.utc).replace(microsecond=0).isoformat()
    buf.write(f"{TIMESTAMP_PREFIX}{stamp}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


RESULT_COLUMNS = ["system", "state", "Z", "n_basis", "E_nonrel", "E_DC", "E_DCB", "eps4_DC",
                  "eps4_Breit", "eps4_DCB", "delta4_DC_nEh", "delta4_DCB_nEh", "imag_DC",
                  "imag_DCB", "n_positive", "n_ambiguous"]


def result_csv(rows, header: dict) -> str:
    """ResultRow table: energies in E_h to 9 decimals, deviations in whole nE_h."""
    body = [[r.system, r.state, "" if r.z is None else f"{r.z:g}", str(r.n_basis),
             _e(r.e_nonrel), _e(r.e_dc), _e(r.e_dcb), _e(r.eps_dc), _e(r.eps_breit),
             _e(r.eps_dcb), _i(r.delta_dc), _i(r.delta_dcb), _g(r.imag_dc), _g(r.imag_dcb),
             _i(r.n_plus), _i(r.n_ambiguous)] for r in rows]
    return _table("results", header, RESULT_COLUMNS, body)


def convergence_csv(rows, header: dict) -> str:
    """Energy versus basis size with increments relative to the previous size."""
    body = []
    prev = None
    for r in rows:
        inc = [None] * 3
        if prev is not None:
            inc = [None if a is None or b is None else (a - b) * 1e9
                   for a, b in zip((r.e_nonrel, r.e_dc, r.e_dcb),
                                   (prev.e_nonrel, prev.e_dc, prev.e_dcb))]
        body.append([r.system, str(r.n_basis), _e(r.e_nonrel), _e(r.e_dc), _e(r.e_dcb)]
                    + [_g(x, ".1f") for x in inc])
        prev = r
    return _table("convergence", header,
                  ["system", "n_basis", "E_nonrel", "E_DC", "E_DCB", "dE_nonrel_nEh",
                   "dE_DC_nEh", "dE_DCB_nEh"], body)


def zscan_csv(rows, header: dict) -> str:
    """Per-Z deviation table, E_var - (E_nonrel + eps4) in nE_h."""
    body = [[f"{r.z:g}", str(r.n_basis), _e(r.e_nonrel), _e(r.e_dc), _e(r.e_dcb), _e(r.eps_dc),
             _e(r.eps_dcb), _g(r.deviation_dc, ".3f"), _g(r.deviation_dcb, ".3f")] for r in rows]
    return _table("zscan", header,
                  ["Z", "n_basis", "E_nonrel", "E_DC", "E_DCB", "eps4_DC", "eps4_DCB",
                   "deviation_DC_nEh", "deviation_DCB_nEh"], body)


def timings_csv(rows, run_timings: dict, header: dict) -> str:
    """Wall times in seconds; kept apart so the result tables are reproducible."""
    stages = sorted({k for r in rows for k in r.timings} | set(run_timings))
    body = [["run", ""] + [_g(run_timings.get(s), ".3f") for s in stages]]
    for r in rows:
        label = r.system if r.z is None else f"Z{r.z:g}"
        body.append([label, str(r.n_basis)] + [_g(r.timings.get(s), ".3f") for s in stages])
    return _table("timings", header, ["system", "n_basis"] + stages, body)


def strip_timestamp(text: str) -> str:
    return "".join(l for l in text.splitlines(True) if not l.startswith(TIMESTAMP_PREFIX))


# ---------------------------------------------------------------------------
# Plot data

def emit_plotdata(series: dict) -> str:
    """Two-column blocks, one per method, separated by blank lines.

    Each block opens with a single '# method: <name>  columns: Z deviation/nEh'
    line followed by ``Z value`` pairs; values carry 3 significant digits.
    Methods whose series is empty (or all missing) are skipped with a warning.
    """
    zs = {z for pts in series.values() for z, _ in pts}
    if len(zs) < 2:
        raise ValueError("plot data needs at least two Z values")
    blocks = []
    for name, pts in series.items():
        pts = [(z, d) for z, d in pts if d is not None]
        if not pts:
            log.warning("plot data: method %s has no points; omitted", name)
            continue
        lines = [f"# method: {name}  columns: Z deviation/nEh"]
        lines += [f"{z:g} {d:.3g}" for z, d in sorted(pts)]
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks)
