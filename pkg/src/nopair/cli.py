"""Command-line entry point.

    nopair run CONFIG [--mode MODE] [--output-dir DIR] [--threads N] [-v | -q]
    nopair MODE CONFIG [...]          shorthand for ``run --mode MODE``
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import MODES, ConfigError, load_config, validate_config
from .pipeline import PipelineError, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nopair",
                                description="No-pair Dirac-Coulomb(-Breit) ECG calculations")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run",) + MODES:
        sp = sub.add_parser(name, help="run the configured pipeline" if name == "run"
                            else f"run with mode={name}")
        sp.add_argument("config", help="YAML run configuration")
        if name == "run":
            sp.add_argument("--mode", choices=MODES, help="override the configured mode")
        sp.add_argument("-o", "--output-dir", help="directory for result files")
        sp.add_argument("-j", "--threads", type=int,
                        help="worker processes for independent Z-scan points")
        sp.add_argument("-v", "--verbose", action="count", default=0)
        sp.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        mode = args.command if args.command != "run" else (args.mode or cfg.mode)
        cfg = replace(cfg, mode=mode)
        if args.output_dir:
            cfg = replace(cfg, output_dir=args.output_dir)
        if args.threads is not None:
            cfg = replace(cfg, threads=args.threads)
        verbosity = -1 if args.quiet else cfg.verbosity + args.verbose
        cfg = validate_config(replace(cfg, verbosity=verbosity))
    except (ConfigError, OSError) as exc:
        print(f"nopair: configuration error: {exc}", file=sys.stderr)
        return 2
    level = {-1: logging.WARNING, 0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")
    try:
        outcome = run(cfg)
    except PipelineError as exc:
        print(f"nopair: {exc} (partial results flagged in {cfg.output_dir})", file=sys.stderr)
        return 1
    if verbosity >= 0:
        for row in outcome.rows:
            parts = [f"{row.system} N={row.n_basis}"]
            for label, v in (("E_nonrel", row.e_nonrel), ("E_DC", row.e_dc),
                             ("E_DCB", row.e_dcb)):
                if v is not None:
                    parts.append(f"{label}={v:.9f}")
            print("  ".join(parts))
        for name, path in outcome.files.items():
            print(f"wrote {name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
