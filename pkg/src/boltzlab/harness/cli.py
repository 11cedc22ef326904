"""Command-line front end.

Subcommands: assemble, sweep, decay, simulate, audit, trilinear, report.
Each reads one config file, writes artifacts to the output directory and
exits 0 on success, 2 on validation errors, 3 on numerical failure or
missing artifacts; an unknown subcommand prints usage and exits 64.
"""
from __future__ import annotations

import argparse
import os
import sys
import traceback

from .config import ConfigError, ExperimentConfig
from . import experiments, report

COMMANDS = ("assemble", "sweep", "decay", "simulate", "audit", "trilinear",
            "report")

USAGE = """usage: boltzlab <command> [options]

commands:
  assemble   build and cache the collision operators
  sweep      linear per-mode decay-rate sweep
  decay      Besov-norm decay-rate experiment
  simulate   nonlinear run with energy audits
  audit      hypocoercivity functional audits
  trilinear  quadratic-term estimate constants
  report     consolidate artifacts in an output directory

common options: --config <path> --out <dir> --seed <u64> --threads <n>
                --cache <path>
"""


def _build_parser(command: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=f"boltzlab {command}", add_help=True)
    if command != "report":
        p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--cache", default=None)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(USAGE)
        return 0 if argv else 64
    command, rest = argv[0], argv[1:]
    if command not in COMMANDS:
        print(f"unknown command {command!r}\n", file=sys.stderr)
        print(USAGE, file=sys.stderr)
        return 64
    try:
        args = _build_parser(command).parse_args(rest)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    if args.threads is not None:
        os.environ["OMP_NUM_THREADS"] = str(args.threads)

    try:
        if command == "report":
            out = args.out or "."
            rep = report.consolidate(out)
            print(open(os.path.join(out, "summary.txt")).read())
            return 0 if rep["all_passed"] else 3
        cfg = ExperimentConfig.from_file(args.config)
        if cfg.kind != command:
            raise ConfigError(
                f"config is for kind {cfg.kind!r}, command is {command!r}")
        if args.seed is not None:
            cfg.values["experiment"]["seed"] = int(args.seed)
        out = args.out or cfg.values["experiment"]["out"]
        os.makedirs(out, exist_ok=True)
        driver = {
            "assemble": experiments.assemble_experiment,
            "sweep": experiments.sweep_experiment,
            "decay": experiments.decay_experiment,
            "simulate": experiments.simulate_experiment,
            "audit": experiments.audit_experiment,
            "trilinear": experiments.trilinear_experiment,
        }[command]
        driver(cfg, out, cache_path=args.cache)
        return 0
    except report.MissingArtifactsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, RuntimeError, MemoryError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
