"""Command-line entry point: ``shotnoise run | validate | reproduce``.

Exit codes: 0 success, 1 Monte-Carlo check failed, 2 invalid configuration,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .config import ConfigError, load_config, parse_config
from .experiment import NumericalFailure, run_experiment, validate_experiment, write_csv, write_tables
from .noise import NoiseError
from .presets import PRESETS
from .propagate import IntegrationError
from .qcore import CrossingError

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("shotnoise")


def _numerical(exc):
    print(f"numerical failure: {exc}", file=sys.stderr)
    return EXIT_NUMERICAL


def cmd_run(args):
    cfg = load_config(args.config)
    out = Path(args.out) if args.out else Path(Path(args.config).stem)
    paths = write_tables(run_experiment(cfg), out)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_validate(args):
    cfg = load_config(args.config)
    if cfg.sweep:
        raise ConfigError("sweep", "validate runs a single parameter point; remove the sweep")
    if "D" in cfg.noise:
        raise ConfigError("noise", "validate needs nu and a distribution to sample strikes")
    seed = cfg.seed if args.seed is None else args.seed
    report, table = validate_experiment(cfg, args.traj, seed)
    out = Path(args.out) if args.out else Path(Path(args.config).stem)
    write_csv(table, out / "validation.csv")
    (out / "validation.json").write_text(json.dumps({
        "passed": report.passed,
        "fraction_within": report.fraction_within,
        "max_deviation": report.max_deviation,
        "elementwise_fraction": report.elementwise_fraction,
        "n_traj": args.traj,
        "seed": seed,
    }, indent=2) + "\n")
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_reproduce(args):
    if args.figure not in PRESETS:
        raise ConfigError("figure", f"unknown figure id {args.figure!r}; expected one of {', '.join(PRESETS)}")
    out = Path(args.out) / args.figure
    for label, raw in PRESETS[args.figure]:
        t0 = time.perf_counter()
        for p in write_tables(run_experiment(parse_config(raw)), out, prefix=f"{label}_"):
            print(p)
        log.info("%s %s: %.1f s", args.figure, label, time.perf_counter() - t0)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="shotnoise", description="Poisson white-noise master-equation experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a TOML config (or re-run the config stored in a result CSV)")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default: config file stem)")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("validate", help="compare a trajectory average with the master equation")
    p.add_argument("config")
    p.add_argument("--traj", type=int, default=4000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("reproduce", help="write the data behind a figure")
    p.add_argument("figure", help=", ".join(PRESETS))
    p.add_argument("--out", default="figures")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "traj", 2) < 2:
        print("error: --traj must be at least 2", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, IntegrationError, CrossingError, NoiseError, FloatingPointError) as exc:
        return _numerical(exc)


if __name__ == "__main__":
    sys.exit(main())
