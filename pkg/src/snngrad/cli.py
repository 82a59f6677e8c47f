"""Command line entry point: ``snngrad <experiment> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from typing import Optional, Sequence

from .config import EXPERIMENTS, ConfigError, ExperimentConfig
from .experiments import RUNNERS, write_outputs

logger = logging.getLogger("snngrad")

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snngrad", description=__doc__)
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--seed", type=int)
        p.add_argument("--n-seeds", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--engine", action="append", choices=["exodus", "slayer", "bptt"],
                       help="backward engine (repeatable)")
        p.add_argument("--scale", action="append", type=float, help="surrogate scale (repeatable)")
        p.add_argument("--epochs", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        if cfg.experiment != args.experiment:
            raise ConfigError(f"config is for {cfg.experiment!r}, not {args.experiment!r}")
    else:
        cfg = ExperimentConfig.default(args.experiment)
    overrides = {
        "seed": args.seed,
        "n_seeds": args.n_seeds,
        "out": args.out,
        "engines": args.engine,
        "scales": args.scale,
        "epochs": args.epochs,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return dataclasses.replace(cfg, **overrides).validate()


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rows, summary = RUNNERS[cfg.experiment](cfg)
    path = write_outputs(cfg, rows, summary)
    print(f"{cfg.experiment}: wrote {path} (run {cfg.run_id()})")
    if cfg.experiment == "ift-check" and not summary["passed"]:
        for row in rows:
            if not row["passed"]:
                print(f"FAILED {row['check']} instance {row['instance']}: {row['value']:.3g} > {row['tolerance']}",
                      file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
