"""Command-line entry point: run pipeline stages from a TOML config.

Usage: gridcascade <subcommand> --config <path> [--seed N] [--out DIR]

Failures caused by bad inputs or missing stage artifacts exit nonzero with a
single machine-parsable line on stderr: `error[<category>]: <message>`.
"""

from __future__ import annotations

import argparse
import sys

from .config import default_config, load_config
from .errors import GridCascadeError
from .pipeline import Pipeline
from .version import VERSION

_STAGES = {
    "grid-gen": Pipeline.run_grid_gen,
    "dataset-build": Pipeline.run_dataset_build,
    "train": Pipeline.run_train,
    "exposure": Pipeline.run_exposure,
    "baseline": Pipeline.run_baselines,
    "evaluate": Pipeline.run_evaluate,
    "report": Pipeline.run_report,
    "run-all": Pipeline.run_all,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridcascade",
        description=(
            "Cascading-failure workbench: simulate grid cascades, train a "
            "cross-grid attention model, rank line vulnerability zero-shot, "
            "and benchmark against structural baselines."
        ),
    )
    parser.add_argument("--version", action="version", version=f"gridcascade {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _STAGES:
        stage = sub.add_parser(name, help=f"run the {name} stage")
        stage.add_argument(
            "--config",
            default=None,
            help="TOML experiment file (omit for the shipped default experiment)",
        )
        stage.add_argument(
            "--seed", type=int, default=None, help="override the master seed"
        )
        stage.add_argument(
            "--out", default=None, help="override the output directory"
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else default_config()
        config = config.with_overrides(master_seed=args.seed, out_dir=args.out)
        _STAGES[args.command](Pipeline(config))
    except GridCascadeError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
