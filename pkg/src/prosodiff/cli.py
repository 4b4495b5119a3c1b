"""Command-line entry point: stage-by-stage pipeline driver.

Exit codes: 0 success, 1 runtime failure, 2 usage / config error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import experiment
from .config import ConfigError, ExperimentConfig, load_config

STAGES = {
    "synthdata": lambda cfg, out: experiment.stage_synthdata(cfg, out),
    "extract": lambda cfg, out: experiment.stage_extract(cfg, out),
    "train-diffusion": lambda cfg, out: experiment.stage_train_diffusion(cfg, out),
    "train-prosody": lambda cfg, out: experiment.stage_train_prosody(cfg, out),
    "sample": lambda cfg, out: experiment.stage_sample(cfg, out),
    "evaluate": lambda cfg, out: experiment.stage_evaluate(cfg, out),
    "experiment": lambda cfg, out: experiment.run_experiment(cfg, out),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prosodiff",
        description="Prosody-conditioned guided-diffusion pipeline on a "
                    "synthetic corpus",
    )
    sub = parser.add_subparsers(dest="command")
    for name in STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", type=Path, default=None,
                       help="key=value config file (defaults when omitted)")
        p.add_argument("--out", type=Path, default=Path("out"),
                       help="output directory (default: ./out)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        if name == "sample":
            p.add_argument("--prosody-source", default=None,
                           choices=("none", "predicted", "oracle"),
                           help="override the config prosody source")
    return parser


def cli_dispatch(argv) -> int:
    parser = _build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2

    try:
        config = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        source = getattr(args, "prosody_source", None)
        if source is not None:
            config = replace(config, prosody_source=source)
    except (ConfigError, OSError) as exc:
        print(f"prosodiff: config error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2

    try:
        STAGES[args.command](config, args.out)
    except Exception as exc:  # stage failures are runtime errors, not usage
        print(f"prosodiff: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    return 0


def entrypoint() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()
