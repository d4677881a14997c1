"""
main - Argument parsing and dispatch for the ``prefdiff`` command.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from ..diffcore import debug_mode
from ..errors import PrefDiffError, format_exception
from .commands import (
    cmd_curate,
    cmd_eval,
    cmd_finetune,
    cmd_report,
    cmd_train_base,
    cmd_variance,
    cmd_verify,
)
from .config_io import RunConfig, load_config

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
METHODS = ("cpo", "dpo")


def parse_scales(text: str) -> list[float]:
    """Parse ``0,1,2.5`` into a non-empty list of non-negative guidance scales."""
    try:
        scales = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from e
    if not scales or any(w < 0 for w in scales):
        raise argparse.ArgumentTypeError(f"need non-negative scales, got {text!r}")
    return scales


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Flat key=value run configuration.")
    common.add_argument("--seed", type=int, help="Global seed (overrides run.seed).")
    common.add_argument("--out", type=Path, help="Output directory (overrides run.out_dir).")
    common.add_argument("--task", choices=("discrete", "continuous"), help="Condition kind.")
    common.add_argument(
        "--deterministic", action="store_true", help="Single-threaded, bit-reproducible run."
    )
    common.add_argument("--log-level", default="INFO", choices=LOG_LEVELS)

    parser = argparse.ArgumentParser(
        prog="prefdiff",
        description="Preference optimization of conditional diffusion models on a toy task.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("train-base", parents=[common], help="Pretrain the base denoiser.")
    p.set_defaults(handler=cmd_train_base)

    p = sub.add_parser("curate", parents=[common], help="Curate CPO triplets or DPO pairs.")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--base", type=Path, help="Base checkpoint (default OUT/base.ckpt).")
    p.set_defaults(handler=cmd_curate)

    p = sub.add_parser("finetune", parents=[common], help="Fine-tune with CPO or DPO.")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--base", type=Path, help="Base checkpoint (default OUT/base.ckpt).")
    p.add_argument("--data", type=Path, help="Curated records (default OUT/curated-METHOD.jsonl).")
    p.set_defaults(handler=cmd_finetune)

    p = sub.add_parser("eval", parents=[common], help="Controllability, error rate and MMD.")
    p.add_argument("--checkpoint", type=Path, help="Checkpoint to evaluate (default base).")
    p.add_argument("--baseline", type=Path, help="Also report error-rate reduction vs this.")
    p.add_argument("--cfg-sweep", action="store_true", help="Evaluate every guidance scale.")
    p.add_argument("--cfg-scales", type=parse_scales, help="Comma-separated guidance scales.")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("variance", parents=[common], help="Var of the score difference.")
    p.add_argument("--checkpoint", type=Path, help="Denoiser (default OUT/base.ckpt).")
    p.add_argument("--cpo-data", type=Path)
    p.add_argument("--dpo-data", type=Path)
    p.set_defaults(handler=cmd_variance)

    p = sub.add_parser("verify", parents=[common], help="Run the numerical self-checks.")
    p.add_argument("--fast", action="store_true", help="Only the quick checks.")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("report", parents=[common], help="Aggregate metrics logs into CSV.")
    p.set_defaults(handler=cmd_report)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """The configuration file (or defaults) with command-line overrides applied."""
    config = load_config(args.config) if args.config else RunConfig()
    overrides: dict[str, Any] = {}
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if args.out is not None:
        overrides["run.out_dir"] = str(args.out)
    if args.task is not None:
        overrides["task.condition_kind"] = args.task
    if args.deterministic:
        overrides["run.deterministic"] = True
    return config.with_overrides(overrides) if overrides else config


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point; returns the exit status."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT)
    try:
        config = resolve_config(args)
        with debug_mode(config.run.debug):
            return args.handler(config, args)
    except (PrefDiffError, OSError) as e:
        print(format_exception(e), file=sys.stderr)
        return 1
