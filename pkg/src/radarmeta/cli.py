"""Command-line interface.

Subcommands: gen-data, pretrain, adapt-eval, reproduce-all. Exit codes:
0 success, 2 configuration error (including argparse errors), 3 missing
prerequisite (datasets or checkpoints not generated yet).
"""

from __future__ import annotations

import argparse
import sys

from .experiment import ConfigError, ExperimentConfig, MissingPrerequisiteError
from .orchestrator import (
    FIGURES,
    PRETRAIN_METHODS,
    cmd_adapt_eval,
    cmd_gen_data,
    cmd_pretrain,
    cmd_reproduce_all,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--scale", type=float, help="override the scale factor in (0, 1]")
    parser.add_argument("--out", default="runs", metavar="DIR", help="output directory")
    order = parser.add_mutually_exclusive_group()
    order.add_argument("--first-order", dest="first_order", action="store_true",
                       default=None, help="first-order MAML meta-gradients (default)")
    order.add_argument("--second-order", dest="first_order", action="store_false",
                       default=None, help="exact second-order MAML meta-gradients")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radarmeta",
        description="Fast-adapting neural radar detectors: simulate, pretrain, adapt, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate all dataset files")
    _add_common(p)
    p.add_argument("--workers", type=int, default=1, help="parallel generation workers")

    p = sub.add_parser("pretrain", help="offline pretraining")
    _add_common(p)
    p.add_argument("--method", choices=PRETRAIN_METHODS, required=True)

    p = sub.add_parser("adapt-eval", help="adapt detectors and emit one figure")
    _add_common(p)
    p.add_argument("--figure", choices=FIGURES, required=True)

    p = sub.add_parser("reproduce-all", help="datasets + pretraining + all figures")
    _add_common(p)
    p.add_argument("--workers", type=int, default=1, help="parallel generation workers")

    return parser


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.scale is not None:
        overrides["scale"] = args.scale
    if args.first_order is not None:
        overrides["first_order"] = args.first_order
    if overrides:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), **overrides})
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
        if args.command == "gen-data":
            written = cmd_gen_data(cfg, args.out, workers=args.workers)
            print(f"gen-data: wrote {len(written)} dataset file(s) under {args.out}")
        elif args.command == "pretrain":
            ckpt = cmd_pretrain(cfg, args.out, args.method)
            print(f"pretrain[{args.method}]: wrote {ckpt}")
        elif args.command == "adapt-eval":
            files = cmd_adapt_eval(cfg, args.out, args.figure)
            print(f"adapt-eval[{args.figure}]: wrote {len(files)} file(s)")
        elif args.command == "reproduce-all":
            cmd_reproduce_all(cfg, args.out, workers=args.workers)
            print(f"reproduce-all: complete under {args.out}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MissingPrerequisiteError as exc:
        print(f"missing prerequisite: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
