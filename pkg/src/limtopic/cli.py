"""Command-line interface over the staged pipeline.

Exit codes: 0 success, 2 configuration error, 3 transport error, 4 parse error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import PipelineConfig, load_config
from .errors import ConfigError, ParseError, TransportError
from .pipeline import run_ablation, run_pipeline, run_single_stage, write_report

STAGE_COMMANDS = ("extract", "preprocess", "model", "titles", "summarize", "judge", "evaluate")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="limtopic", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a key = value config file")
    common.add_argument("--corpus", help="override corpus_path")
    common.add_argument("--workdir", help="override workdir")
    common.add_argument("--stub", action="store_true", help="use offline stub providers")
    common.add_argument("--seed", type=int, default=None, help="override random_seed")

    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGE_COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run the {name} stage")
    run = sub.add_parser("run", parents=[common], help="run the full pipeline")
    run.add_argument("--resume", action="store_true",
                     help="skip stages whose outputs already exist")
    ablate = sub.add_parser("ablate", parents=[common],
                            help="model quality versus corpus-subset size")
    ablate.add_argument("--subset-fractions", default="0.25,0.5,1.0",
                        help="comma list of ascending fractions in (0, 1]")
    sub.add_parser("report", parents=[common], help="regenerate report.md from artifacts")
    return parser


def _load(args: argparse.Namespace) -> PipelineConfig:
    overrides = {
        "corpus_path": args.corpus,
        "workdir": args.workdir,
        "stub": True if args.stub else None,
        "random_seed": args.seed,
    }
    if args.config:
        return load_config(args.config, overrides)
    return PipelineConfig(**{k: v for k, v in overrides.items() if v is not None})


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.command == "run":
            run_pipeline(cfg, resume=args.resume)
        elif args.command == "ablate":
            try:
                fractions = [float(f) for f in args.subset_fractions.split(",") if f.strip()]
            except ValueError as exc:
                raise ConfigError(f"bad --subset-fractions: {exc}") from exc
            cfg.validate()
            run_ablation(cfg, fractions)
        elif args.command == "report":
            cfg.validate(require_corpus=False)
            write_report(cfg)
        else:
            run_single_stage(cfg, args.command)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
