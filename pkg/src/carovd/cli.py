"""Command-line entry point.

Subcommands: synth, preprocess, sample, infer, report.
Exit codes: 0 ok, 1 usage, 2 data error, 3 model error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .classify import AggregationPolicy
from .config import ConfigError, load_config
from .errors import CarovdError, ModelLoadError
from .pipeline import cmd_infer, cmd_preprocess, cmd_report, cmd_sample, cmd_synth

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_MODEL = 3

log = logging.getLogger("carovd")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract wants 1
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="carovd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    synth.add_argument("--out", required=True)
    synth.add_argument("--config", default=None)
    synth.add_argument("--seed", type=int, default=0)

    pre = sub.add_parser("preprocess", help="UI removal, crop, Doppler exclusion")
    pre.add_argument("--in", dest="in_dir", required=True)
    pre.add_argument("--out", required=True)
    pre.add_argument("--config", default=None)
    pre.add_argument("--workers", type=int, default=1)

    sample = sub.add_parser("sample", help="export clips for the training harness")
    sample.add_argument("--in", dest="in_dir", required=True, help="processed dir")
    sample.add_argument("--cohort", required=True)
    sample.add_argument("--out", required=True)
    sample.add_argument("--n-clips", type=int, default=2)
    sample.add_argument("--seed", type=int, default=0)

    infer = sub.add_parser("infer", help="score videos or exported clips")
    infer.add_argument("--in", dest="in_dir", required=True,
                       help="processed dir or clip-export dir")
    infer.add_argument("--model-card", required=True)
    infer.add_argument("--out", required=True)
    infer.add_argument("--n-clips", type=int, default=2)
    infer.add_argument("--seed", type=int, default=0)
    infer.add_argument("--workers", type=int, default=1)
    infer.add_argument("--policy", choices=[p.value for p in AggregationPolicy],
                       default="majority")

    report = sub.add_parser("report", help="stratified cohort report from a dump")
    report.add_argument("--dump", required=True, help="predictions_clips.jsonl")
    report.add_argument("--cohort", required=True)
    report.add_argument("--out", required=True)
    report.add_argument("--policy", choices=[p.value for p in AggregationPolicy],
                        default="majority")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "synth":
            out = cmd_synth(args.out, load_config(args.config), seed=args.seed)
            log.info("synthetic corpus written to %s", out)
        elif args.command == "preprocess":
            manifest = cmd_preprocess(
                args.in_dir, args.out, load_config(args.config), workers=args.workers
            )
            log.info("preprocess totals: %s", manifest.totals)
        elif args.command == "sample":
            index = cmd_sample(
                args.in_dir, args.cohort, args.out, n_clips=args.n_clips, seed=args.seed
            )
            log.info("clip export index: %s", index)
        elif args.command == "infer":
            manifest = cmd_infer(
                args.in_dir,
                args.model_card,
                args.out,
                n_clips=args.n_clips,
                seed=args.seed,
                workers=args.workers,
                policy=AggregationPolicy(args.policy),
            )
            log.info("infer totals: %s", manifest.totals)
        elif args.command == "report":
            report = cmd_report(
                args.dump, args.cohort, args.out, policy=AggregationPolicy(args.policy)
            )
            log.info("report counts: %s", report.counts)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelLoadError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except CarovdError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
