"""Command line entry point.

Two subcommands:
  run    --config PATH [--scheme S] [--partition P] [--seed N ...] [--out DIR]
  report --in DIR [DIR ...]
"""

from __future__ import annotations

import argparse
import sys

from .config import apply_overrides, parse_config_file
from .errors import ConfigError, HetbenchError, ReportError
from .experiment import compare_report, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetbench", description="Heterogeneity benchmark runner")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the scheme x partition sweep from a config file")
    run_p.add_argument("--config", required=True, help="path to a key=value config file")
    run_p.add_argument("--scheme", help="run only this scheme (overrides the config)")
    run_p.add_argument("--partition", help="run only this partition (overrides the config)")
    run_p.add_argument("--seed", type=int, nargs="+", help="seed list (overrides the config)")
    run_p.add_argument("--out", help="output directory (overrides the config)")

    rep_p = sub.add_parser("report", help="compare finished runs as a markdown table")
    rep_p.add_argument("--in", dest="inputs", required=True, nargs="+", help="result directories")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = parse_config_file(args.config)
            cfg = apply_overrides(
                cfg,
                scheme=args.scheme,
                partition=args.partition,
                seeds=args.seed,
                out=args.out,
            )
            for target in run_experiment(cfg):
                print(target)
        else:
            print(compare_report(args.inputs), end="")
    except (ConfigError, ReportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (HetbenchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
