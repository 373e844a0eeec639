"""Command line entry point.

`ra-sim run --config cfg.json [--fast] [--workers N] [--out dir]` runs a
configured sweep and writes its CSV; `ra-sim corr --q 1,2,3,5 --trials 5000`
writes the correlation-coefficient samples. Exit codes: 0 success, 2 bad
configuration, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .errors import ConfigError, NumericalError
from .harness import correlation_csv, load_config, run_sweep

FAST_TRIALS = 50


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ra-sim",
                                     description="random-access link simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a configured Monte Carlo sweep")
    run_p.add_argument("--config", required=True, help="JSON experiment config")
    run_p.add_argument("--fast", action="store_true",
                       help=f"cap trials at {FAST_TRIALS} for quick checks")
    run_p.add_argument("--workers", type=int, default=1,
                       help="process pool size (default 1)")
    run_p.add_argument("--out", default=None,
                       help="output directory (default: config's output path)")

    corr_p = sub.add_parser("corr", help="two-user channel correlation samples")
    corr_p.add_argument("--q", default="1,2,3,5",
                        help="comma-separated satellite counts")
    corr_p.add_argument("--trials", type=int, default=5000)
    corr_p.add_argument("--seed", type=int, default=0)
    corr_p.add_argument("--out", default="correlation.csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = load_config(args.config)
            if args.fast:
                config = replace(config, trials=min(config.trials, FAST_TRIALS))
            if args.workers < 1:
                raise ConfigError("workers must be >= 1")
            csv_text = run_sweep(config, workers=args.workers)
            out_path = config.output
            if args.out is not None:
                os.makedirs(args.out, exist_ok=True)
                out_path = os.path.join(args.out, os.path.basename(config.output))
            with open(out_path, "w", encoding="utf-8", newline="") as fh:
                fh.write(csv_text)
            print(out_path)
        else:
            try:
                q_values = [int(v) for v in args.q.split(",") if v.strip()]
            except ValueError as exc:
                raise ConfigError(f"bad --q list: {exc}") from exc
            if not q_values:
                raise ConfigError("--q list is empty")
            csv_text = correlation_csv(q_values, args.trials, seed=args.seed)
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(csv_text)
            print(args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
