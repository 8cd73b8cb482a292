"""Command-line entry point: ``bdris run --config FILE --sweep KIND --out PATH``."""

import argparse
import logging
import sys
from typing import List, Optional

from .channels import ConfigError
from .optimizers import OptimizerOptions
from .runner import (
    STAGE2_CHOICES,
    SWEEP_KINDS,
    SweepSpec,
    default_stage1,
    default_values,
    load_config,
    run_sweep,
    write_results,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _parse_values(kind: str, text: str):
    items = [t for t in text.split(",") if t.strip()]
    try:
        if kind == "position_grid":
            out = []
            for item in items:
                x, y = item.split(":")
                out.append((float(x), float(y)))
            return out
        if kind == "pt_sweep":
            return [float(t) for t in items]
        return [int(t) for t in items]
    except ValueError:
        raise ConfigError(f"cannot parse --values {text!r} for sweep {kind}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bdris", description="BD-RIS interference-leakage experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute one Monte-Carlo sweep and write a result table")
    run.add_argument("--config", required=True, help="flat YAML/JSON scenario file")
    run.add_argument("--sweep", required=True, choices=SWEEP_KINDS)
    run.add_argument("--out", required=True, help="output file")
    run.add_argument("--format", default="csv", choices=("csv", "jsonl"))
    run.add_argument("--trials", type=int, help="override the config's trial count")
    run.add_argument("--seed", type=int, help="override the config's master seed")
    run.add_argument("--stage1", help="mo | rtp | diag | joint | group:<Mg> | group-rtp:<Mg> | none")
    run.add_argument("--stage2", default="none", choices=STAGE2_CHOICES)
    run.add_argument("--values", help="comma list; x:y pairs for position_grid")
    run.add_argument("--grid-step", type=float, default=5.0, help="position_grid spacing in meters")
    run.add_argument("--max-iters", type=int, help="MO iteration cap")
    run.add_argument("--workers", type=int, help="worker processes (default: CPU count)")
    run.add_argument("--strict", action="store_true", help="exit 3 if any trial failed numerically")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        overrides = {}
        if args.trials is not None:
            overrides["trials"] = args.trials
        if args.seed is not None:
            overrides["seed"] = args.seed
        if overrides:
            config = config.with_(**overrides)
        values = (_parse_values(args.sweep, args.values) if args.values
                  else default_values(args.sweep, config, args.grid_step))
        sweep = SweepSpec(args.sweep, values, args.stage1 or default_stage1(config), args.stage2)
        options = OptimizerOptions()
        if args.max_iters is not None:
            options = OptimizerOptions(max_iters=args.max_iters)
        rows = run_sweep(config, sweep, options=options, workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        write_results(rows, args.out, args.format, K=config.K)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    failed = [r for r in rows if r["error"]]
    if failed:
        print(f"{len(failed)} of {len(rows)} trials failed", file=sys.stderr)
        if args.strict:
            return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
