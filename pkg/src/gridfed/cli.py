"""Command-line entry point.

    gridfed [--config FILE] [--seed N] [--out DIR] generate [--days N]
    gridfed ... train --mode {federated,isolated}
    gridfed ... baseline | evaluate | report | all
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from concurrent.futures import ThreadPoolExecutor

from . import pipeline
from .config import RunConfig
from .federation import FederationError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridfed", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--rounds", type=int, help="federation rounds (overrides the config)")
    p.add_argument("--sync-interval", type=int, help="episodes between synchronizations")
    p.add_argument("--workers", type=int, default=1, help="parallel client workers")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    g = sub.add_parser("generate", help="write synthetic day CSVs and a seed manifest")
    g.add_argument("--days", type=int)
    t = sub.add_parser("train", help="train household agents")
    t.add_argument("--mode", choices=pipeline.MODES, required=True)
    t.add_argument("--checkpoint-every", type=int, default=10)
    sub.add_parser("baseline", help="solve the perfect-foresight dispatch LP")
    sub.add_parser("evaluate", help="evaluate trained agents and the no-battery base")
    sub.add_parser("report", help="comparison table and delta metrics")
    sub.add_parser("all", help="generate, train both modes, baseline, evaluate, report")
    return p


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise ValueError("--seed must be non-negative")
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.rounds is not None or args.sync_interval is not None:
        fed = cfg.federation
        cfg.federation = dataclasses.replace(
            fed,
            rounds=fed.rounds if args.rounds is None else args.rounds,
            sync_interval=fed.sync_interval if args.sync_interval is None else args.sync_interval,
        )
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    executor = ThreadPoolExecutor(args.workers) if args.workers > 1 else None
    try:
        cfg = load_config(args)
        if args.command == "generate":
            out = pipeline.cmd_generate(cfg, args.days)
        elif args.command == "train":
            out = pipeline.cmd_train(cfg, args.mode, executor, args.checkpoint_every)
        elif args.command == "baseline":
            out = pipeline.cmd_baseline(cfg)
        elif args.command == "evaluate":
            out = pipeline.cmd_evaluate(cfg)
        elif args.command == "report":
            out = pipeline.cmd_report(cfg)
            print((out / "table.txt").read_text(), end="")
        else:
            out = pipeline.run_all(cfg, executor)
            print((out / "table.txt").read_text(), end="")
    except pipeline.MissingArtifacts as exc:
        for name in exc.names:
            print(f"error: missing artifact {name}", file=sys.stderr)
        return 2
    except FederationError as exc:
        print(f"error: {exc}; last good parameters written", file=sys.stderr)
        return 3
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        if executor is not None:
            executor.shutdown()
    print(f"wrote {out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
