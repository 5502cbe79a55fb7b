"""Command line entry point: plan, run, check, train and mcm."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ringivm.core.csvio import relation_to_csv
from ringivm.errors import (
    InvalidVariableOrder, OracleDivergence, ParseError, RingIVMError, SchemaMismatch, ValidationError,
)
from ringivm.harness.config import load_config
from ringivm.harness.mcm import run_matrix_chain
from ringivm.harness.metrics import report_metrics
from ringivm.harness.regression import train_regression
from ringivm.harness.stream import build_plan, dump_views, run_stream

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_DIVERGENCE = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ringivm", description="Ring-based incremental view maintenance.")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, text in [("plan", "print the compiled plan"), ("run", "replay the update stream"),
                       ("check", "replay the stream and compare against recomputation"),
                       ("train", "replay the stream, then fit the configured regression"),
                       ("mcm", "run the matrix-chain preset")]:
        s = sub.add_parser(verb, help=text)
        s.add_argument("--config", required=True, type=Path)
        s.add_argument("--batch-size", type=int)
        s.add_argument("--metrics-out", type=Path)
        s.add_argument("--dump-views", type=Path)
        s.add_argument("--metrics-format", choices=("text", "csv"), default=None)
    return p


def _emit_metrics(m, args) -> None:
    if args.metrics_out:
        fmt = args.metrics_format or ("csv" if args.metrics_out.suffix == ".csv" else "text")
        args.metrics_out.write_text(report_metrics(m, fmt))
    else:
        sys.stderr.write(report_metrics(m, args.metrics_format or "text"))


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.batch_size is not None and args.batch_size < 1:
        print("error: --batch-size must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
    except (ParseError, ValidationError, InvalidVariableOrder, SchemaMismatch) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.verb == "mcm":
            if cfg.mcm is None:
                print("config error: no [mcm] section", file=sys.stderr)
                return EXIT_CONFIG
            run = run_matrix_chain(cfg.mcm)
            np.savetxt(sys.stdout, run.result, fmt="%.12g", delimiter=",")
            _emit_metrics(run.metrics, args)
            return EXIT_OK
        if cfg.query is None:
            print("config error: missing [query] section", file=sys.stderr)
            return EXIT_CONFIG
        if args.verb == "plan":
            sys.stdout.write(build_plan(cfg).dump())
            return EXIT_OK
        if args.verb == "train" and cfg.regression is None:
            print("config error: no [regression] section", file=sys.stderr)
            return EXIT_CONFIG
        metrics, engine = run_stream(cfg, args.batch_size, check=args.verb == "check")
        if args.dump_views:
            dump_views(engine, args.dump_views)
        if args.verb == "train":
            r = cfg.regression
            root = engine.root()
            payload = root[()] if len(root) else cfg.ring.zero
            theta = train_regression(payload, cfg.ring.index, r.features, r.label, r.alpha,
                                     r.iterations, r.tolerance)
            for name, value in zip(["bias", *r.features], theta):
                print(f"{name},{value:.12g}")
        else:
            sys.stdout.write(relation_to_csv(engine.root()))
        _emit_metrics(metrics, args)
        return EXIT_OK
    except OracleDivergence as exc:
        print(f"oracle divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ParseError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RingIVMError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
