"""Command line: ``randgreen <experiment> --config <path> [--seed N --out <path>]``
and ``randgreen plotdata <records.csv> [--experiment E --estimator S --out <path>]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import EXPERIMENTS, parse_config
from .errors import DegenerateEncounter, RandGreenError, SchemaError
from .harness import (EXIT_ERROR, emit_plotdata, plotdata_csv, read_records,
                      run_experiment)


def _experiment_parser(name: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=f"randgreen {name}")
    p.add_argument("--config", required=True, type=Path, help="JSON experiment config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="override output_path (CSV; sidecar gets .json appended)")
    return p


def _plot_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="randgreen plotdata")
    p.add_argument("records", type=Path, help="records CSV written by an experiment")
    p.add_argument("--experiment")
    p.add_argument("--estimator", action="append")
    p.add_argument("--out", type=Path, help="write here instead of stdout")
    return p


def _usage() -> str:
    return ("usage: randgreen <experiment> --config <path> [--seed N] [--out <path>]\n"
            "       randgreen plotdata <records.csv> [--experiment E] [--estimator S] [--out <path>]\n"
            "experiments: " + ", ".join(EXPERIMENTS))


def _run(name: str, argv) -> int:
    args = _experiment_parser(name).parse_args(argv)
    try:
        cfg = parse_config(args.config.read_text(encoding="utf-8"))
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if cfg.experiment != name:
        print(f"error: config is for experiment {cfg.experiment!r}, not {name!r}", file=sys.stderr)
        return EXIT_ERROR
    cfg = cfg.with_overrides(seed=args.seed, output_path=args.out)
    try:
        records, status, info = run_experiment(cfg)
    except DegenerateEncounter as exc:
        print(f"error: {exc} (step {exc.step})", file=sys.stderr)
        return EXIT_ERROR
    except RandGreenError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{len(records)} records -> {cfg.output_path} "
          f"({info['wall_time_s']:.1f} s, exit {status})", file=sys.stderr)
    return status


def _plotdata(argv) -> int:
    args = _plot_parser().parse_args(argv)
    spec = {}
    if args.experiment:
        spec["experiment"] = args.experiment
    if args.estimator:
        spec["estimator"] = args.estimator
    try:
        rows = emit_plotdata(read_records(args.records), spec)
    except (OSError, RandGreenError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    text = plotdata_csv(rows)
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(_usage())
        return 0 if argv else EXIT_ERROR
    cmd, rest = argv[0], argv[1:]
    if cmd == "plotdata":
        return _plotdata(rest)
    if cmd not in EXPERIMENTS:
        print(f"error: unknown experiment {cmd!r}\n{_usage()}", file=sys.stderr)
        return EXIT_ERROR
    return _run(cmd, rest)


if __name__ == "__main__":
    sys.exit(main())
