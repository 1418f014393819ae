"""Command-line entry point: ``mixheat <command> --config PATH [--seed N] [--workers N] [--out DIR] [--assert]``."""

from __future__ import annotations

import argparse
import sys

from . import runner

COMMANDS = {
    "simulate": "survival",
    "kernel": "kernel",
    "green": "green",
    "certify": "envelope_certify",
    "spectral": "spectral",
    "largetime": "largetime",
    "levy-check": "levy_check",
    "scaling-check": "scaling_check",
    "subordination-check": "subordination_check",
}

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mixheat", description="Killed mixed-process experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, kind in COMMANDS.items():
        p = sub.add_parser(name, help=f"run a '{kind}' experiment")
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--seed", type=int, default=None, metavar="N", help="override the config seed")
        p.add_argument("--workers", type=int, default=None, metavar="N")
        p.add_argument("--out", default=None, metavar="DIR", help="output directory (default: config 'output')")
        p.add_argument("--assert", dest="check", action="store_true",
                       help="exit nonzero if any assertion of the run fails")
    v = sub.add_parser("validate", help="check a config against the schema")
    v.add_argument("--config", required=True, metavar="PATH")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        errors = runner.validate(args.config)
        if errors:
            for e in errors:
                print(f"error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        print("ok")
        return EXIT_OK
    if args.workers is not None and args.workers < 1:
        print("error: --workers must be ≥ 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = runner.load_config(args.config, kind=COMMANDS[args.command], seed=args.seed,
                                 workers=args.workers, output=args.out)
    except runner.ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        res = runner.run(cfg)
    except OSError as exc:
        print(f"error: cannot write results: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"config {cfg.config_hash} seed {cfg.seed}")
    for line in res.summary:
        print(line)
    for name, ok in res.assertions:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    for name in sorted(res.files):
        print(f"wrote {cfg.output}/{name}")
    if args.check and not res.ok:
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
