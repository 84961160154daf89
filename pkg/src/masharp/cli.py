"""Command line entry point: ``masharp run | solve | presets``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="masharp", description="Monge-Ampere boundary-regularity experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("run", "solve and run the configured estimate suites"), ("solve", "solve only")):
        s = sub.add_parser(name, help=text)
        s.add_argument("config", help="experiment JSON file or preset name")
        s.add_argument("--out", help="output directory")
        s.add_argument("--threads", type=int, help="cap on worker threads for linear algebra")
        s.add_argument("--verbose", "-v", action="store_true")
    sub.add_parser("presets", help="list the shipped preset experiments")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None):
        if args.threads < 1:
            print("masharp: --threads must be positive", file=sys.stderr)
            return 2
        # must happen before numpy/scipy load their BLAS
        for var in THREAD_VARS:
            os.environ[var] = str(args.threads)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    from .errors import ConfigError, MasharpError
    from .runner import EXIT_SCHEMA, EXIT_SUITE, list_presets, run

    if args.command == "presets":
        rows = list_presets()
        width = max(len(n) for n, _ in rows)
        for name, claim in rows:
            print(f"{name:<{width}}  {claim}")
        return 0
    try:
        verdict = run(args.config, out=args.out, solve_only=args.command == "solve")
    except ConfigError as exc:
        print(f"masharp: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except MasharpError as exc:
        print(f"masharp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SUITE
    return verdict.exit_code


if __name__ == "__main__":
    sys.exit(main())
