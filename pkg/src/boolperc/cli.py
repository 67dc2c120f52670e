"""Command-line entry point: ``boolperc run | validate | schema``."""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, load_config, schema_json
from .errors import BoolpercError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed {text} is not an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"workers must be >= 1, got {text}")
    return v


class _Parser(argparse.ArgumentParser):
    # bad arguments are configuration errors, not runtime failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="boolperc",
                                description="Monte Carlo experiments for the spherical Boolean model.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("--config", required=True, help="TOML or JSON experiment config")
    run.add_argument("--seed", type=_u64, help="override master_seed")
    run.add_argument("--out", help="override output_dir")
    run.add_argument("--workers", type=_positive, help="override worker count")
    val = sub.add_parser("validate", help="check a config without sampling")
    val.add_argument("--config", required=True)
    sub.add_parser("schema", help="print the config JSON schema")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(schema_json())
        return EXIT_OK
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            print(f"ok: kind={cfg.kind} dimension={cfg.dimension}")
            return EXIT_OK
        cfg = load_config(args.config, seed=args.seed, out=args.out, workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    from .runner import run_experiment

    try:
        summary = run_experiment(cfg)
    except (BoolpercError, ValueError, OSError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({"kind": summary["kind"], "pass": summary["pass"], "checks": summary["checks"]},
                     sort_keys=True))
    print(f"outputs in {cfg.output_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
