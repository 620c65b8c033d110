"""Command line entry point: ``schauder-lab <experiment> --config cfg.json --out dir``."""
from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, SchauderLabError
from .lab import EXPERIMENTS, ExperimentConfig, run_experiment
from .report import dumps_json

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="schauder-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--config", help="JSON experiment document (defaults apply when omitted)")
        p.add_argument("--out", help="directory for report.json and CSV tables")
        p.add_argument("--seed", type=_seed, help="override the configured seed")
        p.add_argument("--strict", action="store_true", help="treat numerical warnings as errors")
    return parser


def load_config(args) -> ExperimentConfig:
    raw = {}
    if args.config:
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", field="config") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}", field="config") from exc
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object", field="$")
    raw = dict(raw, experiment=args.command)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out"] = args.out
    return ExperimentConfig.from_dict(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        summary, passed = run_experiment(cfg, strict=args.strict)
    except SchauderLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Warning as exc:  # promoted by --strict
        print(f"error (strict): {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if cfg.out is None:
        sys.stdout.write(dumps_json(summary))
    return EXIT_OK if passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
