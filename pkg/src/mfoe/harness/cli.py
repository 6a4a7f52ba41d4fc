"""Command line entry point: ``mfoe <task> --config <path> [--seed N] [--threads N] [--output DIR]``."""

import argparse
import json
import logging
import sys

from ..errors import ConfigurationError, DomainError, NumericFailure
from .experiment import TASKS, load_config, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def build_parser():
    p = argparse.ArgumentParser(prog="mfoe", description=__doc__)
    p.add_argument("task", choices=TASKS)
    p.add_argument("--config", required=True,
                   help="TOML config, or the manifest.json of a previous run")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--output")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, task=args.task, seed=args.seed, threads=args.threads,
                          output=args.output)
        result = run_experiment(cfg)
    except (ConfigurationError, DomainError, FileNotFoundError) as err:
        print(f"mfoe: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericFailure as err:
        print(f"mfoe: numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps(result.summary, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
