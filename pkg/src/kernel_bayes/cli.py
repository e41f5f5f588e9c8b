"""``kbr <experiment> --config FILE [--seed S] [--out DIR] [--paper-scale]``.

Exit status is 0 on success, 2 for configuration errors and 3 for numeric
failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .errors import ConfigError, InputError, NumericError
from .experiments import EXPERIMENTS, default_config, load_config, run_experiment, write_outputs

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kbr", description="Run kernel Bayes' rule experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="key = value config file; defaults are used when omitted")
    p.add_argument("--seed", type=int, help="root seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--paper-scale", action="store_true", help="use the full-size settings")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.config:
            cfg = load_config(args.config, experiment=args.experiment, paper_scale=args.paper_scale)
        else:
            cfg = default_config(args.experiment, args.paper_scale)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, root_seed=args.seed)
        if args.out:
            cfg = dataclasses.replace(cfg, output_dir=args.out)
    except (ConfigError, InputError) as exc:
        print(f"kbr: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_experiment(cfg)
    except NumericError as exc:
        print(f"kbr: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InputError as exc:
        print(f"kbr: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in write_outputs(result):
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
