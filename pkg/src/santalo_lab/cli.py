"""Command line: ``santalo-lab run`` and ``santalo-lab list``.

Exit codes: 0 when every check passes, 1 when a check fails (or a trial
raised), 2 for usage and config errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .io import ConfigError, load_config

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="santalo-lab", description="Run numerical verification experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run an experiment config and write report.json / report.csv")
    run.add_argument("--config", required=True, help="path to a JSON experiment config")
    run.add_argument("--out", required=True, help="output directory for the reports")
    run.add_argument("--jobs", type=int, default=1, help="worker processes for trials (default 1)")
    run.add_argument("--seed-override", type=int, default=None, help="replace the config seed")
    sub.add_parser("list", help="list builtin experiments")
    return p


def cmd_list() -> int:
    from .experiments import list_builtins

    items = list_builtins()
    width = max(len(name) for name, _ in items)
    for name, desc in items:
        print(f"{name.ljust(width)}  {desc}")
    return EXIT_PASS


def cmd_run(args) -> int:
    from .experiments import run_experiment, validate

    if args.jobs < 1:
        print("santalo-lab: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.seed_override is not None:
            if args.seed_override < 0:
                raise ConfigError("--seed-override", "seed must be nonnegative")
            cfg.seed = args.seed_override
        validate(cfg)
    except ConfigError as exc:
        print(f"santalo-lab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = run_experiment(cfg, jobs=args.jobs)
    jpath, _ = report.write(args.out)
    print(report.summary())
    print(f"report written to {jpath}")
    return EXIT_PASS if report.passed else EXIT_FAIL


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "list":
        return cmd_list()
    return cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
