"""Command line entry point.

    fraclab run <experiment> [--seed N] [--paths N] [--level N] [--out DIR]
                             [--threads N] [--config FILE] [experiment flags]
    fraclab validate <experiment> [same flags]

Seed precedence: --seed flag, then the FRACLAB_SEED environment variable,
then the config file, then 0.  Exit codes: 2 for usage errors (including an
unknown experiment), 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import NumericalError, UsageError
from .experiments import run_and_write, validate
from .reports import EXPERIMENT_PARAMS, ExperimentConfig, dump_report_json

_FLAG_TYPES = {"input": str, "eps": float, "model": str, "strategy": str,
               "payoff": str, "side": str, "level": str}


def _coerce(name: str, value, default):
    if value is None:
        return None
    if name == "level":
        # qv accepts --level auto with --input; everything else wants an int
        if isinstance(value, str) and value.lower() == "auto":
            return "auto"
        return int(value)
    if isinstance(default, bool):
        return bool(value)
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float) or name == "eps":
        return float(value)
    return value


def _add_experiment_flags(parser: argparse.ArgumentParser, experiment: str) -> None:
    for name, default in EXPERIMENT_PARAMS[experiment].items():
        flag = "--" + name.replace("_", "-")
        parser.add_argument(flag, dest=name, default=None,
                            type=_FLAG_TYPES.get(name, str),
                            help=f"default: {default}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fraclab",
                                     description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True)
    for command in ("run", "validate"):
        sub = commands.add_parser(command)
        experiments = sub.add_subparsers(dest="experiment", required=True)
        for name in EXPERIMENT_PARAMS:
            exp = experiments.add_parser(name)
            exp.add_argument("--seed", type=int, default=None)
            exp.add_argument("--out", type=str, default=None)
            exp.add_argument("--threads", type=int, default=None)
            exp.add_argument("--config", type=str, default=None,
                             help="JSON config file; flags override it")
            _add_experiment_flags(exp, name)
    return parser


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    base: dict = {}
    if args.config:
        with open(args.config) as handle:
            base = json.load(handle)
        if not isinstance(base, dict):
            raise UsageError("config file must hold a JSON object")
        if base.get("experiment", args.experiment) != args.experiment:
            raise UsageError(f"config file is for {base['experiment']!r}, "
                             f"not {args.experiment!r}")
    base["experiment"] = args.experiment

    env_seed = os.environ.get("FRACLAB_SEED")
    if env_seed is not None:
        base["seed"] = int(env_seed)
    if args.seed is not None:
        base["seed"] = args.seed
    if args.out is not None:
        base["out"] = args.out
    if args.threads is not None:
        base["threads"] = args.threads

    defaults = EXPERIMENT_PARAMS[args.experiment]
    for name, default in defaults.items():
        value = getattr(args, name, None)
        if value is not None:
            base[name] = _coerce(name, value, default)
    return ExperimentConfig.from_dict(base)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
        if args.command == "validate":
            findings = validate(config)
            for finding in findings:
                print(finding)
            if not findings:
                print("no findings")
            return 0
        report, written = run_and_write(config)
        if written:
            for path in written:
                print(path)
        else:
            sys.stdout.write(dump_report_json(report.to_dict()))
        return 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
