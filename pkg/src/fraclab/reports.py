"""Experiment configuration and self-contained reports.

A report echoes its configuration verbatim; re-running with the embedded
config and seed reproduces every number in ``results`` and every CSV table
byte for byte.  Wall clock and timestamps live outside the reproducible
section.  JSON serialization is canonical (sorted keys, repr floats), so
parse + re-serialize is the identity.
"""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field

from .errors import UsageError

SCHEMA_VERSION = 1
PACKAGE_VERSION = "0.1.0"

# experiment name -> {param: default}; None means required
EXPERIMENT_PARAMS: dict[str, dict] = {
    "simulate": {"model": "fbs", "h": 0.75, "sigma": 1.0, "nu": 1.0, "mu": 0.0,
                 "s0": 1.0, "level": 10, "paths": 100},
    "qv": {"input": None, "model": "bs", "h": 0.75, "sigma": 1.0, "nu": 1.0,
           "mu": 0.0, "s0": 1.0, "level": 14, "min_level": 4, "paths": 100},
    "arbitrage": {"strategy": "momentum", "model": "fbs", "h": 0.75,
                  "sigma": 1.0, "nu": 1.0, "mu": 0.0, "s0": 1.0,
                  "n": 4096, "level": 14, "paths": 200, "max_steps": 100},
    "hedge": {"payoff": "call", "strike": 1.0, "h": 0.75, "nu": 1.0,
              "mu": 0.0, "s0": 1.0, "n": 4096, "paths": 200, "side": "right"},
    "transaction-costs": {"payoff": "call", "strike": 1.0, "h": 0.75,
                          "nu": 1.0, "mu": 0.0, "s0": 1.0, "n": 4096,
                          "paths": 200, "k0": 1.0, "alpha": 0.5, "eps": None},
    "tree": {"n": 512, "h": 0.75, "draws": 10000, "scan_max": 4096,
             "dump_depth": 0},
    "wick-tree": {"n": 12, "h": 0.75, "dump_depth": 0},
    "aggregate": {"beta": 0.6, "m": 500, "a_m": 50.0, "reps": 500,
                  "grid_steps": 64},
    "agents": {"alpha": 1.5, "n_agents": 200, "eps": 0.01, "reps": 400,
               "grid_steps": 64},
}

_TOP_KEYS = ("experiment", "seed", "out", "threads")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment name, seed, and parameter block."""

    experiment: str
    seed: int = 0
    out: str | None = None
    threads: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENT_PARAMS:
            raise UsageError(f"unknown experiment {self.experiment!r}; "
                             f"choose from {sorted(EXPERIMENT_PARAMS)}")
        if self.seed < 0:
            raise UsageError("seed must be nonnegative")
        if self.threads < 1:
            raise UsageError("threads must be at least 1")
        allowed = EXPERIMENT_PARAMS[self.experiment]
        unknown = set(self.params) - set(allowed)
        if unknown:
            raise UsageError(f"unknown parameter(s) for {self.experiment}: "
                             f"{sorted(unknown)}")
        merged = dict(allowed)
        merged.update(self.params)
        object.__setattr__(self, "params", merged)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        data = dict(raw)
        if "experiment" not in data:
            raise UsageError("config needs an 'experiment' key")
        experiment = data.pop("experiment")
        seed = data.pop("seed", 0)
        out = data.pop("out", None)
        threads = data.pop("threads", 1)
        return cls(experiment=experiment, seed=int(seed), out=out,
                   threads=int(threads), params=data)

    def to_dict(self) -> dict:
        flat = {"experiment": self.experiment, "seed": self.seed,
                "out": self.out, "threads": self.threads}
        flat.update(self.params)
        return flat


@dataclass
class ExperimentReport:
    """Config echo, deterministic results, and run metadata."""

    config: dict
    results: dict
    warnings: list
    wall_clock_seconds: float
    schema_version: int = SCHEMA_VERSION
    package_version: str = PACKAGE_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "package_version": self.package_version,
            "config": self.config,
            "results": self.results,
            "warnings": self.warnings,
            "wall_clock_seconds": self.wall_clock_seconds,
        }


def dump_report_json(report_dict: dict) -> str:
    """Canonical JSON: sorted keys, two-space indent, round-trip floats."""
    return json.dumps(report_dict, sort_keys=True, indent=2) + "\n"


def load_report_json(text: str) -> dict:
    return json.loads(text)


def table_to_csv(header: list[str], rows: list[tuple]) -> str:
    """CSV text with repr-formatted floats so values round-trip exactly."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def write_report(report: ExperimentReport, tables: dict[str, str],
                 out_dir: str) -> list[str]:
    """Write report.json and every table CSV; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as handle:
        handle.write(dump_report_json(report.to_dict()))
    written.append(path)
    for name, text in tables.items():
        path = os.path.join(out_dir, f"{name}.csv")
        with open(path, "w", newline="") as handle:
            handle.write(text)
        written.append(path)
    return written
