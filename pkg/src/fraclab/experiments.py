"""Experiment runners: one function per CLI subcommand.

Each runner takes an :class:`ExperimentConfig` and returns
``(results, tables)`` where results is a JSON-ready dict and tables maps
names to (header, rows).  Everything downstream of the seed is
deterministic; warnings raised by the library are collected into the report.
"""
from __future__ import annotations

import math
import time
import warnings

import numpy as np
from scipy.stats import kstest

from . import aggregation as agg
from . import costs as costs_mod
from . import fbm as fbm_mod
from . import models as models_mod
from . import strategies as strat_mod
from . import tree as tree_mod
from .calculus import quadratic_variation_total, trapezoid_spot_variance
from .errors import UsageError
from .models import ModelSpec, PriceBatch, load_price_csv, simulate_model
from .paths import TimeGrid, subsample_indices
from .payoffs import CallPayoff, LinearPayoff, QuadraticPayoff
from .reports import (ExperimentConfig, ExperimentReport, table_to_csv,
                      write_report)


def _model_spec(params: dict) -> ModelSpec:
    kind = params["model"]
    common = dict(s0=params.get("s0", 1.0), mu=params.get("mu", 0.0))
    if kind == "bs":
        return ModelSpec("bs", sigma=params.get("sigma", 1.0), **common)
    if kind == "fbs":
        return ModelSpec("fbs", nu=params.get("nu", 1.0), h=params.get("h"), **common)
    if kind == "mfbs":
        return ModelSpec("mfbs", sigma=params.get("sigma", 1.0),
                         nu=params.get("nu", 1.0), h=params.get("h"), **common)
    raise UsageError(f"unknown model {kind!r}")


def _payoff(params: dict):
    name = params.get("payoff", "call")
    if name == "call":
        return CallPayoff(float(params.get("strike", 1.0)))
    if name == "quadratic":
        return QuadraticPayoff()
    if name == "linear":
        return LinearPayoff()
    raise UsageError(f"unknown payoff {name!r}")


def _mc_se(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("nan")


def _summary(x: np.ndarray) -> dict:
    return {"mean": float(np.mean(x)), "median": float(np.median(x)),
            "std": float(np.std(x, ddof=1)) if x.size > 1 else 0.0,
            "mc_se": _mc_se(x), "min": float(np.min(x)), "max": float(np.max(x))}


# --------------------------------------------------------------------------
# runners
# --------------------------------------------------------------------------

def run_simulate(config: ExperimentConfig):
    p = config.params
    spec = _model_spec(p)
    grid = TimeGrid.dyadic(int(p["level"]))
    batch = simulate_model(spec, grid, config.seed, int(p["paths"]), config.threads)
    terminal = batch.values[:, -1]
    log_terminal = np.log(terminal)
    rows = [(i, float(terminal[i]), float(log_terminal[i]),
             float(batch.values[i].min()), float(batch.values[i].max()))
            for i in range(len(batch))]
    results = {
        "terminal_price": _summary(terminal),
        "terminal_log_price": _summary(log_terminal),
        "grid_points": len(grid),
    }
    return results, {"paths": (["path", "s_T", "log_s_T", "min", "max"], rows)}


def run_qv(config: ExperimentConfig):
    p = config.params
    min_level = int(p["min_level"])
    if p.get("input"):
        path = load_price_csv(p["input"])
        values = path.values[None, :]
        top = (values.shape[1] - 1).bit_length() - 1
        source = "csv"
    else:
        spec = _model_spec(p)
        grid = TimeGrid.dyadic(int(p["level"]))
        batch = simulate_model(spec, grid, config.seed, int(p["paths"]), config.threads)
        values = batch.values
        top = int(p["level"])
        source = spec.kind
    rows = []
    ladder = {}
    for level in range(min_level, top + 1):
        stride = 1 << (top - level)
        n_use = (values.shape[1] - 1) // stride * stride + 1
        sub = values[:, :n_use:stride]
        qv = np.sum(np.diff(sub, axis=1) ** 2, axis=1)
        ladder[str(level)] = _summary(qv)
        for i, q in enumerate(qv):
            rows.append((level, i, float(q)))
    results = {"source": source, "levels": ladder, "top_level": top}
    return results, {"qv": (["level", "path", "qv"], rows)}


def run_arbitrage(config: ExperimentConfig):
    p = config.params
    strategy = p["strategy"]
    n_paths = int(p["paths"])
    if strategy == "doubling":
        return _run_doubling(config, n_paths)
    if strategy == "momentum":
        return _run_momentum(config, n_paths)
    if strategy == "heat-kernel":
        return _run_heat_kernel(config, n_paths)
    if strategy == "zero-qv":
        return _run_zero_qv(config, n_paths)
    raise UsageError(f"unknown strategy {strategy!r}; choose from "
                     "momentum | doubling | heat-kernel | zero-qv")


def _check_ledger(ledger, prices) -> float:
    resid = ledger.self_financing_residual(prices)
    scale = ledger.scale(prices)
    if resid > 1e-10 * scale:
        raise UsageError(f"self-financing residual {resid} breaches 1e-10 * scale")
    return resid


def _run_doubling(config: ExperimentConfig, n_paths: int):
    p = config.params
    max_steps = int(p["max_steps"])
    paths = strat_mod.sample_doubling_paths(max_steps, config.seed, n_paths,
                                            s0=float(p.get("s0", 1.0)))
    rows = []
    stopped = np.zeros(n_paths, dtype=bool)
    v_stop = np.full(n_paths, np.nan)
    for i, path in enumerate(paths):
        res = strat_mod.doubling_strategy(path, max_steps)
        _check_ledger(res.ledger, path.values)
        stopped[i] = res.stopped
        if res.stopped:
            v_stop[i] = res.ledger.value[res.stop_index]
        rows.append((i, bool(res.stopped),
                     -1 if res.stop_index is None else int(res.stop_index),
                     float(res.ledger.final_value)))
    results = {
        "stopped_fraction": float(stopped.mean()),
        "min_stopped_value": float(np.nanmin(v_stop)) if stopped.any() else None,
        "truncated": int((~stopped).sum()),
        "final_value": _summary(np.array([r[3] for r in rows])),
    }
    return results, {"ledgers": (["path", "stopped", "stop_index", "v_final"], rows)}


def _momentum_batch(config: ExperimentConfig, n: int, n_paths: int):
    p = config.params
    spec = ModelSpec("fbs", nu=float(p.get("nu", 1.0)), h=float(p["h"]),
                     mu=float(p.get("mu", 0.0)), s0=float(p.get("s0", 1.0)))
    grid = TimeGrid.uniform(n)
    batch = simulate_model(spec, grid, config.seed, n_paths, config.threads)
    v_final = np.empty(n_paths)
    money = np.empty(n_paths)
    for i, path in enumerate(batch):
        ledger = strat_mod.momentum_ledger(path, spec.h)
        _check_ledger(ledger, path.values)
        v_final[i] = ledger.final_value
        money[i] = ledger.meta["max_money_in_stock"]
    return v_final, money


def _run_momentum(config: ExperimentConfig, n_paths: int):
    p = config.params
    n = int(p["n"])
    h = float(p["h"])
    v_final, money = _momentum_batch(config, n, n_paths)
    target = 1.0 ** (2 * h) * abs(2 ** (2 * h - 1) - 1)
    rows = [(i, float(v_final[i]), float(money[i])) for i in range(n_paths)]
    results = {
        "limit_target": target,
        "final_value": _summary(v_final),
        "max_money_in_stock": _summary(money),
        "experimental_regime": h < 0.5,
    }
    return results, {"ledgers": (["path", "v_final", "max_money_in_stock"], rows)}


def _run_heat_kernel(config: ExperimentConfig, n_paths: int):
    p = config.params
    grid = TimeGrid.dyadic(int(p["level"]))
    spec = ModelSpec("bs", sigma=1.0, mu=0.0, s0=float(p.get("s0", 1.0)))
    batch = simulate_model(spec, grid, config.seed, n_paths, config.threads)
    target = 1.0 / math.sqrt(2 * math.pi * grid.horizon)
    rows = []
    v_final = np.empty(n_paths)
    for i, path in enumerate(batch):
        ledger = strat_mod.heat_kernel_ledger(path)
        _check_ledger(ledger, path.values)
        v_final[i] = ledger.final_value
        rows.append((i, float(v_final[i]), float(abs(v_final[i] - target)),
                     float(ledger.meta["frozen_step_error"])))
    results = {
        "target": target,
        "final_value": _summary(v_final),
        "abs_error": _summary(np.abs(v_final - target)),
    }
    return results, {"ledgers": (["path", "v_final", "abs_error", "frozen_step_error"], rows)}


def _run_zero_qv(config: ExperimentConfig, n_paths: int):
    p = config.params
    spec = ModelSpec("fbs", nu=float(p.get("nu", 1.0)), h=float(p["h"]),
                     mu=float(p.get("mu", 0.0)), s0=float(p.get("s0", 1.0)))
    grid = TimeGrid.dyadic(int(p["level"]))
    batch = simulate_model(spec, grid, config.seed, n_paths, config.threads)
    rows = []
    rel_err = np.empty(n_paths)
    run_min = np.empty(n_paths)
    for i, path in enumerate(batch):
        ledger = strat_mod.zero_qv_ledger(path)
        _check_ledger(ledger, path.values)
        target = ledger.meta["target"]
        rel_err[i] = abs(ledger.final_value - target) / max(ledger.final_value, 1e-6)
        run_min[i] = ledger.meta["running_minimum"]
        rows.append((i, float(ledger.final_value), float(target), float(rel_err[i]),
                     float(run_min[i])))
    results = {
        "relative_error": _summary(rel_err),
        "running_minimum": _summary(run_min),
    }
    return results, {"ledgers": (["path", "v_final", "target", "rel_error", "run_min"], rows)}


def run_hedge(config: ExperimentConfig):
    p = config.params
    payoff = _payoff(p)
    n = int(p["n"])
    n_paths = int(p["paths"])
    spec = ModelSpec("fbs", nu=float(p.get("nu", 1.0)), h=float(p["h"]),
                     mu=float(p.get("mu", 0.0)), s0=float(p.get("s0", 1.0)))
    grid = TimeGrid.uniform(n)
    batch = simulate_model(spec, grid, config.seed, n_paths, config.threads)
    rows = []
    errors = np.empty(n_paths)
    for i, path in enumerate(batch):
        ledger = strat_mod.convex_hedge_ledger(path, payoff, side=p.get("side", "right"))
        _check_ledger(ledger, path.values)
        errors[i] = ledger.meta["replication_error"]
        rows.append((i, float(ledger.final_value), float(ledger.meta["target"]),
                     float(errors[i])))
    results = {
        "initial_cost": float(payoff.value(spec.s0)),
        "replication_error": _summary(errors),
    }
    return results, {"ledgers": (["path", "v_final", "payoff", "abs_error"], rows)}


def run_transaction_costs(config: ExperimentConfig):
    p = config.params
    payoff = _payoff(p)
    n = int(p["n"])
    n_paths = int(p["paths"])
    h = float(p["h"])
    schedule = costs_mod.CostSchedule(float(p["k0"]), float(p["alpha"]), n)
    eps = p["eps"]
    eps = costs_mod.default_bandwidth(n) if eps is None else float(eps)
    spec = ModelSpec("fbs", nu=float(p.get("nu", 1.0)), h=h,
                     mu=float(p.get("mu", 0.0)), s0=float(p.get("s0", 1.0)))
    grid = TimeGrid.uniform(n)
    batch = simulate_model(spec, grid, config.seed, n_paths, config.threads)
    hedge = costs_mod.discretized_hedge(payoff, n)
    rows = []
    gaps = np.empty(n_paths)
    functionals = np.empty(n_paths)
    for i, path in enumerate(batch):
        net, ledger = costs_mod.value_with_costs(hedge, path, schedule)
        _check_ledger(ledger, path.values)
        f_t = float(payoff.value(path.values[-1]))
        gaps[i] = abs(net - f_t)
        functionals[i] = costs_mod.tc_limit_functional(path, payoff, schedule.k0, h, eps)
        rows.append((i, float(net), f_t, float(gaps[i]),
                     float(ledger.meta["cost_term"]), float(functionals[i])))
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(gaps - functionals) / np.where(functionals > 0, functionals, np.nan)
    results = {
        "k_n": schedule.k_n,
        "bandwidth": eps,
        "critical_alpha": 1.0 - h,
        "gap": _summary(gaps),
        "cost_term": _summary(np.array([r[4] for r in rows])),
        "limit_functional": _summary(functionals),
        "gap_vs_functional_rel": _summary(rel[np.isfinite(rel)])
        if np.isfinite(rel).any() else None,
    }
    return results, {"ledgers": (["path", "net_value", "payoff", "gap",
                                  "cost_term", "limit_functional"], rows)}


def run_tree(config: ExperimentConfig):
    p = config.params
    n = int(p["n"])
    h = float(p["h"])
    draws = int(p["draws"])
    tab = tree_mod._tables(h) if h != 0.5 else None
    walk = tree_mod.sample_fractional_walk(n, h, config.seed, draws)
    terminal = walk.noise.values[:, -1]
    weights = tree_mod.walk_weight_matrix(n, h)
    node = tree_mod.find_arbitrage_node(n, h)
    scan = []
    scan_max = int(p["scan_max"])
    m = 16
    while m <= scan_max:
        hit = tree_mod.find_arbitrage_node(m, h)
        scan.append({"n": m, "depth": None if hit is None else hit.depth})
        m *= 2
    results = {
        "calibration_constant": None if tab is None else tab.c,
        "closed_form_constant": None if tab is None else tab.c_closed_form,
        "calibration_vs_closed_form": None if tab is None
        else abs(tab.c / tab.c_closed_form - 1.0),
        "weight_variance": float(np.sum(weights[-1] ** 2)),
        "empirical_terminal_variance": float(np.var(terminal, ddof=1)),
        "ks_statistic_vs_normal": float(kstest(terminal, "norm").statistic),
        "arbitrage_node": None if node is None else
        {"depth": node.depth, "margin": node.margin},
        "branch_profits": None if node is None else
        list(tree_mod.branch_profit_check(n, h, node)),
        "scan": scan,
    }
    tables = {}
    dump_depth = int(p["dump_depth"])
    if dump_depth > 0:
        levels = tree_mod.price_tree_levels(dump_depth, h)
        rows = [(d, mask, float(v)) for d, lv in enumerate(levels)
                for mask, v in enumerate(lv)]
        tables["tree"] = (["depth", "path", "value"], rows)
    return results, tables


def run_wick_tree(config: ExperimentConfig):
    p = config.params
    n = int(p["n"])
    h = float(p["h"])
    expansion, leaves = tree_mod.wick_tree_terminal(n, h)
    wick_levels = tree_mod.wick_tree_levels(n, h)
    plain_levels = tree_mod.price_tree_levels(n, h)
    node = tree_mod.tree_arbitrage_node_exhaustive(wick_levels)
    ratio = leaves / plain_levels[-1]
    results = {
        "expectation_coefficient": expansion.expectation,
        "exhaustive_mean": float(leaves.mean()),
        "leaf_min": float(leaves.min()),
        "leaf_max": float(leaves.max()),
        "arbitrage_node": None if node is None else
        {"parent_depth": node[0], "path": node[1]},
        "differs_from_plain_tree": bool(ratio.max() - ratio.min() > 1e-12),
    }
    tables = {}
    dump_depth = int(p["dump_depth"])
    if dump_depth > 0:
        rows = [(d, mask, float(v)) for d, lv in enumerate(wick_levels[: dump_depth + 1])
                for mask, v in enumerate(lv)]
        tables["wick_tree"] = (["depth", "path", "value"], rows)
    return results, tables


def run_aggregate(config: ExperimentConfig):
    p = config.params
    spec = agg.RenewalSpec(float(p["beta"]))
    m = int(p["m"])
    a_m = float(p["a_m"])
    reps = int(p["reps"])
    grid_steps = int(p["grid_steps"])
    batch = agg.scaled_fluctuation(m, a_m, 1.0, spec, config.seed, reps,
                                   grid_steps, config.threads)
    results = {
        "hurst": spec.hurst,
        "mean_sojourn": spec.mean_sojourn,
        "terminal": _summary(batch.values[:, -1]),
        "terminal_variance": float(np.var(batch.values[:, -1], ddof=1)),
        "cov_shape_correlation": _cov_shape_correlation(batch, spec.hurst),
    }
    rows = [(r, float(batch.values[r, -1])) for r in range(reps)]
    return results, {"reps": (["rep", "y_terminal"], rows)}


def run_agents(config: ExperimentConfig):
    p = config.params
    spec = agg.default_agent_spec(float(p["alpha"]))
    reps = int(p["reps"])
    batch = agg.simulate_agent_batch(spec, int(p["n_agents"]), float(p["eps"]),
                                     1.0, config.seed, reps,
                                     int(p["grid_steps"]), config.threads)
    terminal = batch.values[:, -1]
    fitted_c = float(np.std(terminal, ddof=1))
    results = {
        "hurst": spec.hurst,
        "equilibrium_mean_mood": spec.equilibrium_mean_mood(),
        "fitted_c": fitted_c,
        "terminal": _summary(terminal),
        "cov_shape_correlation": _cov_shape_correlation(batch, spec.hurst),
    }
    rows = [(r, float(terminal[r])) for r in range(reps)]
    return results, {"reps": (["rep", "x_terminal"], rows)}


def _cov_shape_correlation(batch, h: float, points: int = 8) -> float:
    """Pearson correlation between empirical and exact fBm covariance entries
    on an evenly spaced sub-grid (upper triangle including the diagonal)."""
    steps = batch.values.shape[1] - 1
    stride = steps // points
    idx = np.arange(stride, steps + 1, stride)
    tt = batch.grid.points[idx]
    emp = np.cov(batch.values[:, idx].T)
    exact = fbm_mod.fbm_covariance(tt[:, None], tt[None, :], h)
    iu = np.triu_indices(points)
    return float(np.corrcoef(emp[iu], exact[iu])[0, 1])


RUNNERS = {
    "simulate": run_simulate,
    "qv": run_qv,
    "arbitrage": run_arbitrage,
    "hedge": run_hedge,
    "transaction-costs": run_transaction_costs,
    "tree": run_tree,
    "wick-tree": run_wick_tree,
    "aggregate": run_aggregate,
    "agents": run_agents,
}


def run(config: ExperimentConfig) -> tuple[ExperimentReport, dict[str, str]]:
    """Dispatch to the named experiment; returns the report and CSV texts."""
    runner = RUNNERS[config.experiment]
    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        results, raw_tables = runner(config)
    elapsed = time.perf_counter() - start
    report = ExperimentReport(
        config=config.to_dict(),
        results=results,
        warnings=sorted(str(w.message) for w in caught),
        wall_clock_seconds=elapsed,
    )
    tables = {name: table_to_csv(header, rows)
              for name, (header, rows) in raw_tables.items()}
    return report, tables


def run_and_write(config: ExperimentConfig) -> tuple[ExperimentReport, list[str]]:
    report, tables = run(config)
    if config.out is None:
        return report, []
    return report, write_report(report, tables, config.out)


# --------------------------------------------------------------------------
# static validation (no simulation)
# --------------------------------------------------------------------------

def validate(config: ExperimentConfig) -> list[str]:
    """Static findings about a config; findings are data, not errors."""
    findings = []
    p = config.params
    exp = config.experiment

    def check(cond: bool, message: str) -> None:
        if cond:
            findings.append(message)

    if "paths" in p:
        check(int(p["paths"]) < 1, "paths must be positive")
    if "level" in p:
        check(int(p["level"]) > fbm_mod.CIRCULANT_LEVEL_CAP,
              f"level exceeds the circulant sampler cap {fbm_mod.CIRCULANT_LEVEL_CAP}")
    if exp in ("simulate", "qv", "arbitrage") and p.get("model") in ("fbs", "mfbs"):
        check(float(p.get("h", 0.75)) == 0.5,
              "the fractional models require a Hurst index different from 1/2")
    if exp == "arbitrage":
        strategy = p.get("strategy")
        check(strategy not in ("momentum", "doubling", "heat-kernel", "zero-qv"),
              f"unknown strategy {strategy!r}")
        if strategy == "momentum":
            check(int(p["n"]) < 3, "momentum needs n >= 3")
            check(float(p["h"]) < 0.5,
                  "h < 1/2 momentum runs are experimental; no convergence is asserted")
        if strategy == "zero-qv":
            check(float(p["h"]) <= 0.5, "zero-qv arbitrage requires h > 1/2")
        if strategy == "doubling":
            check(int(p["max_steps"]) < 1, "doubling needs at least one step")
    if exp == "hedge":
        check(float(p["h"]) <= 0.5, "convex hedging requires h > 1/2")
        check(p.get("payoff") not in ("call", "quadratic", "linear"),
              f"unknown payoff {p.get('payoff')!r}")
    if exp == "transaction-costs":
        check(float(p["alpha"]) <= 0.0, "cost schedules need alpha > 0")
        check(float(p["k0"]) < 0.0, "cost schedules need k0 >= 0")
        check(float(p["h"]) <= 0.5, "the hedging theorems assume h > 1/2")
        eps = p.get("eps")
        check(eps is not None and float(eps) <= 0.0, "bandwidth eps must be positive")
    if exp in ("tree", "wick-tree"):
        h = float(p["h"])
        check(not (h == 0.5 or 0.5 < h < 1.0), "tree construction needs h in [1/2, 1)")
        if exp == "wick-tree":
            check(int(p["n"]) > tree_mod.EXHAUSTIVE_CAP,
                  f"exhaustive depth capped at {tree_mod.EXHAUSTIVE_CAP}")
        else:
            check(int(p["n"]) > tree_mod.WALK_CAP,
                  f"walk length capped at {tree_mod.WALK_CAP}")
    if exp == "aggregate":
        beta = float(p["beta"])
        check(not 0.0 < beta < 1.0, "beta must lie in (0, 1)")
        if 0.0 < beta < 1.0:
            check(int(p["m"]) / float(p["a_m"]) ** beta < 10.0,
                  "connection rate m / a_m^beta below 10: outside the fast regime")
    if exp == "agents":
        alpha = float(p["alpha"])
        check(not 1.0 < alpha < 2.0, "alpha must lie in (1, 2)")
        check(float(p["eps"]) <= 0.0, "eps must be positive")
    return findings
