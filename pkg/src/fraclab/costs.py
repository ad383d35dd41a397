"""Discretized hedging under proportional transaction costs.

Costs are charged per rebalancing date as ``k_n * S * |position change|``
with ``k_n = k0 * n^{-alpha}``.  For a convex payoff hedged by its left
derivative the friction either vanishes (alpha > 1 - h) or converges to a
local-time functional of the driving noise (alpha = 1 - h): trades cluster
where the noise crosses the kink levels, and the crossing count at level
``ln a`` is measured exactly by the local time there.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .models import PricePath
from .payoffs import ConvexPayoff
from .strategies import Strategy, ValueLedger, run_self_financing


@dataclass(frozen=True)
class CostSchedule:
    """Proportional cost k_n = k0 * n^{-alpha} at n rebalancing dates on [0, 1]."""

    k0: float
    alpha: float
    n: int

    def __post_init__(self):
        if self.k0 < 0:
            raise UsageError("k0 must be nonnegative")
        if self.alpha <= 0:
            raise UsageError("alpha must be positive")
        if self.n < 1:
            raise UsageError("n must be at least 1")

    @property
    def k_n(self) -> float:
        return self.k0 * self.n ** (-self.alpha)


def rebalance_indices(path: PricePath, n: int) -> np.ndarray:
    """Grid indices of the rebalancing dates i/n; the grid must refine them."""
    t = path.grid.points
    if not np.isclose(t[-1], 1.0, rtol=1e-12):
        raise UsageError("cost schedules assume horizon T = 1")
    steps = t.size - 1
    if steps % n != 0:
        raise UsageError(f"grid with {steps} steps does not refine {n} rebalancing dates")
    stride = steps // n
    idx = np.arange(0, t.size, stride)
    if not np.allclose(t[idx], np.arange(n + 1) / n, rtol=1e-9, atol=1e-12):
        raise UsageError("grid is not uniform over the rebalancing dates")
    return idx


@dataclass
class DiscretizedHedge(Strategy):
    """Hold ``f_left'(S_{t_{i-1}})`` on ``((i-1)/n, i/n]``: the convex hedge
    sampled at the previous rebalancing date."""

    payoff: ConvexPayoff
    n: int
    name = "discretized-hedge"

    def positions(self, path: PricePath) -> np.ndarray:
        idx = rebalance_indices(path, self.n)
        s_reb = path.values[idx[:-1]]
        pos_reb = np.asarray(self.payoff.d_left(s_reb), dtype=float)
        stride = (path.values.size - 1) // self.n
        return np.repeat(pos_reb, stride)


def discretized_hedge(payoff: ConvexPayoff, n: int) -> DiscretizedHedge:
    if n < 1:
        raise UsageError("need at least one rebalancing date")
    return DiscretizedHedge(payoff, n)


def hedge_cost_term(hedge: DiscretizedHedge, path: PricePath, schedule: CostSchedule) -> float:
    """sum_{i=1}^{n} S_{t_{i-1}} |f'(S_{t_i}) - f'(S_{t_{i-1}})| times k_n.

    No cost is charged for the entry trade at time 0.
    """
    if schedule.n != hedge.n:
        raise UsageError("schedule and hedge disagree on n")
    idx = rebalance_indices(path, hedge.n)
    s = path.values[idx]
    deriv = np.asarray(hedge.payoff.d_left(s), dtype=float)
    return schedule.k_n * float(np.sum(s[:-1] * np.abs(np.diff(deriv))))


def value_with_costs(hedge: DiscretizedHedge, path: PricePath,
                     schedule: CostSchedule) -> tuple[float, ValueLedger]:
    """Terminal value ``f(S_0) + forward integral of the hedge - cost term``.

    Returns the net value and the frictionless ledger it was derived from.
    """
    v0 = float(hedge.payoff.value(path.values[0]))
    ledger = run_self_financing(hedge, path, v0)
    cost = hedge_cost_term(hedge, path, schedule)
    ledger.meta["cost_term"] = cost
    ledger.meta["net_value"] = ledger.final_value - cost
    return ledger.final_value - cost, ledger


# --------------------------------------------------------------------------
# occupation-density (local time) estimation
# --------------------------------------------------------------------------

@dataclass
class LocalTimeEstimate:
    """Running local time estimate l(x, t) on a grid."""

    level: float
    bandwidth: float
    times: np.ndarray
    running: np.ndarray

    @property
    def total(self) -> float:
        return float(self.running[-1])


def local_time_estimate(noise_values: np.ndarray, times: np.ndarray, x: float,
                        eps: float) -> LocalTimeEstimate:
    """Occupation-time estimator ``(2 eps)^{-1} * Leb{s <= t : |B_s - x| < eps}``.

    Time in the band is accumulated with left-endpoint evaluation, matching
    the forward-sum convention used everywhere else.
    """
    if eps <= 0:
        raise UsageError("bandwidth must be positive")
    b = np.asarray(noise_values, dtype=float)
    t = np.asarray(times, dtype=float)
    if b.shape != t.shape:
        raise UsageError("values and times must share a grid")
    inside = (np.abs(b[:-1] - x) < eps).astype(float)
    running = np.empty_like(t)
    running[0] = 0.0
    np.cumsum(inside * np.diff(t) / (2 * eps), out=running[1:])
    return LocalTimeEstimate(x, eps, t, running)


def default_bandwidth(n: int) -> float:
    """Bias/variance compromise eps = n^{-1/3} for n rebalancing dates."""
    return float(n) ** (-1.0 / 3.0)


def tc_limit_functional(path: PricePath, payoff: ConvexPayoff, k0: float,
                        h: float, eps: float,
                        density_grid: np.ndarray | None = None) -> float:
    """Predicted cost leakage at the critical exponent alpha = 1 - h:

        sqrt(2/pi) * k0 * integral over curvature of (integral of S_t dl(ln a, t)).

    The curvature measure of the payoff enters through its atoms and, if
    present, its density integrated over ``density_grid``.  The local time of
    the driving fractional noise is estimated at level ``ln a`` with
    bandwidth ``eps``; the Stieltjes sum against dl uses left-endpoint prices.
    """
    if "b" not in path.noise:
        raise UsageError("path carries no fractional noise component")
    b = path.noise["b"]
    t = path.grid.points
    s_left = path.values[:-1]

    def stieltjes_at(a: float) -> float:
        est = local_time_estimate(b, t, float(np.log(a)), eps)
        return float(np.sum(s_left * np.diff(est.running)))

    total = sum(mass * stieltjes_at(a) for a, mass in payoff.curvature_atoms())
    dens = payoff.curvature_density()
    if dens is not None:
        if density_grid is None:
            lo, hi = float(path.values.min()), float(path.values.max())
            density_grid = np.linspace(lo, hi, 129)
        vals = np.array([stieltjes_at(a) for a in density_grid])
        total += float(np.trapz(np.asarray(dens(density_grid), dtype=float) * vals,
                                density_grid))
    return float(np.sqrt(2 / np.pi) * k0 * total)
