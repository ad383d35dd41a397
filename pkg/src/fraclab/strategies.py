"""Self-financing portfolio engine and the explicit trading constructions.

A strategy maps a price path to an adapted position vector: ``positions[i]``
is the number of shares held on ``(t_i, t_{i+1}]`` and may only depend on the
path up to ``t_i``.  The ledger then evolves by the budget constraint

    V_{t_{i+1}} - V_{t_i} = positions[i] * (S_{t_{i+1}} - S_{t_i}),

so value changes come from price moves alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StrategyError, UsageError
from .models import ModelSpec, PricePath
from .paths import TimeGrid
from .payoffs import ConvexPayoff, check_convex_on


@dataclass
class ValueLedger:
    """Value, position, bond holding, and trade sizes along one path."""

    times: np.ndarray
    value: np.ndarray       # V at every grid point, len n+1
    position: np.ndarray    # shares held on (t_i, t_{i+1}], len n
    bond: np.ndarray        # V_i - position_i * S_i, len n
    trades: np.ndarray      # position changes, position[0] counted as the entry trade
    meta: dict = field(default_factory=dict)

    @property
    def final_value(self) -> float:
        return float(self.value[-1])

    def self_financing_residual(self, prices: np.ndarray) -> float:
        """max_i |dV_i - position_i * dS_i|; 0 up to rounding by construction."""
        dv = np.diff(self.value)
        ds = np.diff(np.asarray(prices, dtype=float))
        return float(np.max(np.abs(dv - self.position * ds), initial=0.0))

    def scale(self, prices: np.ndarray) -> float:
        """Magnitude used for relative residual tolerances."""
        return max(float(np.max(np.abs(self.value))),
                   float(np.max(np.abs(self.position * prices[:-1]), initial=0.0)),
                   1.0)


class Strategy:
    """Base trading rule; subclasses fill in :meth:`positions`."""

    name = "strategy"

    def positions(self, path: PricePath) -> np.ndarray:
        raise NotImplementedError


def run_self_financing(strategy: Strategy, path: PricePath, v0: float) -> ValueLedger:
    """Run one strategy along one path under the budget constraint."""
    pos = np.asarray(strategy.positions(path), dtype=float)
    s = path.values
    if pos.shape != (s.size - 1,):
        raise UsageError("positions must have one entry per grid step")
    bad = ~np.isfinite(pos)
    if bad.any():
        idx = int(np.argmax(bad))
        raise StrategyError(f"{strategy.name} produced a non-finite position at step {idx}",
                            time_index=idx)
    value = np.empty(s.size)
    value[0] = v0
    np.cumsum(pos * np.diff(s), out=value[1:])
    value[1:] += v0
    trades = np.diff(pos, prepend=0.0)
    return ValueLedger(path.grid.points, value, pos, value[:-1] - pos * s[:-1], trades,
                       meta={"strategy": strategy.name})


@dataclass
class ConstantPosition(Strategy):
    """Hold a fixed number of shares (0 = park in the bond, -1 = sell short and hold)."""

    units: float = 1.0
    name = "constant"

    def positions(self, path: PricePath) -> np.ndarray:
        return np.full(len(path.grid) - 1, self.units)


# --------------------------------------------------------------------------
# doubling at the readjustment times t_k = T (1 - 2^{-k})
# --------------------------------------------------------------------------
#
# The physical times 1 - 2^{-k} collapse below double resolution past k ~ 52,
# so doubling paths are indexed by readjustment count (grid points 0, 1, ...,
# max_steps + 1) while the price law uses the exact physical step sizes
# T 2^{-(k+1)}.  Only the cosmetic time labels differ from the physical clock.

def doubling_grid(max_steps: int) -> TimeGrid:
    """Step-count clock for a doubling run: one point per readjustment."""
    if max_steps < 1:
        raise UsageError("doubling needs at least one step")
    return TimeGrid(np.arange(max_steps + 2, dtype=float))


def doubling_step_sizes(max_steps: int, horizon: float = 1.0) -> np.ndarray:
    """Exact physical durations between readjustments, ending with the stub
    from t_max_steps to the horizon."""
    k = np.arange(1, max_steps + 1, dtype=float)
    return np.concatenate([horizon * 0.5**k, [horizon * 0.5**max_steps]])


def sample_doubling_paths(max_steps: int, seed: int, n_paths: int,
                          s0: float = 1.0) -> list[PricePath]:
    """Normalized Brownian-model prices at the doubling readjustment times.

    Increments between readjustments are independent Gaussians with the exact
    physical variances, so the stop rule below sees the true law.
    """
    from . import rng as _rng  # local import to avoid a cycle at module load
    grid = doubling_grid(max_steps)
    dt = doubling_step_sizes(max_steps)
    spec = ModelSpec("bs", s0=s0, sigma=1.0, mu=0.0)
    out = []
    for i in range(n_paths):
        z = _rng.normals(seed, _rng.DOMAIN_DOUBLING, i, dt.size)
        w = np.concatenate([[0.0], np.cumsum(np.sqrt(dt) * z)])
        t_phys = np.concatenate([[0.0], np.cumsum(dt)])
        values = s0 * np.exp(w - t_phys / 2)
        out.append(PricePath(grid, values, spec, {"w": w}))
    return out


@dataclass
class DoublingResult:
    ledger: ValueLedger
    stopped: bool
    stop_index: int | None   # grid index of the stopping time, None if truncated


def doubling_strategy(path: PricePath, max_steps: int) -> DoublingResult:
    """Redouble until the first normalized up-move of size one.

    The path must live on the doubling step clock (see :func:`doubling_grid`).
    With stakes ``(1 - V_{t_k}) / (S_{t_k} c_{k+1})`` and thresholds
    ``c_k = exp(sqrt(T 2^{-k}) - T 2^{-k}/2) - 1`` the value hits 1 at the
    first k whose Brownian increment satisfies
    ``(W_{t_k} - W_{t_{k-1}}) / sqrt(t_k - t_{k-1}) >= 1``.  Failure to stop
    within ``max_steps`` is a recorded outcome, not an exception: each step
    stops with probability ~0.1587, so truncation has probability
    ~0.8413^max_steps.

    The shortfall 1 - V is tracked multiplicatively, which keeps the final
    inequality V >= 1 exact in floating point on stopped paths.
    """
    s = path.values
    t = path.grid.points
    expected = doubling_grid(max_steps)
    if s.size != expected.points.size or not np.array_equal(t, expected.points):
        raise UsageError("path does not live on the doubling step clock for this max_steps")
    dt = doubling_step_sizes(max_steps)[: max_steps]
    dlog = np.diff(np.log(s[: max_steps + 1]))
    # c_{k+1} guards the step from t_k to t_{k+1}; the stop rule ratio >= 1 is
    # the same event as a normalized Brownian up-move of size one, but stated
    # in price space so the hit step satisfies V >= 1 exactly in floating point
    c_next = np.expm1(np.sqrt(dt) - dt / 2)
    ratio = np.expm1(dlog) / c_next

    hits = np.nonzero(ratio >= 1.0)[0]
    stop_after = int(hits[0]) if hits.size else None

    pos = np.zeros(s.size - 1)
    value = np.zeros(s.size)
    shortfall = 1.0  # 1 - V, kept as an exact product
    last = max_steps - 1 if stop_after is None else stop_after
    for k in range(last + 1):
        stake = shortfall / (s[k] * c_next[k])
        pos[k] = stake
        shortfall = shortfall * (1.0 - ratio[k])
        value[k + 1] = 1.0 - shortfall
    value[last + 2:] = value[last + 1]

    ledger = ValueLedger(t, value, pos, value[:-1] - pos * s[:-1],
                         np.diff(pos, prepend=0.0),
                         meta={"strategy": "doubling", "stopped": stop_after is not None})
    return DoublingResult(ledger, stop_after is not None,
                          None if stop_after is None else stop_after + 1)


# --------------------------------------------------------------------------
# momentum: chase the last log-return
# --------------------------------------------------------------------------

@dataclass
class MomentumStrategy(Strategy):
    """Position ``sign(h - 1/2) n^{2h-1} (log S_{t_k} - log S_{t_{k-1}}) / S_{t_k}``
    held on ``(t_k, t_{k+1}]``.

    For h > 1/2 the final value approaches T^{2h} (2^{2h-1} - 1) as the
    uniform grid refines while the money held in stock shrinks to zero.  The
    h < 1/2 branch uses the opposite sign and is experimental: spot-strategy
    integrals degenerate there and no convergence is claimed.
    """

    h: float
    name = "momentum"

    def positions(self, path: PricePath) -> np.ndarray:
        n = len(path.grid) - 1
        if n < 3:
            raise UsageError("momentum needs at least 3 grid steps")
        path.grid.uniform_step()
        sign = 1.0 if self.h > 0.5 else -1.0
        s = path.values
        dlog = np.diff(np.log(s))
        pos = np.zeros(n)
        # dlog[k-1] is the return into t_k; no position on the first interval
        pos[1:] = sign * n ** (2 * self.h - 1) * dlog[:-1] / s[1:-1]
        return pos


def momentum_ledger(path: PricePath, h: float) -> ValueLedger:
    """Run the momentum rule from zero initial capital; records the maximum
    money invested in the stock in ``meta['max_money_in_stock']``."""
    ledger = run_self_financing(MomentumStrategy(h), path, 0.0)
    ledger.meta["max_money_in_stock"] = float(
        np.max(np.abs(ledger.position * path.values[:-1])))
    return ledger


# --------------------------------------------------------------------------
# heat-kernel arbitrage in the Brownian model
# --------------------------------------------------------------------------

@dataclass
class HeatKernelStrategy(Strategy):
    """Short ``d/dx v(t, W_t) / S_t`` where v is the heat kernel
    ``exp(-x^2 / (2(T-t))) / sqrt(2 pi (T-t))``.

    Needs the normalized Brownian model (sigma = 1, mu = 0), where
    ``W_t = log S_t + t/2``.  From zero capital the value telescopes to
    ``v(0,0) - v(T, W_T) = 1/sqrt(2 pi T)`` because v solves the backward
    heat equation, making the time and convexity terms cancel.  The kernel
    blows up near T off the diagonal, so the position is frozen one grid
    step before the horizon and the frozen-step share is reported in
    ``meta['frozen_step_error']``.
    """

    name = "heat-kernel"

    def positions(self, path: PricePath) -> np.ndarray:
        spec = path.spec
        if spec is None or spec.kind != "bs" or spec.sigma != 1.0 or spec.mu != 0.0:
            raise UsageError("heat-kernel strategy requires the bs model with sigma=1, mu=0")
        t = path.grid.points
        horizon = t[-1]
        s = path.values
        w = np.log(s / spec.s0) + t / 2
        tau = horizon - t[:-1]
        pos = np.empty(s.size - 1)
        # d/dx v(t,x) = -x/(T-t) * v(t,x)
        head = slice(0, s.size - 2)
        vx = (-w[head] / tau[head]
              * np.exp(-0.5 * w[head] ** 2 / tau[head])
              / np.sqrt(2 * np.pi * tau[head]))
        pos[head] = -vx / s[head]
        pos[-1] = pos[-2]  # frozen step
        return pos


def heat_kernel_ledger(path: PricePath) -> ValueLedger:
    ledger = run_self_financing(HeatKernelStrategy(), path, 0.0)
    s = path.values
    ledger.meta["frozen_step_error"] = float(
        abs(ledger.position[-1] * (s[-1] - s[-2])))
    ledger.meta["target"] = 1.0 / np.sqrt(2 * np.pi * path.grid.horizon)
    return ledger


# --------------------------------------------------------------------------
# zero-quadratic-variation arbitrage in the fractional model
# --------------------------------------------------------------------------

@dataclass
class ZeroQVStrategy(Strategy):
    """Hold ``S_t - S_0``.  When the price has vanishing quadratic variation
    (fractional model, h > 1/2) the value from zero capital approaches
    ``(S_T - S_0)^2 / 2 >= 0``, an arbitrage that no Brownian model allows."""

    name = "zero-qv"

    def positions(self, path: PricePath) -> np.ndarray:
        spec = path.spec
        if spec is not None and not (spec.kind == "fbs" and spec.h is not None
                                     and spec.h > 0.5):
            raise UsageError("zero-qv strategy requires the fbs model with h > 1/2")
        return path.values[:-1] - path.values[0]


def zero_qv_ledger(path: PricePath) -> ValueLedger:
    ledger = run_self_financing(ZeroQVStrategy(), path, 0.0)
    s0 = path.values[0]
    ledger.meta["target"] = float((path.values[-1] - s0) ** 2 / 2)
    ledger.meta["running_minimum"] = float(ledger.value.min())
    return ledger


# --------------------------------------------------------------------------
# convex hedging with one-sided derivatives
# --------------------------------------------------------------------------

@dataclass
class ConvexHedgeStrategy(Strategy):
    """Hold the one-sided derivative ``f'(S_t)`` of a convex payoff.

    With initial capital f(S_0) the terminal value replicates f(S_T) in the
    zero-quadratic-variation regime.  For the call this is the
    stop-loss-start-gain portfolio.  ``side`` picks the right (default) or
    left derivative; they differ only on paths touching a kink exactly on a
    grid point.
    """

    payoff: ConvexPayoff
    side: str = "right"
    name = "convex-hedge"

    def positions(self, path: PricePath) -> np.ndarray:
        spec = path.spec
        if spec is not None and not (spec.kind == "fbs" and spec.h is not None
                                     and spec.h > 0.5):
            raise UsageError("convex hedging requires the fbs model with h > 1/2")
        check_convex_on(self.payoff, path.values)
        deriv = self.payoff.d_right if self.side == "right" else self.payoff.d_left
        return np.asarray(deriv(path.values[:-1]), dtype=float)


def convex_hedge_ledger(path: PricePath, payoff: ConvexPayoff,
                        side: str = "right") -> ValueLedger:
    v0 = float(payoff.value(path.values[0]))
    ledger = run_self_financing(ConvexHedgeStrategy(payoff, side), path, v0)
    target = float(payoff.value(path.values[-1]))
    ledger.meta["target"] = target
    ledger.meta["replication_error"] = abs(ledger.final_value - target)
    return ledger
