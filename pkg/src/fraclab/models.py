"""Discounted price models driven by Brownian, fractional, and mixed noise.

All prices are discounted, so there is no interest rate anywhere:

* ``bs``    S_t = s0 * exp(mu*t + sigma*W_t - sigma^2*t/2)
* ``fbs``   S_t = s0 * exp(mu*t + nu*B_t),                   Hurst != 1/2
* ``mfbs``  S_t = s0 * exp(mu*t + sigma*W_t - sigma^2*t/2 + nu*B_t), W, B independent

The driving noise is stored next to the prices; several trading rules are
written in noise coordinates (under ``bs`` with sigma=1, mu=0 the Brownian
path is recovered as ``log S_t + t/2``).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import fbm as _fbm
from .errors import UsageError
from .paths import PathBatch, SamplePath, TimeGrid

MODEL_KINDS = ("bs", "fbs", "mfbs")


@dataclass(frozen=True)
class ModelSpec:
    """Tagged parameter set for one of the three price models.

    Defaults follow the usual normalization mu=0, sigma=nu=s0=1.
    """

    kind: str
    s0: float = 1.0
    mu: float = 0.0
    sigma: float | None = None
    nu: float | None = None
    h: float | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise UsageError(f"unknown model kind {self.kind!r}")
        if self.s0 <= 0:
            raise UsageError("s0 must be positive")
        needs_sigma = self.kind in ("bs", "mfbs")
        needs_frac = self.kind in ("fbs", "mfbs")
        if needs_sigma:
            object.__setattr__(self, "sigma", 1.0 if self.sigma is None else float(self.sigma))
            if self.sigma <= 0:
                raise UsageError("sigma must be positive")
        elif self.sigma is not None:
            raise UsageError("fbs has no sigma; volatility enters through nu")
        if needs_frac:
            object.__setattr__(self, "nu", 1.0 if self.nu is None else float(self.nu))
            if self.nu <= 0:
                raise UsageError("nu must be positive")
            if self.h is None:
                raise UsageError(f"{self.kind} requires a Hurst index")
            _fbm.check_hurst(self.h)
            if self.h == 0.5:
                raise UsageError(f"{self.kind} requires h != 0.5 (h = 0.5 is the bs model)")
        else:
            if self.nu is not None or self.h is not None:
                raise UsageError("bs takes no fractional parameters")


@dataclass(frozen=True)
class PricePath:
    """One price trajectory plus the noise path(s) that drove it.

    ``spec`` is None for externally ingested series.
    """

    grid: TimeGrid
    values: np.ndarray
    spec: ModelSpec | None
    noise: dict

    def __post_init__(self):
        if self.values[0] <= 0 or np.any(self.values <= 0):
            raise UsageError("price paths must be strictly positive")

    @property
    def s0(self) -> float:
        return float(self.values[0])

    def as_sample_path(self) -> SamplePath:
        return SamplePath(self.grid, self.values, "price")


class PriceBatch:
    """Price paths sharing one grid and spec; indexing yields PricePath."""

    def __init__(self, grid: TimeGrid, values: np.ndarray, spec: ModelSpec, noise: dict):
        self.grid = grid
        self.values = values
        self.spec = spec
        self.noise = noise  # name -> 2D array, same shape as values

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, i: int) -> PricePath:
        return PricePath(self.grid, self.values[i], self.spec,
                         {k: v[i] for k, v in self.noise.items()})

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def simulate_model(spec: ModelSpec, grid: TimeGrid, seed: int, n_paths: int,
                   threads: int = 1) -> PriceBatch:
    """Simulate price paths; Brownian and fractional components use fixed
    stream domains, so models sharing a seed share their Brownian realization."""
    t = grid.points
    log_s = np.full((n_paths, len(grid)), np.log(spec.s0)) + spec.mu * t
    noise = {}
    if spec.kind in ("bs", "mfbs"):
        w = _fbm.sample_bm(grid, seed, n_paths, threads)
        noise["w"] = w.values
        log_s += spec.sigma * w.values - 0.5 * spec.sigma**2 * t
    if spec.kind in ("fbs", "mfbs"):
        b = _fbm.sample_fbm_for_grid(grid, spec.h, seed, n_paths, threads)
        noise["b"] = b.values
        log_s += spec.nu * b.values
    return PriceBatch(grid, np.exp(log_s), spec, noise)


def log_returns(batch: PriceBatch) -> np.ndarray:
    return np.diff(np.log(batch.values), axis=1)


def log_return_autocovariance(batch: PriceBatch, spacing: float, max_lag: int) -> np.ndarray:
    """Empirical autocovariance of log-returns at lags 0..max_lag, pooled over paths.

    Requires a uniform grid with the stated spacing.  Returns are demeaned with
    the pooled mean; lag-k products are averaged over both time and paths.
    """
    step = batch.grid.uniform_step()
    if not np.isclose(step, spacing, rtol=1e-9):
        raise UsageError(f"grid spacing {step} does not match requested {spacing}")
    r = log_returns(batch)
    n = r.shape[1]
    if max_lag >= n:
        raise UsageError("max_lag must be smaller than the number of returns")
    r = r - r.mean()
    out = np.empty(max_lag + 1)
    for lag in range(max_lag + 1):
        out[lag] = np.mean(r[:, : n - lag] * r[:, lag:])
    return out


def load_price_csv(source) -> PricePath:
    """Ingest an external ``time,price`` series (header row required).

    ``source`` is a file path or an open text handle.  Times must start at 0
    or are shifted so that the first observation sits at 0; they must be
    strictly increasing and prices strictly positive.
    """
    if hasattr(source, "read"):
        handle = source
        rows = list(csv.reader(handle))
    else:
        with open(source, newline="") as handle:
            rows = list(csv.reader(handle))
    if not rows:
        raise UsageError("empty CSV")
    header = [c.strip().lower() for c in rows[0]]
    if header[:2] != ["time", "price"]:
        raise UsageError("CSV must start with a 'time,price' header row")
    data = np.array([[float(r[0]), float(r[1])] for r in rows[1:]])
    if data.shape[0] < 2:
        raise UsageError("need at least two observations")
    times, prices = data[:, 0], data[:, 1]
    if not np.all(np.diff(times) > 0):
        raise UsageError("times must be strictly increasing")
    if np.any(prices <= 0):
        raise UsageError("prices must be strictly positive")
    times = times - times[0]
    n = times.size - 1
    level = n.bit_length() - 1
    uniform = np.allclose(np.diff(times), times[-1] / n, rtol=1e-9)
    dyadic = uniform and (1 << level) == n
    grid = TimeGrid(times, dyadic_level=level if dyadic else None)
    return PricePath(grid, prices, None, {})


def dump_price_csv(path: PricePath, target) -> None:
    """Write a ``time,price`` series; inverse of :func:`load_price_csv`."""
    own = not hasattr(target, "write")
    handle = open(target, "w", newline="") if own else target
    try:
        writer = csv.writer(handle)
        writer.writerow(["time", "price"])
        for t, p in zip(path.grid.points, path.values):
            writer.writerow([repr(float(t)), repr(float(p))])
    finally:
        if own:
            handle.close()
