"""Heavy-tailed aggregation limits: renewal superposition and inert agents.

Both constructions converge weakly to fractional Brownian motion.  The
workload route superposes m i.i.d. stationary renewal counting processes
whose sojourn tail ``1 - G(t) ~ t^{-(1+beta)}`` produces Hurst index
``H = 1 - beta/2``.  The agent route aggregates semi-Markov trading moods
with a heavy-tailed inactive state (tail exponent alpha in (1, 2)), giving
``H = (3 - alpha)/2``.

Sojourn laws are exact Pareto (``1 - G(t) = (1+t)^{-(1+beta)}``), so the
mean, the stationary first-sojourn law, and all inverse CDFs are closed
form and sampling needs no rejection.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .errors import UsageError
from .parallel import for_each_index
from .paths import PathBatch, SamplePath, TimeGrid


class ConnectionRateWarning(UserWarning):
    """m / a_m^beta is too small for the fast-connection regime."""


@dataclass(frozen=True)
class RenewalSpec:
    """Stationary renewal process with Pareto sojourns.

    ``1 - G(t) = (1 + t/scale)^{-(1+beta)}`` with beta in (0, 1); the mean
    sojourn is ``mu = scale/beta`` and the stationary first sojourn has tail
    ``(1 + t/scale)^{-beta}`` (infinite mean; that is where the long memory
    comes from).  The tail constant ``L = scale^{1+beta}`` enters the
    fluctuation normalizer, which makes the construction exactly invariant
    under a change of time unit.  Implied Hurst index of the limit:
    ``H = 1 - beta/2``.
    """

    beta: float
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise UsageError("beta must lie in (0, 1)")
        if self.scale <= 0.0:
            raise UsageError("scale must be positive")

    @property
    def mean_sojourn(self) -> float:
        return self.scale / self.beta

    @property
    def tail_constant(self) -> float:
        return self.scale ** (1.0 + self.beta)

    @property
    def hurst(self) -> float:
        return 1.0 - self.beta / 2.0

    def sojourn_inverse_cdf(self, u):
        """Quantile function of G."""
        base = (1.0 - np.asarray(u, dtype=float)) ** (-1.0 / (1.0 + self.beta)) - 1.0
        return self.scale * base

    def first_sojourn_inverse_cdf(self, u):
        """Quantile function of the stationary (equilibrium) first sojourn G0."""
        base = (1.0 - np.asarray(u, dtype=float)) ** (-1.0 / self.beta) - 1.0
        return self.scale * base


def sample_renewal_counting(spec: RenewalSpec, horizon: float, seed: int,
                            index: int = 0) -> np.ndarray:
    """Sorted event times of one stationary renewal counting path on [0, horizon]."""
    gen = _rng.stream(seed, _rng.DOMAIN_RENEWAL, index)
    events = []
    t = float(spec.first_sojourn_inverse_cdf(gen.random()))
    while t <= horizon:
        events.append(t)
        t += float(spec.sojourn_inverse_cdf(gen.random()))
    return np.array(events)


def _binned_counts(gen: np.random.Generator, spec: RenewalSpec, n_procs: int,
                   grid_times: np.ndarray) -> np.ndarray:
    """N_t at the grid times for n_procs processes, shape (n_procs, len(grid)).

    Processes advance in waves (one sojourn per active process per wave), and
    events are histogrammed straight onto the grid, so memory stays O(grid).
    """
    horizon = grid_times[-1]
    hist = np.zeros((n_procs, grid_times.size), dtype=np.int64)
    t = spec.first_sojourn_inverse_cdf(gen.random(n_procs))
    active = t <= horizon
    while active.any():
        idx = np.nonzero(active)[0]
        where = np.searchsorted(grid_times, t[idx], side="left")
        np.add.at(hist, (idx, where), 1)
        t[idx] += spec.sojourn_inverse_cdf(gen.random(idx.size))
        active[idx] = t[idx] <= horizon
    return np.cumsum(hist, axis=1)


def workload(m: int, a_m: float, horizon: float, spec: RenewalSpec, seed: int,
             grid_steps: int = 64, replication: int = 0) -> SamplePath:
    """Superposition W(m, t) of m i.i.d. counting processes, time-rescaled.

    Counts are evaluated on a uniform grid over [0, a_m * horizon] and
    reported against the rescaled times t in [0, horizon].  A connection
    rate ``m / a_m^beta`` below 10 leaves the fast-connection regime and is
    flagged with a :class:`ConnectionRateWarning`.
    """
    if m < 1:
        raise UsageError("need at least one process")
    rate = m / a_m**spec.beta
    if rate < 10.0:
        warnings.warn(f"connection rate m/a_m^beta = {rate:.2f} < 10",
                      ConnectionRateWarning, stacklevel=2)
    gen = _rng.stream(seed, _rng.DOMAIN_RENEWAL, replication)
    grid = TimeGrid.uniform(grid_steps, horizon)
    counts = _binned_counts(gen, spec, m, grid.points[1:] * a_m).sum(axis=0)
    values = np.concatenate([[0.0], counts.astype(float)])
    return SamplePath(grid, values, "bm")


def fluctuation_normalizer(spec: RenewalSpec) -> float:
    """mu^{3/2} sqrt(beta (1-beta) (2-beta) / 2), divided by the square root
    of the sojourn tail constant (1 for the unit-scale law)."""
    b = spec.beta
    return (spec.mean_sojourn**1.5 * np.sqrt(b * (1 - b) * (2 - b) / 2.0)
            / np.sqrt(spec.tail_constant))


def scaled_fluctuation(m: int, a_m: float, horizon: float, spec: RenewalSpec,
                       seed: int, n_reps: int, grid_steps: int = 64,
                       threads: int = 1) -> PathBatch:
    """Centered, normalized workload fluctuations, one path per replication:

        Y(t) = normalizer * (W(m, a_m t) - m a_m t / mu) / (m^{1/2} a_m^{1-beta/2}).

    Each replication consumes its own stream, so results do not depend on
    batching or worker count.  The limit is fractional Brownian motion with
    H = 1 - beta/2.
    """
    rate = m / a_m**spec.beta
    if rate < 10.0:
        warnings.warn(f"connection rate m/a_m^beta = {rate:.2f} < 10",
                      ConnectionRateWarning, stacklevel=2)
    grid = TimeGrid.uniform(grid_steps, horizon)
    scale = fluctuation_normalizer(spec) / (np.sqrt(m) * a_m ** (1 - spec.beta / 2))
    drift = m * a_m * grid.points[1:] / spec.mean_sojourn
    values = np.zeros((n_reps, grid_steps + 1))

    def fill(r: int) -> None:
        gen = _rng.stream(seed, _rng.DOMAIN_RENEWAL, r)
        counts = _binned_counts(gen, spec, m, grid.points[1:] * a_m).sum(axis=0)
        values[r, 1:] = scale * (counts - drift)

    for_each_index(fill, n_reps, threads)
    return PathBatch(grid, values, "fbm")


# --------------------------------------------------------------------------
# semi-Markov trading moods
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AgentSpec:
    """Finite-state trading mood with a heavy-tailed inactive state.

    ``states`` must contain 0; ``transition`` is a Markov matrix with zero
    diagonal and positive off-diagonal entries.  The sojourn at state 0 is
    Pareto with tail exponent ``alpha`` in (1, 2) (``1 - F = (1+t)^{-alpha}``,
    mean ``1/(alpha-1)``); active states hold for an exponential time with
    the given rate (lighter than any power tail).  Implied Hurst index:
    ``H = (3 - alpha)/2``.
    """

    states: tuple
    transition: tuple
    alpha: float
    active_rate: float = 1.0

    def __post_init__(self):
        states = tuple(float(s) for s in self.states)
        object.__setattr__(self, "states", states)
        p = np.asarray(self.transition, dtype=float)
        object.__setattr__(self, "transition", tuple(map(tuple, p)))
        if 0.0 not in states:
            raise UsageError("state space must contain the inactive state 0")
        if not 1.0 < self.alpha < 2.0:
            raise UsageError("alpha must lie in (1, 2)")
        if self.active_rate <= 0:
            raise UsageError("active_rate must be positive")
        k = len(states)
        if p.shape != (k, k):
            raise UsageError("transition matrix shape must match the state count")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
            raise UsageError("transition rows must sum to 1")
        if np.any(np.diag(p) != 0.0):
            raise UsageError("semi-Markov jumps must change the state")
        off = p[~np.eye(k, dtype=bool)]
        if np.any(off <= 0.0):
            raise UsageError("off-diagonal transition probabilities must be positive")
        if abs(self.chain_stationary_mean()) < 1e-12:
            raise UsageError("stationary mean trading mood must be nonzero")

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.transition, dtype=float)

    @property
    def hurst(self) -> float:
        return (3.0 - self.alpha) / 2.0

    def stationary_distribution(self) -> np.ndarray:
        """Stationary law of the embedded jump chain."""
        p = self.matrix
        k = p.shape[0]
        a = np.vstack([p.T - np.eye(k), np.ones(k)])
        b = np.concatenate([np.zeros(k), [1.0]])
        pi, *_ = np.linalg.lstsq(a, b, rcond=None)
        return pi

    def mean_sojourns(self) -> np.ndarray:
        """Mean holding time per state (inactive is Pareto, active exponential)."""
        out = np.empty(len(self.states))
        for i, s in enumerate(self.states):
            out[i] = 1.0 / (self.alpha - 1.0) if s == 0.0 else 1.0 / self.active_rate
        return out

    def chain_stationary_mean(self) -> float:
        """Mean mood under the jump-chain stationary law."""
        return float(self.stationary_distribution() @ np.asarray(self.states))

    def time_stationary_distribution(self) -> np.ndarray:
        """Time-weighted stationary law (jump-chain law biased by mean sojourns)."""
        pi = self.stationary_distribution() * self.mean_sojourns()
        return pi / pi.sum()

    def equilibrium_mean_mood(self) -> float:
        """Long-run time average of the mood; this is the drift to remove."""
        return float(self.time_stationary_distribution() @ np.asarray(self.states))


def default_agent_spec(alpha: float = 1.5) -> AgentSpec:
    """Three moods (sell, hold, buy) with a tilt toward buying."""
    return AgentSpec(states=(-1.0, 0.0, 1.0),
                     transition=((0.0, 0.6, 0.4),
                                 (0.3, 0.0, 0.7),
                                 (0.4, 0.6, 0.0)),
                     alpha=alpha)


def _sojourn_draw(gen: np.random.Generator, spec: AgentSpec,
                  state_idx: np.ndarray) -> np.ndarray:
    """One holding time per agent given its current state index."""
    states = np.asarray(spec.states)
    out = np.empty(state_idx.size)
    at_zero = states[state_idx] == 0.0
    n0 = int(at_zero.sum())
    if n0:
        out[at_zero] = (1.0 - gen.random(n0)) ** (-1.0 / spec.alpha) - 1.0
    n1 = state_idx.size - n0
    if n1:
        out[~at_zero] = gen.exponential(1.0 / spec.active_rate, n1)
    return out


def _equilibrium_start(gen: np.random.Generator, spec: AgentSpec,
                       n_agents: int) -> tuple[np.ndarray, np.ndarray]:
    """Initial states and residual first sojourns under the equilibrium law.

    State frequencies are sojourn-weighted; the residual holding time uses
    the stationary-excess law of that state's sojourn (memoryless for the
    exponential states, ``(1+t)^{1-alpha}`` tail for the inactive one).
    """
    probs = spec.time_stationary_distribution()
    states = np.asarray(spec.states)
    idx = gen.choice(len(states), size=n_agents, p=probs)
    residual = np.empty(n_agents)
    at_zero = states[idx] == 0.0
    n0 = int(at_zero.sum())
    if n0:
        residual[at_zero] = (1.0 - gen.random(n0)) ** (-1.0 / (spec.alpha - 1.0)) - 1.0
    n1 = n_agents - n0
    if n1:
        residual[~at_zero] = gen.exponential(1.0 / spec.active_rate, n1)
    return idx, residual


def sample_mood_path(spec: AgentSpec, horizon: float, gen: np.random.Generator
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Jump times and states of one agent on [0, horizon] (diagnostic use).

    Returns (times, state_indices): the agent sits in state ``states[k]`` on
    ``[times[j], times[j+1])`` with implicit final segment up to the horizon.
    Starts from the equilibrium law.
    """
    idx, residual = _equilibrium_start(gen, spec, 1)
    times = [0.0]
    states = [int(idx[0])]
    t = float(residual[0])
    cum = spec.matrix.cumsum(axis=1)
    while t < horizon:
        times.append(t)
        nxt = int(np.searchsorted(cum[states[-1]], gen.random(), side="right"))
        states.append(nxt)
        t += float(_sojourn_draw(gen, spec, np.array([nxt]))[0])
    return np.array(times), np.array(states)


def _aggregate_integrated_mood(gen: np.random.Generator, spec: AgentSpec,
                               n_agents: int, grid_times: np.ndarray) -> np.ndarray:
    """sum_k int_0^{g_j} mood_k(s) ds at each grid time, summed over agents.

    A segment [a, b) with mood x contributes ``x ((g-a)^+ - (g-b)^+)`` to the
    integral at g.  Both hinge families are affine in g between segment
    endpoints, so two weighted histograms per endpoint type (mass and
    first-moment) accumulate everything; the grid evaluation happens once at
    the end.  Agents advance in waves, one sojourn per wave.
    """
    horizon = grid_times[-1]
    states = np.asarray(spec.states)
    n_bins = grid_times.size
    hinge_mass = np.zeros(n_bins)     # sum of x with hinge points <= grid bin
    hinge_moment = np.zeros(n_bins)   # sum of x * hinge point

    def add_hinges(points: np.ndarray, weight: np.ndarray) -> None:
        where = np.searchsorted(grid_times, points, side="left")
        np.add.at(hinge_mass, where, weight)
        np.add.at(hinge_moment, where, weight * points)

    idx, residual = _equilibrium_start(gen, spec, n_agents)
    seg_start = np.zeros(n_agents)
    seg_end = np.minimum(residual, horizon)
    cum = spec.matrix.cumsum(axis=1)
    while True:
        mood = states[idx]
        live = mood != 0.0
        if live.any():
            add_hinges(seg_start[live], mood[live])
            add_hinges(seg_end[live], -mood[live])
        alive = seg_end < horizon
        if not alive.any():
            break
        ii = np.nonzero(alive)[0]
        u = gen.random(ii.size)
        idx[ii] = (cum[idx[ii]] < u[:, None]).sum(axis=1)
        seg_start[ii] = seg_end[ii]
        seg_end[ii] = np.minimum(seg_end[ii] + _sojourn_draw(gen, spec, idx[ii]),
                                 horizon)
        done = ~alive
        seg_start[done] = horizon
        seg_end[done] = horizon
    return grid_times * np.cumsum(hinge_mass) - np.cumsum(hinge_moment)


def simulate_agents(spec: AgentSpec, n_agents: int, eps: float, horizon: float,
                    seed: int, grid_steps: int = 64,
                    replication: int = 0) -> SamplePath:
    """Centered, normalized aggregate order flow of n inert agents.

    The moods run on the stretched clock t/eps; the aggregate integrated mood
    is centered by the equilibrium mean drift and scaled by
    ``eps^{1-H} sqrt(n)``, where ``H = (3 - alpha)/2``.  With unit trade
    sizes the order flow is entirely determined by the moods.
    """
    if n_agents < 1:
        raise UsageError("need at least one agent")
    if eps <= 0:
        raise UsageError("eps must be positive")
    gen = _rng.stream(seed, _rng.DOMAIN_AGENTS, replication)
    grid = TimeGrid.uniform(grid_steps, horizon)
    mu = spec.equilibrium_mean_mood()
    stretched = grid.points[1:] / eps
    integrated = _aggregate_integrated_mood(gen, spec, n_agents, stretched)
    centered = eps * integrated - mu * n_agents * grid.points[1:]
    scale = eps ** (1.0 - spec.hurst) * np.sqrt(n_agents)
    values = np.concatenate([[0.0], centered / scale])
    return SamplePath(grid, values, "fbm")


def simulate_agent_batch(spec: AgentSpec, n_agents: int, eps: float,
                         horizon: float, seed: int, n_reps: int,
                         grid_steps: int = 64, threads: int = 1) -> PathBatch:
    """Independent replications of :func:`simulate_agents` (stream per replication)."""
    grid = TimeGrid.uniform(grid_steps, horizon)
    values = np.zeros((n_reps, grid_steps + 1))

    def fill(r: int) -> None:
        values[r] = simulate_agents(spec, n_agents, eps, horizon, seed,
                                    grid_steps=grid_steps, replication=r).values

    for_each_index(fill, n_reps, threads)
    return PathBatch(grid, values, "fbm")
