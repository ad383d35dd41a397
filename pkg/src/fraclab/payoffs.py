"""Convex payoffs with one-sided derivatives and curvature measures."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvexityError


class ConvexPayoff:
    """Interface: value, left/right derivatives, and the second-derivative
    measure split into point atoms and an absolutely continuous density."""

    name = "payoff"

    def value(self, x):
        raise NotImplementedError

    def d_left(self, x):
        raise NotImplementedError

    def d_right(self, x):
        raise NotImplementedError

    def curvature_atoms(self) -> list[tuple[float, float]]:
        """[(location, mass)] atoms of the second-derivative measure."""
        return []

    def curvature_density(self):
        """Density of the diffuse part, or None."""
        return None

    def __call__(self, x):
        return self.value(x)


@dataclass
class CallPayoff(ConvexPayoff):
    """(x - K)^+.  The right derivative is the indicator 1{x >= K} (value 1 at
    the strike, by right-continuity); the left derivative is 1{x > K}.  The
    hedge built from the right derivative is the stop-loss-start-gain
    portfolio.  Curvature is a unit atom at the strike."""

    strike: float
    name = "call"

    def value(self, x):
        return np.maximum(np.asarray(x, dtype=float) - self.strike, 0.0)

    def d_left(self, x):
        return (np.asarray(x, dtype=float) > self.strike).astype(float)

    def d_right(self, x):
        return (np.asarray(x, dtype=float) >= self.strike).astype(float)

    def curvature_atoms(self):
        return [(self.strike, 1.0)]


@dataclass
class QuadraticPayoff(ConvexPayoff):
    """a * x^2, smooth; curvature density is the constant 2a."""

    coeff: float = 1.0
    name = "quadratic"

    def value(self, x):
        return self.coeff * np.asarray(x, dtype=float) ** 2

    def d_left(self, x):
        return 2.0 * self.coeff * np.asarray(x, dtype=float)

    d_right = d_left

    def curvature_density(self):
        return lambda a: 2.0 * self.coeff * np.ones_like(np.asarray(a, dtype=float))


@dataclass
class LinearPayoff(ConvexPayoff):
    """a + b * x; zero curvature, replication is exact at any grid size."""

    intercept: float = 0.0
    slope: float = 1.0
    name = "linear"

    def value(self, x):
        return self.intercept + self.slope * np.asarray(x, dtype=float)

    def d_left(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.slope)

    d_right = d_left


def check_convex_on(payoff: ConvexPayoff, samples: np.ndarray) -> None:
    """Raise ConvexityError unless the right derivative is nondecreasing and
    dominates the left derivative on the sampled range."""
    x = np.unique(np.asarray(samples, dtype=float))
    dr = np.asarray(payoff.d_right(x), dtype=float)
    dl = np.asarray(payoff.d_left(x), dtype=float)
    if np.any(np.diff(dr) < -1e-12):
        raise ConvexityError(f"{payoff.name}: right derivative decreases on the sampled range")
    if np.any(dl - dr > 1e-12):
        raise ConvexityError(f"{payoff.name}: left derivative exceeds right derivative")
