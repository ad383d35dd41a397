"""Time grids and sampled trajectories."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError

PATH_KINDS = ("fbm", "bm", "mixed", "price")


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time points ``t_0 = 0 < t_1 < ... < t_n = T``.

    ``dyadic_level`` is set when the grid is ``t_i = T * i / 2**level``; the
    pathwise calculus routines refine and coarsen only along such grids.
    """

    points: np.ndarray
    dyadic_level: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or pts.size < 2:
            raise UsageError("grid needs at least the two points 0 and T")
        if pts[0] != 0.0:
            raise UsageError("grid must start at 0")
        if not np.all(np.diff(pts) > 0):
            raise UsageError("grid points must be strictly increasing")

    @property
    def horizon(self) -> float:
        return float(self.points[-1])

    @property
    def n_steps(self) -> int:
        return self.points.size - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.points)

    @classmethod
    def dyadic(cls, level: int, horizon: float = 1.0) -> "TimeGrid":
        """The grid ``t_i = T * i / 2**level``."""
        if level < 0:
            raise UsageError("dyadic level must be nonnegative")
        n = 1 << level
        return cls(horizon * np.arange(n + 1) / n, dyadic_level=level)

    @classmethod
    def uniform(cls, n_steps: int, horizon: float = 1.0) -> "TimeGrid":
        if n_steps < 1:
            raise UsageError("need at least one step")
        level = n_steps.bit_length() - 1
        dyadic = (1 << level) == n_steps
        return cls(horizon * np.arange(n_steps + 1) / n_steps,
                   dyadic_level=level if dyadic else None)

    def uniform_step(self) -> float:
        """Grid spacing; raises if the grid is not uniform."""
        d = self.steps
        if not np.allclose(d, d[0], rtol=1e-12, atol=0.0):
            raise UsageError("grid is not uniform")
        return float(d[0])

    def __len__(self) -> int:
        return self.points.size


@dataclass(frozen=True)
class SamplePath:
    """One realized trajectory on a grid."""

    grid: TimeGrid
    values: np.ndarray
    kind: str = "fbm"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if self.kind not in PATH_KINDS:
            raise UsageError(f"unknown path kind {self.kind!r}")
        if vals.shape != self.grid.points.shape:
            raise UsageError("values and grid length differ")
        if self.kind in ("fbm", "bm", "mixed") and vals[0] != 0.0:
            raise UsageError("noise paths must start at 0")
        if self.kind == "price" and vals[0] <= 0.0:
            raise UsageError("price paths must start at s0 > 0")


class PathBatch:
    """A stack of sample paths sharing one grid (values shape ``(n_paths, len(grid))``)."""

    def __init__(self, grid: TimeGrid, values: np.ndarray, kind: str = "fbm"):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(grid):
            raise UsageError("batch values must have shape (n_paths, len(grid))")
        self.grid = grid
        self.values = values
        self.kind = kind

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, i: int) -> SamplePath:
        return SamplePath(self.grid, self.values[i], self.kind)

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def subsample_indices(grid: TimeGrid, level: int) -> np.ndarray:
    """Indices realizing the level-``level`` dyadic grid inside a finer dyadic grid."""
    if grid.dyadic_level is None:
        raise UsageError("path is not on a dyadic grid")
    if level > grid.dyadic_level:
        raise UsageError(f"level {level} exceeds stored level {grid.dyadic_level}")
    stride = 1 << (grid.dyadic_level - level)
    return np.arange(0, len(grid), stride)


def subsample(path: SamplePath, level: int) -> SamplePath:
    """The same realization observed on a coarser dyadic grid (never re-simulated)."""
    idx = subsample_indices(path.grid, level)
    coarse = TimeGrid(path.grid.points[idx], dyadic_level=level)
    return SamplePath(coarse, path.values[idx], path.kind)
