"""Fractional Brownian motion: covariance and exact path samplers.

Two samplers are provided.  The Cholesky sampler draws from the exact joint
Gaussian law on an arbitrary grid in O(n^3); it is the oracle.  The circulant
sampler (Davies-Harte / Dieker) embeds the stationary increment covariance in
a circulant matrix and runs in O(n log n) on dyadic grids.
"""
from __future__ import annotations

import warnings

import numpy as np

from . import rng as _rng
from .errors import NumericalError, UsageError
from .parallel import for_each_index
from .paths import PathBatch, TimeGrid

CHOLESKY_GRID_CAP = 1 << 12
CIRCULANT_LEVEL_CAP = 22
# relative negative eigenvalue mass tolerated before the embedding is rejected
CIRCULANT_CLIP_TOL = 1e-8
_JITTER_LADDER = (1e-14, 1e-13, 1e-12, 1e-11, 1e-10)


class EigenvalueClipWarning(UserWarning):
    """Tiny negative circulant eigenvalues were clipped to zero."""


def check_hurst(h: float) -> float:
    h = float(h)
    if not 0.0 < h < 1.0:
        raise UsageError(f"Hurst index must lie in (0, 1), got {h}")
    return h


def fbm_covariance(s, t, h: float):
    """Cov[B_s, B_t] = (s^{2H} + t^{2H} - |t - s|^{2H}) / 2.

    Accepts scalars or arrays; symmetric in (s, t).  ``h = 0.5`` reduces to
    ``min(s, t)``, the Brownian case.
    """
    h = check_hurst(h)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise UsageError("covariance is defined for nonnegative times only")
    out = 0.5 * (s ** (2 * h) + t ** (2 * h) - np.abs(t - s) ** (2 * h))
    return float(out) if out.ndim == 0 else out


def build_covariance_matrix(grid: TimeGrid, h: float) -> np.ndarray:
    """Covariance matrix over the grid points t_1..t_n (t_0 = 0 is excluded).

    The time origin carries a degenerate zero row and would break the
    Cholesky factorization; samplers prepend the exact 0 instead.
    """
    t = grid.points[1:]
    return fbm_covariance(t[:, None], t[None, :], h)


def _cholesky_factor(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, escalating a relative jitter before failing."""
    trace = float(np.trace(cov))
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    for rel in _JITTER_LADDER:
        try:
            return np.linalg.cholesky(cov + rel * trace * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            continue
    lam_min = float(np.linalg.eigvalsh(cov)[0])
    raise NumericalError(
        f"covariance not factorizable with jitter up to {_JITTER_LADDER[-1]:.0e} * trace; "
        f"smallest eigenvalue ~ {lam_min:.3e}"
    )


def sample_fbm_cholesky(grid: TimeGrid, h: float, seed: int, n_paths: int,
                        threads: int = 1) -> PathBatch:
    """Exact fBm draws on an arbitrary grid via Cholesky factorization.

    Deterministic given (seed, grid, h): path ``i`` always consumes stream
    ``(seed, DOMAIN_FBM, i)`` regardless of ``n_paths``.

    Parameters
    ----------
    grid : TimeGrid
        At most ``2**12`` points (the factorization is O(n^3)).
    h : float
        Hurst index in (0, 1).
    seed, n_paths : int
        Stream seed and number of independent paths.
    """
    h = check_hurst(h)
    if len(grid) > CHOLESKY_GRID_CAP:
        raise UsageError(f"grid length {len(grid)} exceeds Cholesky cap {CHOLESKY_GRID_CAP}")
    factor = _cholesky_factor(build_covariance_matrix(grid, h))
    n = factor.shape[0]
    values = np.zeros((n_paths, len(grid)))

    def fill(i: int) -> None:
        z = _rng.normals(seed, _rng.DOMAIN_FBM, i, n)
        values[i, 1:] = factor @ z

    for_each_index(fill, n_paths, threads)
    return PathBatch(grid, values, "bm" if h == 0.5 else "fbm")


def _fgn_autocovariance(level: int, horizon: float, h: float) -> np.ndarray:
    """Autocovariance gamma(0..N) of the increment sequence at level ``level``."""
    n = 1 << level
    dt = horizon / n
    k = np.arange(n + 1, dtype=float)
    gamma = 0.5 * ((k + 1) ** (2 * h) - 2 * k ** (2 * h) + np.abs(k - 1) ** (2 * h))
    return gamma * dt ** (2 * h)


def circulant_eigenvalues(level: int, horizon: float, h: float) -> np.ndarray:
    """Eigenvalues of the circulant embedding; clips tiny negative mass.

    Relative negative mass below ``CIRCULANT_CLIP_TOL`` is clipped to zero with
    a recorded :class:`EigenvalueClipWarning`; anything larger is an error.
    """
    gamma = _fgn_autocovariance(level, horizon, h)
    n = 1 << level
    row = np.concatenate([gamma[:n], [gamma[n]], gamma[1:n][::-1]])
    lam = np.fft.fft(row).real
    neg = lam[lam < 0]
    if neg.size:
        rel = -neg.sum() / np.abs(lam).sum()
        if rel >= CIRCULANT_CLIP_TOL:
            raise NumericalError(
                f"circulant embedding has relative negative eigenvalue mass {rel:.3e}"
            )
        warnings.warn(
            f"clipped negative circulant eigenvalue mass (relative {rel:.3e})",
            EigenvalueClipWarning,
            stacklevel=2,
        )
        lam = np.clip(lam, 0.0, None)
    return lam


def _fgn_from_stream(gen: np.random.Generator, lam: np.ndarray, n: int) -> np.ndarray:
    """One fractional Gaussian noise row from the eigenvalues ``lam`` (length 2n)."""
    m = 2 * n
    z = np.empty(m, dtype=complex)
    z[0] = gen.standard_normal()
    z[n] = gen.standard_normal()
    u = gen.standard_normal(n - 1)
    v = gen.standard_normal(n - 1)
    z[1:n] = (u + 1j * v) / np.sqrt(2.0)
    z[n + 1:] = np.conj(z[1:n][::-1])
    return (np.fft.ifft(np.sqrt(lam) * z).real[:n]) * np.sqrt(m)


def sample_fbm_circulant(level: int, horizon: float, h: float, seed: int,
                         n_paths: int, threads: int = 1) -> PathBatch:
    """fBm on the dyadic grid of ``2**level`` steps via circulant embedding.

    Same law as :func:`sample_fbm_cholesky` up to floating error, O(n log n)
    per path.  Increments are stationary, which is what makes the embedding
    of the increment covariance circulant.
    """
    h = check_hurst(h)
    if level > CIRCULANT_LEVEL_CAP:
        raise UsageError(f"level {level} exceeds circulant cap {CIRCULANT_LEVEL_CAP}")
    grid = TimeGrid.dyadic(level, horizon)
    lam = circulant_eigenvalues(level, horizon, h)
    n = 1 << level
    values = np.zeros((n_paths, n + 1))

    def fill(i: int) -> None:
        gen = _rng.stream(seed, _rng.DOMAIN_CIRCULANT, i)
        values[i, 1:] = np.cumsum(_fgn_from_stream(gen, lam, n))

    for_each_index(fill, n_paths, threads)
    return PathBatch(grid, values, "bm" if h == 0.5 else "fbm")


def sample_bm(grid: TimeGrid, seed: int, n_paths: int, threads: int = 1) -> PathBatch:
    """Standard Brownian motion on an arbitrary grid (independent increments)."""
    sqdt = np.sqrt(grid.steps)
    values = np.zeros((n_paths, len(grid)))

    def fill(i: int) -> None:
        z = _rng.normals(seed, _rng.DOMAIN_BM, i, sqdt.size)
        values[i, 1:] = np.cumsum(sqdt * z)

    for_each_index(fill, n_paths, threads)
    return PathBatch(grid, values, "bm")


class MixedBatch(PathBatch):
    """W + B with the independent components kept retrievable."""

    def __init__(self, brownian: PathBatch, fractional: PathBatch):
        super().__init__(brownian.grid, brownian.values + fractional.values, "mixed")
        self.brownian = brownian
        self.fractional = fractional


def sample_mixed(grid: TimeGrid, h: float, seed: int, n_paths: int,
                 threads: int = 1) -> MixedBatch:
    """Mixed noise W + B from independent Brownian and fractional streams.

    The two components live in separate stream domains, so the Brownian part
    matches what :func:`sample_bm` returns for the same seed.
    """
    h = check_hurst(h)
    w = sample_bm(grid, seed, n_paths, threads)
    b = sample_fbm_for_grid(grid, h, seed, n_paths, threads)
    return MixedBatch(w, b)


def sample_fbm_for_grid(grid: TimeGrid, h: float, seed: int, n_paths: int,
                        threads: int = 1) -> PathBatch:
    """Dispatch to the fast sampler on dyadic grids, else to the exact one."""
    if grid.dyadic_level is not None and grid.dyadic_level <= CIRCULANT_LEVEL_CAP:
        if len(grid) > CHOLESKY_GRID_CAP or grid.dyadic_level >= 8:
            return sample_fbm_circulant(grid.dyadic_level, grid.horizon, h, seed,
                                        n_paths, threads)
    return sample_fbm_cholesky(grid, h, seed, n_paths, threads)
