"""Forward integrals, pathwise quadratic variation, and an Ito-formula check.

Everything here is defined along dyadic partitions.  Coarser levels always
subsample one fixed fine realization; nothing is ever re-simulated, because
the limits being probed are statements about one path observed at different
resolutions.
"""
from __future__ import annotations

import numpy as np

from .errors import UsageError
from .paths import SamplePath, TimeGrid, subsample, subsample_indices


def forward_integral(integrand: np.ndarray, integrator: np.ndarray,
                     up_to: int | None = None) -> float:
    """Left-endpoint Riemann sum  sum_i Y_{t_i} (X_{t_{i+1}} - X_{t_i}).

    ``integrand`` and ``integrator`` share a grid; the value at index i is
    held on (t_i, t_{i+1}].  ``up_to`` is the index of the upper time limit
    (defaults to the last grid point).  At the horizon the sum is the full
    grid sum; use :func:`last_increment_share` to inspect how much of it is
    carried by the final increment.
    """
    y = np.asarray(integrand, dtype=float)
    x = np.asarray(integrator, dtype=float)
    if y.shape != x.shape:
        raise UsageError("integrand and integrator must share a grid")
    stop = x.size - 1 if up_to is None else int(up_to)
    if not 0 <= stop < x.size:
        raise UsageError("cutoff index outside the grid")
    return float(np.dot(y[:stop], np.diff(x[: stop + 1])))


def forward_integral_path(integrand: np.ndarray, integrator: np.ndarray) -> np.ndarray:
    """Running forward integral at every grid point (index 0 is 0)."""
    y = np.asarray(integrand, dtype=float)
    x = np.asarray(integrator, dtype=float)
    if y.shape != x.shape:
        raise UsageError("integrand and integrator must share a grid")
    out = np.empty_like(x)
    out[0] = 0.0
    np.cumsum(y[:-1] * np.diff(x), out=out[1:])
    return out


def last_increment_share(integrand: np.ndarray, integrator: np.ndarray) -> float:
    """|last summand| / max(|integral|, tiny); flags improper behaviour at T."""
    y = np.asarray(integrand, dtype=float)
    x = np.asarray(integrator, dtype=float)
    total = forward_integral(y, x)
    last = y[-2] * (x[-1] - x[-2])
    return abs(last) / max(abs(total), 1e-300)


def quadratic_variation(path: SamplePath, level: int) -> SamplePath:
    """Running sums of squared increments observed at dyadic level ``level``.

    Returns a path on the level grid whose value at t is
    ``sum_{t_{i+1} <= t} (X_{t_{i+1}} - X_{t_i})^2``.
    """
    coarse = subsample(path, level)
    qv = np.empty(len(coarse.grid))
    qv[0] = 0.0
    np.cumsum(np.diff(coarse.values) ** 2, out=qv[1:])
    return SamplePath(coarse.grid, qv, path.kind if path.kind != "price" else "fbm")


def quadratic_variation_total(values: np.ndarray) -> float:
    """Total sum of squared increments of a value array (no subsampling)."""
    return float(np.sum(np.diff(np.asarray(values, dtype=float)) ** 2))


def trapezoid_spot_variance(price_values: np.ndarray, grid: TimeGrid,
                            sigma: float) -> float:
    """Trapezoid rule for integral of sigma^2 S_t^2 dt on the same realization.

    This is the classical quadratic variation of a diffusion with volatility
    ``sigma`` and serves as the oracle for the Brownian-regime checks.
    """
    s = np.asarray(price_values, dtype=float)
    return float(np.trapz(sigma**2 * s**2, grid.points))


def finite_difference_derivatives(f, scale: float = 1.0):
    """Build (df/dt, df/dx, d2f/dx2) by central differences, step 1e-6 * scale.

    Test fallback for payoffs supplied without analytic derivatives.
    """
    eps = 1e-6 * scale

    def dft(t, x):
        return (f(t + eps, x) - f(t - eps, x)) / (2 * eps)

    def dfx(t, x):
        return (f(t, x + eps) - f(t, x - eps)) / (2 * eps)

    def dfxx(t, x):
        return (f(t, x + eps) - 2 * f(t, x) + f(t, x - eps)) / eps**2

    return dft, dfx, dfxx


def ito_residual(f, dft, dfx, dfxx, path: SamplePath, level: int,
                 qv_increments: np.ndarray | None = None) -> float:
    """Absolute defect of the change-of-variables formula at one dyadic level.

    Computes ``|f(T, X_T) - f(0, X_0) - sum dft dt - sum dfx dX
    - 1/2 sum dfxx dQV|`` with left-endpoint sums.  By default the quadratic
    variation increments are the squared path increments at that level; pass
    ``qv_increments`` to supply an exact bracket (e.g. dt for Brownian paths).
    """
    coarse = subsample(path, level)
    t = coarse.grid.points
    x = coarse.values
    dt = np.diff(t)
    dx = np.diff(x)
    dqv = dx**2 if qv_increments is None else np.asarray(qv_increments, dtype=float)
    if dqv.shape != dx.shape:
        raise UsageError("qv_increments must have one entry per grid step")
    total = (f(t[-1], x[-1]) - f(t[0], x[0])
             - np.sum(dft(t[:-1], x[:-1]) * dt)
             - np.sum(dfx(t[:-1], x[:-1]) * dx)
             - 0.5 * np.sum(dfxx(t[:-1], x[:-1]) * dqv))
    return abs(float(total))
