"""Fractional binary trees: kernel machinery, disturbed walks, Wick algebra.

A fractional walk is built from i.i.d. signs through the Volterra kernel

    k(t, s) = c * s^{1/2-H} * int_s^t u^{H-1/2} (u-s)^{H-3/2} du,   0 < s < t,

which maps Brownian increments into fractional ones (h > 1/2 throughout;
h = 1/2 degenerates to the plain random walk with an identity kernel).  The
normalization c is calibrated against the variance identity
``int_0^1 k(1, s)^2 ds = 1`` and cross-checked against the Molchan-Golosov
closed form; both are exposed because printed versions of the constant are
unreliable.

Self-similarity gives ``k(j/n, i/n) = n^{1/2-H} k(j, i)``, so all step
weights of the regularized walk reduce to n-independent unit-cell integrals

    A0[j]   = int_{j-1}^{j} k(j, v) dv / c          (own-sign weight)
    E[l, i] = int_{i-1}^{i} (k(l+1, v) - k(l, v)) dv / c   (memory weight)

and the walk increment at step j is
``dB_j = n^{-H} c (A0[j] xi_j + sum_{i<j} E[j-1, i] xi_i)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma as _gamma

from . import rng as _rng
from .errors import UsageError
from .paths import PathBatch, TimeGrid

WALK_CAP = 1 << 16          # path sampling
EXPANSION_CAP = 24          # Walsh expansions (dense bitmask arrays)
EXHAUSTIVE_CAP = 20         # full 2^n leaf evaluation


def _gl(order: int, cache={}):
    """Gauss-Legendre nodes/weights on [0, 1]."""
    if order not in cache:
        x, w = np.polynomial.legendre.leggauss(order)
        cache[order] = ((x + 1) / 2, w / 2)
    return cache[order]


# --------------------------------------------------------------------------
# continuous kernel
# --------------------------------------------------------------------------

def _check_kernel_hurst(h: float) -> float:
    h = float(h)
    if h == 0.5:
        return h
    if not 0.5 < h < 1.0:
        raise UsageError("the kernel construction needs h in [1/2, 1)")
    return h


def _inner_integral_raw(t, s, h: float, order: int = 64):
    """int_s^t u^{h-1/2} (u-s)^{h-3/2} du, vectorized over (t, s).

    The endpoint singularity at u = s is removed by splitting off the exact
    integral of s^{h-1/2} (u-s)^{h-3/2} and substituting u = s + (t-s) z^2
    in the remainder.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    analytic = s ** (h - 0.5) * (t - s) ** (h - 0.5) / (h - 0.5)
    z, w = _gl(order)
    u = s[..., None] + (t - s)[..., None] * z**2
    bracket = u ** (h - 0.5) - s[..., None] ** (h - 0.5)
    rem = 2 * (t - s) ** (h - 0.5) * np.sum(w * bracket * z ** (2 * h - 2), axis=-1)
    return analytic + rem


def kernel_k_raw(t, s, h: float):
    """Unnormalized kernel s^{1/2-h} * inner integral (zero for s >= t)."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise UsageError("kernel needs s > 0")
    out = np.zeros(np.broadcast(t, s).shape)
    live = s < t
    if np.any(live):
        tt, ss = np.broadcast_arrays(t, s)
        out[live] = ss[live] ** (0.5 - h) * _inner_integral_raw(tt[live], ss[live], h)
    return out if out.ndim else float(out)


def calibration_constant(h: float) -> float:
    """c fixed by the variance identity int_0^1 (c k_raw(1, s))^2 ds = 1."""
    h = _check_kernel_hurst(h)
    if h == 0.5:
        return 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        total, _ = quad(lambda s: float(kernel_k_raw(1.0, s, h)) ** 2, 0.0, 1.0,
                        limit=400)
    return 1.0 / np.sqrt(total)


def molchan_golosov_constant(h: float) -> float:
    """Closed-form normalization (h - 1/2) sqrt(2h G(3/2-h) / (G(h+1/2) G(2-2h)))."""
    h = _check_kernel_hurst(h)
    if h == 0.5:
        return 1.0
    return (h - 0.5) * np.sqrt(2 * h * _gamma(1.5 - h)
                               / (_gamma(h + 0.5) * _gamma(2 - 2 * h)))


def kernel_k(t, s, h: float):
    """Normalized kernel; 0 for s >= t by convention, error for s <= 0."""
    h = _check_kernel_hurst(h)
    if h == 0.5:
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr <= 0):
            raise UsageError("kernel needs s > 0")
        out = (s_arr < np.asarray(t, dtype=float)).astype(float)
        return out if out.ndim else float(out)
    return _tables(h).c * kernel_k_raw(t, s, h)


def regularized_kernel(n: int, t, s, h: float):
    """Local average k^n(t, s) = n int_{s-1/n}^{s} k(floor(nt)/n, u) du.

    Piecewise constant in t at resolution 1/n; 0 for t < 1/n.  The averaging
    cell is clipped at 0 where s < 1/n (the kernel is undefined at u <= 0 and
    the first discrete cell is (0, 1/n]).
    """
    h = _check_kernel_hurst(h)
    if n < 1:
        raise UsageError("n must be positive")
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise UsageError("kernel needs s > 0")
    # guard against j/n * n rounding just below the integer
    t_snap = np.floor(n * t + 1e-9) / n
    if h == 0.5:
        # identity kernel: average of 1_{u < t} over the clipped cell
        out = np.clip(n * (np.minimum(s, t_snap) - np.maximum(s - 1.0 / n, 0.0)),
                      0.0, 1.0)
        return out if out.ndim else float(out)
    lo = np.maximum(s - 1.0 / n, 0.0)
    x, w = _gl(48)
    tt, ss, ll = np.broadcast_arrays(t_snap, s, lo)
    out = np.zeros(tt.shape)
    flat_t, flat_s, flat_l = tt.ravel(), ss.ravel(), ll.ravel()
    vals = np.zeros(flat_t.size)
    for idx in range(flat_t.size):
        a, b, tcell = flat_l[idx], flat_s[idx], flat_t[idx]
        if tcell <= a:
            continue
        if a == 0.0:
            # substitute u = b y^p to absorb the u^{1/2-h} singularity
            p = 1.0 / (1.5 - h)
            u = b * x**p
            u = np.minimum(u, np.nextafter(b, 0))
            keep = u < tcell
            if not np.any(keep):
                continue
            f = kernel_k_raw(np.full(keep.sum(), tcell), u[keep], h)
            vals[idx] = b ** (1.5 - h) * p * np.sum(
                w[keep] * f * u[keep] ** (h - 0.5))
        else:
            u = a + (np.minimum(b, tcell) - a) * x
            f = kernel_k_raw(np.full(u.size, tcell), u, h)
            vals[idx] = (np.minimum(b, tcell) - a) * np.sum(w * f)
    out = vals.reshape(tt.shape) * n * _tables(h).c
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# unit-cell weight tables
# --------------------------------------------------------------------------

def _v_rule(i_arr: np.ndarray, order: int, h: float):
    """Nodes/weights for int_{i-1}^{i} v^{1/2-h} f(v) dv per cell.

    Returns (nodes, weights) of shape (m, order); the v^{1/2-h} factor is
    folded into the weights (exactly, via a power substitution, for the first
    cell that touches 0).
    """
    x, w = _gl(order)
    i_arr = np.asarray(i_arr)
    nodes = (i_arr[:, None] - 1.0) + x[None, :]
    weights = np.where(nodes > 0, nodes, 1.0) ** (0.5 - h) * w[None, :]
    first = i_arr == 1
    if np.any(first):
        p = 1.0 / (1.5 - h)
        nodes_first = x ** p
        weights_first = p * w
        nodes[first] = nodes_first[None, :]
        weights[first] = weights_first[None, :]
    return nodes, weights


def _e_cells_offdiag(h: float, i_arr: np.ndarray, l_arr: np.ndarray,
                     order_v: int, order_w: int) -> np.ndarray:
    """E cells with gap l - i >= 1: smooth tensor Gauss-Legendre."""
    vn, vw = _v_rule(i_arr, order_v, h)
    x, w = _gl(order_w)
    wn = l_arr[:, None] + x[None, :]
    out = np.zeros(i_arr.size)
    for q in range(order_v):
        v = vn[:, q]
        acc = np.zeros(i_arr.size)
        for r in range(order_w):
            ww = wn[:, r]
            acc += w[r] * ww ** (h - 0.5) * (ww - v) ** (h - 1.5)
        out += vw[:, q] * acc
    return out


def _e_cells_diag(h: float, i_arr: np.ndarray, order_v: int = 24,
                  order_w: int = 24) -> np.ndarray:
    """E cells with gap 0: exact split of the w-singularity at the corner.

    The product v^{1/2-h} v^{h-1/2} in the split part collapses to 1, leaving
    the same constant (2^{h+1/2} - 2) / ((h-1/2)(h+1/2)) for every cell.
    """
    const = (2.0 ** (h + 0.5) - 2.0) / ((h - 0.5) * (h + 0.5))
    vn, vw = _v_rule(i_arr, order_v, h)
    x, w = _gl(order_w)
    wn = i_arr[:, None] + x[None, :]
    rem = np.zeros(i_arr.size)
    for q in range(order_v):
        v = vn[:, q]
        acc = np.zeros(i_arr.size)
        for r in range(order_w):
            ww = wn[:, r]
            acc += w[r] * (ww ** (h - 0.5) - v ** (h - 0.5)) * (ww - v) ** (h - 1.5)
        rem += vw[:, q] * acc
    return const + rem


def _a0_cells(h: float, j_arr: np.ndarray, order_v: int = 24,
              order_z: int = 32) -> np.ndarray:
    """Diagonal weights A0[j] = int_{j-1}^{j} v^{1/2-h} I(j, v) dv (raw)."""
    const = 1.0 / ((h - 0.5) * (h + 0.5))
    vn, vw = _v_rule(j_arr, order_v, h)
    z, zw = _gl(order_z)
    rem = np.zeros(j_arr.size)
    for q in range(order_v):
        v = vn[:, q]
        span = j_arr - v
        u = v[:, None] + span[:, None] * z[None, :] ** 2
        bracket = u ** (h - 0.5) - v[:, None] ** (h - 0.5)
        inner = 2 * span ** (h - 0.5) * np.sum(zw * bracket * z ** (2 * h - 2), axis=1)
        rem += vw[:, q] * inner
    return const + rem


class _KernelTables:
    """Growable per-h cache of calibration constant and unit-cell weights."""

    def __init__(self, h: float):
        self.h = h
        self.c = calibration_constant(h)
        self.c_closed_form = molchan_golosov_constant(h)
        self.a0 = np.empty(0)        # a0[j-1] = A0[j]
        self.rows: list[np.ndarray] = []   # rows[l-1] = E[l, 1..l]

    def ensure_a0(self, depth: int) -> np.ndarray:
        if self.a0.size < depth:
            j = np.arange(self.a0.size + 1, depth + 1)
            self.a0 = np.concatenate([self.a0, _a0_cells(self.h, j.astype(float))])
        return self.a0

    def ensure_rows(self, max_l: int) -> None:
        start = len(self.rows) + 1
        if start > max_l:
            return
        pairs_i = []
        pairs_l = []
        for l in range(start, max_l + 1):
            pairs_i.append(np.arange(1, l + 1))
            pairs_l.append(np.full(l, l))
        i_all = np.concatenate(pairs_i).astype(float)
        l_all = np.concatenate(pairs_l).astype(float)
        vals = np.empty(i_all.size)
        gap = l_all - i_all
        diag = gap == 0
        if np.any(diag):
            vals[diag] = _e_cells_diag(self.h, i_all[diag])
        for sel, ov, ow in (((gap >= 1) & (gap <= 3), 16, 16),
                            ((gap >= 4) & (gap <= 15), 8, 8),
                            (gap >= 16, 6, 6)):
            if np.any(sel):
                vals[sel] = _e_cells_offdiag(self.h, i_all[sel], l_all[sel], ov, ow)
        offset = 0
        for l in range(start, max_l + 1):
            self.rows.append(vals[offset: offset + l])
            offset += l

    def e_row(self, l: int) -> np.ndarray:
        self.ensure_rows(l)
        return self.rows[l - 1]

    def row_sums(self, max_l: int) -> np.ndarray:
        self.ensure_rows(max_l)
        return np.array([row.sum() for row in self.rows[:max_l]])

    def weight_matrix(self, n: int) -> np.ndarray:
        """Lower-triangular A[j, i] (raw), A[j, i] = A0[i] + sum_{l=i}^{j-1} E[l, i]."""
        self.ensure_a0(n)
        self.ensure_rows(n - 1)
        e = np.zeros((n, n))
        for l in range(1, n):
            e[l - 1, :l] = self.rows[l - 1]
        a = np.tril(np.tile(self.a0[:n], (n, 1)))
        a[1:, :] += np.cumsum(e, axis=0)[:-1, :]
        return a

    def a_row(self, j: int) -> np.ndarray:
        """One row A[j, 1..j] without materializing the full matrix."""
        self.ensure_a0(j)
        self.ensure_rows(j - 1)
        acc = np.zeros(j)
        for l in range(1, j):
            acc[:l] += self.rows[l - 1]
        return self.a0[:j] + acc


_TABLE_CACHE: dict[float, _KernelTables] = {}


def _tables(h: float) -> _KernelTables:
    h = _check_kernel_hurst(h)
    if h not in _TABLE_CACHE:
        _TABLE_CACHE[h] = _KernelTables(h)
    return _TABLE_CACHE[h]


# --------------------------------------------------------------------------
# fractional walk sampling and arbitrage nodes
# --------------------------------------------------------------------------

@dataclass
class FractionalWalkBatch:
    """Sign paths with the induced fractional walk and its price tree path."""

    grid: TimeGrid
    signs: np.ndarray      # (n_paths, n) of +-1
    noise: PathBatch       # B^n including t=0
    prices: PathBatch      # S^n = prod(1 + dB), S_0 = 1


def walk_weight_matrix(n: int, h: float) -> np.ndarray:
    """Normalized weights: B^n_{j/n} = sum_i M[j-1, i-1] xi_i with M lower-triangular."""
    if h == 0.5:
        return np.tril(np.full((n, n), n ** (-0.5)))
    tab = _tables(h)
    return float(n) ** (-h) * tab.c * np.tril(tab.weight_matrix(n))


def sample_fractional_walk(n: int, h: float, seed: int, n_paths: int = 1) -> FractionalWalkBatch:
    """Binary disturbed walk B^n on {i/n} plus the price path prod(1 + dB).

    The walk converges weakly to fractional Brownian motion; memory enters
    through the E weights, so every increment depends on all past signs.
    Cost is O(n^2) unit-cell quadratures (cached per h); n is capped at 2^16.
    """
    h = _check_kernel_hurst(h)
    if n < 1 or n > WALK_CAP:
        raise UsageError(f"n must be in [1, {WALK_CAP}]")
    m = walk_weight_matrix(n, h)
    grid = TimeGrid.uniform(n, 1.0)
    signs = np.empty((n_paths, n))
    for i in range(n_paths):
        gen = _rng.stream(seed, _rng.DOMAIN_WALK, i)
        signs[i] = gen.integers(0, 2, n) * 2.0 - 1.0
    b = np.zeros((n_paths, n + 1))
    b[:, 1:] = signs @ m.T
    prices = np.ones((n_paths, n + 1))
    np.cumprod(1.0 + np.diff(b, axis=1), axis=1, out=prices[:, 1:])
    return FractionalWalkBatch(grid, signs,
                               PathBatch(grid, b, "fbm" if h != 0.5 else "bm"),
                               PathBatch(grid, prices, "price"))


@dataclass
class ArbitrageNode:
    """First depth at which the next move is up on both branches."""

    depth: int            # step index whose increment is positive either way
    margin: float         # min over branches of dB at that step
    prefix: np.ndarray    # the sign history of length depth - 1


def find_arbitrage_node(n: int, h: float,
                        prefix: np.ndarray | None = None) -> ArbitrageNode | None:
    """Scan a sign history for a riskless one-step node in the n-step tree.

    At depth d the increment is ``n^{-h} c (A0[d] xi_d + drift)`` with
    ``drift = sum_{i<d} E[d-1, i] xi_i``; when the accumulated drift exceeds
    the own-sign weight A0[d] the price rises no matter which branch is
    taken, and buying the stock for one step is a riskless profit.  Default
    history is all-up.  Absence is a valid result for small n: memory has not
    yet accumulated.
    """
    h = _check_kernel_hurst(h)
    if n < 1 or n > WALK_CAP:
        raise UsageError(f"n must be in [1, {WALK_CAP}]")
    if h == 0.5:
        return None  # memory weights vanish; drift is identically zero
    tab = _tables(h)
    a0 = tab.ensure_a0(n)
    scale = float(n) ** (-h) * tab.c
    if prefix is None:
        drift = np.concatenate([[0.0], tab.row_sums(n - 1)])  # all-up history
        margins = scale * (drift - a0[:n])
        hit = np.nonzero(margins > 0)[0]
        if hit.size == 0:
            return None
        d = int(hit[0]) + 1
        return ArbitrageNode(d, float(margins[hit[0]]), np.ones(d - 1))
    xi = np.asarray(prefix, dtype=float)
    if not np.all(np.abs(xi) == 1.0):
        raise UsageError("prefix must consist of signs +-1")
    for d in range(1, min(n, xi.size + 1) + 1):
        drift = float(tab.e_row(d - 1) @ xi[: d - 1]) if d > 1 else 0.0
        margin = scale * (drift - a0[d - 1])
        if margin > 0:
            return ArbitrageNode(d, margin, xi[: d - 1].copy())
    return None


def branch_profit_check(n: int, h: float, node: ArbitrageNode) -> tuple[float, float]:
    """Profit of buy-at-node, sell-next-step evaluated on both branches.

    Rebuilds the price along the prefix increment by increment (explicit sign
    vectors, no row-sum shortcut) and returns ``S_node * dB`` for the up and
    down branch; both must be positive at a genuine arbitrage node.
    """
    h = _check_kernel_hurst(h)
    tab = _tables(h)
    d = node.depth
    a0 = tab.ensure_a0(d)
    scale = float(n) ** (-h) * tab.c
    xi = np.asarray(node.prefix, dtype=float)
    s_node = 1.0
    for k in range(1, d):
        hist = float(tab.e_row(k - 1) @ xi[: k - 1]) if k > 1 else 0.0
        s_node *= 1.0 + scale * (a0[k - 1] * xi[k - 1] + hist)
    drift = float(tab.e_row(d - 1) @ xi[: d - 1]) if d > 1 else 0.0
    up = s_node * scale * (drift + a0[d - 1])
    down = s_node * scale * (drift - a0[d - 1])
    return up, down


# --------------------------------------------------------------------------
# Walsh expansions and the discrete Wick product
# --------------------------------------------------------------------------

class WalshExpansion:
    """Function of n i.i.d. signs as coefficients over subset bitmasks.

    ``coeffs[mask]`` multiplies the monomial prod_{i in mask} xi_{i+1}; the
    empty set (mask 0) is the expectation.  Dense storage caps n at 24.
    """

    def __init__(self, n_vars: int, coeffs: np.ndarray | None = None):
        if not 0 <= n_vars <= EXPANSION_CAP:
            raise UsageError(f"expansions support at most {EXPANSION_CAP} variables")
        self.n_vars = n_vars
        size = 1 << n_vars
        if coeffs is None:
            self.coeffs = np.zeros(size)
        else:
            coeffs = np.asarray(coeffs, dtype=float)
            if coeffs.shape != (size,):
                raise UsageError("coefficient array must have length 2^n_vars")
            self.coeffs = coeffs

    @classmethod
    def from_dict(cls, n_vars: int, entries: dict[int, float]) -> "WalshExpansion":
        out = cls(n_vars)
        for mask, coef in entries.items():
            if mask < 0 or mask >= (1 << n_vars):
                raise UsageError(f"mask {mask} outside the variable range")
            out.coeffs[mask] = coef
        return out

    def coeff(self, mask: int) -> float:
        return float(self.coeffs[mask])

    @property
    def expectation(self) -> float:
        return float(self.coeffs[0])

    def wick(self, other: "WalshExpansion") -> "WalshExpansion":
        return wick_product(self, other)

    def evaluate_all(self) -> np.ndarray:
        """Values at all 2^n sign paths; bit i set in the path index means
        xi_{i+1} = -1.  Fast Walsh-Hadamard transform, O(n 2^n)."""
        return walsh_evaluate(self.coeffs)

    def __eq__(self, other):
        return (isinstance(other, WalshExpansion) and self.n_vars == other.n_vars
                and np.array_equal(self.coeffs, other.coeffs))


def walsh_evaluate(coeffs: np.ndarray) -> np.ndarray:
    vals = np.asarray(coeffs, dtype=float).copy()
    size = vals.size
    half = 1
    while half < size:
        vals = vals.reshape(-1, 2 * half)
        plus = vals[:, :half].copy()
        minus = vals[:, half: 2 * half].copy()
        vals[:, :half] = plus + minus
        vals[:, half: 2 * half] = plus - minus
        vals = vals.reshape(-1)
        half *= 2
    return vals


def wick_product(a: WalshExpansion, b: WalshExpansion) -> WalshExpansion:
    """Disjoint-support product: xi_A o xi_B = xi_{A u B} if A n B is empty,
    else 0, extended bilinearly."""
    if a.n_vars != b.n_vars:
        raise UsageError("expansions must share the variable count")
    # iterate over the sparser operand's support
    if np.count_nonzero(a.coeffs) > np.count_nonzero(b.coeffs):
        a, b = b, a
    size = a.coeffs.size
    idx = np.arange(size)
    out = np.zeros(size)
    for mask in np.nonzero(a.coeffs)[0]:
        coef = a.coeffs[mask]
        free = (idx & int(mask)) == 0
        out[idx[free] | int(mask)] += coef * b.coeffs[free]
    return WalshExpansion(a.n_vars, out)


# --------------------------------------------------------------------------
# Wick-fractional binary tree
# --------------------------------------------------------------------------

def _step_factor_weights(n: int, h: float, j: int) -> np.ndarray:
    """Weights (w_1 .. w_j) of the affine factor 1 + dB_j in xi_1 .. xi_j."""
    tab = _tables(h)
    scale = float(n) ** (-h) * tab.c
    w = np.empty(j)
    if j > 1:
        w[: j - 1] = scale * tab.e_row(j - 1)
    w[j - 1] = scale * tab.ensure_a0(j)[j - 1]
    return w


def wick_tree_expansion(n: int, h: float) -> WalshExpansion:
    """Walsh expansion of the terminal Wick product prod^o (1 + dB_j).

    The empty-set coefficient stays exactly 1 through every factor (each
    factor has unit constant term and the Wick product never maps nonempty
    supports to the empty set), so the tree is unbiased by construction.
    """
    h = _check_kernel_hurst(h)
    if h == 0.5:
        raise UsageError("the Wick tree is built for h > 1/2")
    if n > EXPANSION_CAP:
        raise UsageError(f"expansion depth capped at {EXPANSION_CAP}")
    size = 1 << n
    idx = np.arange(size)
    coeffs = np.zeros(size)
    coeffs[0] = 1.0
    for j in range(1, n + 1):
        w = _step_factor_weights(n, h, j)
        new = coeffs.copy()
        for i in range(1, j + 1):
            bit = 1 << (i - 1)
            free = (idx & bit) == 0
            new[idx[free] | bit] += coeffs[free] * w[i - 1]
        coeffs = new
    return WalshExpansion(n, coeffs)


def wick_tree_terminal(n: int, h: float) -> tuple[WalshExpansion, np.ndarray]:
    """Terminal expansion plus its value at every sign path (n <= 20)."""
    if n > EXHAUSTIVE_CAP:
        raise UsageError(f"exhaustive leaf evaluation capped at {EXHAUSTIVE_CAP}")
    expansion = wick_tree_expansion(n, h)
    return expansion, expansion.evaluate_all()


def wick_tree_levels(n: int, h: float) -> list[np.ndarray]:
    """Node values of the Wick tree at every depth 0..n (exhaustive)."""
    if n > EXHAUSTIVE_CAP:
        raise UsageError(f"exhaustive evaluation capped at {EXHAUSTIVE_CAP}")
    h = _check_kernel_hurst(h)
    size = 1 << n
    idx = np.arange(size)
    coeffs = np.zeros(size)
    coeffs[0] = 1.0
    levels = [np.array([1.0])]
    for j in range(1, n + 1):
        w = _step_factor_weights(n, h, j)
        new = coeffs.copy()
        for i in range(1, j + 1):
            bit = 1 << (i - 1)
            free = (idx & bit) == 0
            new[idx[free] | bit] += coeffs[free] * w[i - 1]
        coeffs = new
        levels.append(walsh_evaluate(coeffs[: 1 << j]))
    return levels


def price_tree_levels(n: int, h: float) -> list[np.ndarray]:
    """Node values of the plain fractional price tree at every depth 0..n.

    Level d holds 2^d values indexed by the sign prefix bitmask (bit i set
    means xi_{i+1} = -1), each the product of (1 + dB) along the prefix.
    """
    if n > EXHAUSTIVE_CAP:
        raise UsageError(f"exhaustive evaluation capped at {EXHAUSTIVE_CAP}")
    m = walk_weight_matrix(n, h)
    levels = [np.array([1.0])]
    prev_b = np.array([0.0])
    prev_s = np.array([1.0])
    for d in range(1, n + 1):
        paths = np.arange(1 << d)
        b = np.zeros(1 << d)
        for i in range(d):
            b += m[d - 1, i] * (1.0 - 2.0 * ((paths >> i) & 1))
        parent = paths & ((1 << (d - 1)) - 1)
        s = prev_s[parent] * (1.0 + (b - prev_b[parent]))
        levels.append(s)
        prev_b, prev_s = b, s
    return levels


def tree_arbitrage_node_exhaustive(levels: list[np.ndarray]) -> tuple[int, int] | None:
    """First (depth, prefix bitmask) whose both children strictly exceed it."""
    for d in range(len(levels) - 1):
        parents = levels[d]
        children = levels[d + 1]
        up = children[: parents.size]          # next sign +1 (bit clear)
        down = children[parents.size:]         # next sign -1 (bit set)
        gain = np.minimum(up, down) - parents
        hit = np.nonzero(gain > 0)[0]
        if hit.size:
            return d, int(hit[0])
    return None


def dump_tree_csv(levels: list[np.ndarray], handle) -> None:
    """Write (depth, path bitmask, value) rows for every node."""
    handle.write("depth,path,value\r\n")
    for depth, values in enumerate(levels):
        for mask, val in enumerate(values):
            handle.write(f"{depth},{mask},{val!r}\r\n")
