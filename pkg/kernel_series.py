"""Iterated space-time convolution kernels L_n and K(t,x;lambda), their closed forms
and the moment bounds built on them.

Layers are stored as averages over time cells [(i-1)h, ih] and space bins of
width dx. Time convolution of two cell-averaged functions uses

    (f * g)_i = h sum_{j=1..i} g_j (f_{i-j} + f_{i-j+1}) / 2,   f_0 = 0,

which never samples the s = 0 singularity of G^2.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.signal import fftconvolve

from errors import NoConvergence, OutOfRange, SingularityBlowup
from stable_green import (
    StableParams,
    green_values,
    j0_profile,
    lambda_const,
    squared_green_mass,
)

logger = logging.getLogger(__name__)

max_series_terms = 200
_gauss_nodes, _gauss_weights = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class RhoSpec:
    """Lipschitz diffusion coefficient rho.

    kinds: linear (lam*u), sin (lam*sin u), affine (lam*u + shift) and zero
    (noise switched off, the only kind with lip = 0).
    """

    kind: str = "linear"
    lam: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "sin", "affine", "zero"):
            raise OutOfRange(f"unknown rho kind {self.kind!r}")
        if self.kind != "zero" and self.lam == 0:
            raise OutOfRange("lam must be nonzero; use kind='zero' to switch the noise off")

    def __call__(self, u):
        if self.kind == "linear":
            return self.lam * u
        if self.kind == "sin":
            return self.lam * np.sin(u)
        if self.kind == "affine":
            return self.lam * u + self.shift
        return np.zeros_like(u)

    @property
    def lip(self):
        return 0.0 if self.kind == "zero" else abs(self.lam)

    @property
    def growth(self):
        """(Lip_rho, vartheta) with |rho(x)|^2 <= Lip_rho^2 (vartheta^2 + x^2)"""
        if self.kind == "zero":
            return 0.0, 0.0
        if self.kind == "affine" and self.shift != 0:
            return math.sqrt(2) * abs(self.lam), abs(self.shift) / abs(self.lam)
        return abs(self.lam), 0.0

    @property
    def rho_zero(self):
        return self.shift if self.kind == "affine" else 0.0


def make_rho(kind="linear", lam=1.0, shift=0.0):
    return RhoSpec(kind, float(lam), float(shift))


@dataclass(frozen=True)
class KernelGrid:
    """[0,T] in n_t cells of width h; [-L,L] in n_x bins centred on the nodes (n_x odd)"""

    T: float
    L: float
    n_t: int
    n_x: int

    def __post_init__(self):
        if self.T <= 0 or self.L <= 0 or self.n_t < 2 or self.n_x < 3:
            raise OutOfRange("kernel grid needs T, L > 0, n_t >= 2 and n_x >= 3")
        if self.n_x % 2 == 0:
            raise OutOfRange("n_x must be odd so that x=0 is a node")

    @property
    def h(self):
        return self.T / self.n_t

    @property
    def dx(self):
        return 2 * self.L / (self.n_x - 1)

    @property
    def ts(self):
        return (np.arange(self.n_t) + 0.5) * self.h

    @property
    def xs(self):
        return np.linspace(-self.L, self.L, self.n_x)

    def refined(self):
        return KernelGrid(self.T, self.L, 2 * self.n_t, 2 * self.n_x - 1)


@dataclass(frozen=True)
class KernelTable:
    lam: float
    params: StableParams
    grid: KernelGrid
    values: np.ndarray
    n_terms: int
    series_tail_bound: float = 0.0
    layer: int | None = None

    @property
    def ts(self):
        return self.grid.ts

    @property
    def xs(self):
        return self.grid.xs

    def at(self, t, x):
        """Bilinear lookup on the (cell-midpoint, node) lattice"""
        ts, xs = self.ts, self.xs
        it = np.clip(np.searchsorted(ts, t) - 1, 0, ts.size - 2)
        wt = np.clip((t - ts[it]) / (ts[it + 1] - ts[it]), 0.0, 1.0)
        row = (1 - wt) * self.values[it] + wt * self.values[it + 1]
        return float(np.interp(x, xs, row))

    def to_csv(self, csv_path, json_path, fitted_c=None):
        from artifacts import write_csv, write_json

        rows = ((t, x, v) for t, row in zip(self.ts, self.values) for x, v in zip(self.xs, row))
        write_csv(csv_path, ["t", "x", "value"], rows)
        write_json(json_path, {
            "lambda": self.lam,
            "params": {"a": self.params.a, "delta": self.params.delta},
            "grid": {"T": self.grid.T, "L": self.grid.L, "n_t": self.grid.n_t, "n_x": self.grid.n_x},
            "n_terms": self.n_terms,
            "series_tail_bound": self.series_tail_bound,
            "fitted_C": fitted_c,
        })


def _graded_panels(lo, hi):
    if hi <= 2 * lo:
        return [(lo, hi)]
    edges = [lo]
    while edges[-1] * 2 < hi:
        edges.append(edges[-1] * 2)
    edges.append(hi)
    return list(zip(edges[:-1], edges[1:]))


def _cell_averages(fn, params, grid, point_masses=()):
    """Time-cell and space-bin averages of a nonnegative field fn(s, y).

    Where s^(1/a) < dx/8 the field is narrower than a bin; those slivers are
    replaced by point masses (location, weight-of-s-interval) placed in the
    nearest bin.
    """
    a = params.a
    h, dx, xs = grid.h, grid.dx, grid.xs
    s_res = (dx / 8) ** a
    out = np.zeros((grid.n_t, grid.n_x))
    for j in range(grid.n_t):
        lo, hi = j * h, (j + 1) * h
        if lo < s_res:
            for z, weight in point_masses:
                k = int(round((z + grid.L) / dx))
                if 0 <= k < grid.n_x:
                    out[j, k] += weight(lo, min(hi, s_res)) / (h * dx)
        lo = max(lo, s_res)
        if hi <= lo:
            continue
        acc = np.zeros(grid.n_x)
        for p, q in _graded_panels(lo, hi):
            half, mid = 0.5 * (q - p), 0.5 * (q + p)
            for node, w in zip(mid + half * _gauss_nodes, half * _gauss_weights):
                r = int(min(64, max(1, math.ceil(4 * dx / node ** (1 / a)))))
                offsets = ((np.arange(r) + 0.5) / r - 0.5) * dx
                acc += w * fn(node, xs[:, None] + offsets[None, :]).mean(axis=1)
        out[j] += acc / h
    return out


def _l0_cells(lam, params, grid):
    def square(s, y):
        return green_values(params, s, y) ** 2

    masses = [(0.0, lambda lo, hi: squared_green_mass(params, lo, hi))]
    return lam ** 2 * _cell_averages(square, params, grid, masses)


def _convolve_cells(f_cells, g_cells, grid):
    """Cell-average space-time convolution (f * g), f evaluated at t - s and g at s"""
    n_t, n_x = f_cells.shape
    padded = np.vstack([np.zeros((1, n_x)), f_cells])
    shifted = 0.5 * (padded[:-1] + padded[1:])
    full = fftconvolve(g_cells, shifted, mode="full")
    c = (n_x - 1) // 2
    # fft round-off can leave -1e-18 dust in a nonnegative result
    return np.maximum(grid.h * grid.dx * full[:n_t, c:c + n_x], 0.0)


def _check_order(params):
    if params.a <= 1:
        raise SingularityBlowup(f"G^2 ~ s^(-2/a) is not integrable against the time grid for a={params.a}")


def ln_kernel(n, lam, params, grid):
    """Layer L_n = L_0 * ... * L_0 (n+1 factors) on the cell grid"""
    if n < 0:
        raise OutOfRange("n must be >= 0")
    _check_order(params)
    base = _l0_cells(lam, params, grid)
    layer = base
    for _ in range(n):
        layer = _convolve_cells(layer, base, grid)
    return KernelTable(lam, params, grid, layer, n_terms=n + 1, layer=n)


def k_kernel(lam, params, grid, tol=1e-8, max_terms=max_series_terms):
    """Partial sums of K = sum_n L_n until the newest layer drops below tol * running max.

    The tail bound treats the remaining layers as geometric with the largest
    ratio seen among the last layers; the ratios decay like those of a
    Mittag-Leffler series so this is conservative.
    """
    if tol <= 0:
        raise OutOfRange("tol must be > 0")
    _check_order(params)
    if lam == 0:
        return KernelTable(lam, params, grid, np.zeros((grid.n_t, grid.n_x)), n_terms=1)
    base = _l0_cells(lam, params, grid)
    total = base.copy()
    layer = base
    ratios = []
    n_terms = 1
    while True:
        if n_terms >= max_terms:
            raise NoConvergence(f"K series for lambda={lam} not converged after {n_terms} terms")
        previous = layer.max()
        layer = _convolve_cells(layer, base, grid)
        total += layer
        n_terms += 1
        newest = layer.max()
        ratios.append(newest / previous if previous > 0 else 0.0)
        if newest <= tol * total.max():
            break
    r = max(ratios[-3:])
    tail = newest * r / (1 - r) if r < 1 else math.inf
    logger.debug("K series lambda=%g: %d terms, tail bound %.3g", lam, n_terms, tail)
    return KernelTable(lam, params, grid, total, n_terms=n_terms, series_tail_bound=tail)


def restrict_cells(values, grid):
    """Cell table on grid.refined() averaged back onto grid's cells and bins"""
    if values.shape != (2 * grid.n_t, 2 * grid.n_x - 1):
        raise OutOfRange(f"table of shape {values.shape} is not on the refinement of {grid}")
    rows = 0.5 * (values[0::2] + values[1::2])
    padded = np.pad(rows, [(0, 0), (1, 1)], mode="edge")
    return 0.5 * padded[:, 1:-1:2] + 0.25 * (padded[:, 0:-2:2] + padded[:, 2::2])


def richardson_kernel(lam, params, grid, tol=1e-8):
    """K on grid with the first-order discretisation error removed: 2 K(grid/2) - K(grid).

    The time rule converges at first order near the s^(-1/a) singularity; one
    extrapolation step against the refined grid cancels that term.
    """
    return extrapolate(k_kernel(lam, params, grid, tol), k_kernel(lam, params, grid.refined(), tol))


def extrapolate(coarse, fine):
    """2 fine - coarse on the coarse cells, for tables on a grid and its refinement"""
    grid = coarse.grid
    values = np.maximum(2.0 * restrict_cells(fine.values, grid) - coarse.values, 0.0)
    tail = 2.0 * fine.series_tail_bound + coarse.series_tail_bound
    return KernelTable(coarse.lam, coarse.params, grid, values, n_terms=max(coarse.n_terms, fine.n_terms), series_tail_bound=tail)


def layer_one_mass(lam, params, T):
    """int_0^T int L_1 dx dt in closed form.

    The spatial integral of a convolution factorises, and int L_0(s,.) = lam^2 c s^(-1/a),
    so the double integral reduces to a Beta function.
    """
    a = params.a
    c = special.gamma(1 + 1 / a) / math.pi * (2 * math.cos(params.theta)) ** (-1 / a)
    e = 1 - 1 / a
    return lam ** 4 * c ** 2 * special.beta(e, e) * T ** (2 * e) / (2 * e)


def brute_force_l1_mass(lam, params, grid):
    """int_0^T int L_1 dx dt summed off the double-convolution cell table"""
    table = ln_kernel(1, lam, params, grid)
    return float(table.values.sum() * grid.h * grid.dx)


def k_heat_closed(nu, lam, t, x):
    """K for the heat operator (nu/2) d^2/dx^2"""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise OutOfRange("t must be > 0")
    g = np.exp(-np.asarray(x, dtype=float) ** 2 / (nu * t)) / np.sqrt(math.pi * nu * t)
    l2, l4 = lam ** 2, lam ** 4
    return g * (l2 / np.sqrt(4 * math.pi * nu * t) + l4 / (2 * nu) * np.exp(l4 * t / (4 * nu)) * special.ndtr(l2 * np.sqrt(t / (2 * nu))))


def k_wave_closed(kappa, lam, t, x):
    """K for the wave equation with speed kappa, zero outside the light cone"""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) <= kappa * t
    arg = np.sqrt(np.maximum(lam ** 2 * ((kappa * t) ** 2 - x ** 2) / (2 * kappa), 0.0))
    return np.where(inside, lam ** 2 / 4 * special.i0(arg), 0.0)


def k_wave_series(kappa, lam, t, x, terms=60):
    """k_wave_closed by its power series sum (z/2)^(2k) / (k!)^2 in place of I0(z)"""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) <= kappa * t
    half_sq = np.maximum(lam ** 2 * ((kappa * t) ** 2 - x ** 2) / (2 * kappa), 0.0) / 4
    k = np.arange(terms, dtype=float)
    logs = k * np.log(np.maximum(half_sq, 1e-300))[..., None] - 2 * special.gammaln(k + 1)
    series = np.exp(logs).sum(axis=-1)
    series = np.where(half_sq > 0, series, 1.0)
    return np.where(inside, lam ** 2 / 4 * series, 0.0)


def upper_bound_gamma(params, lam):
    return lam ** 2 * lambda_const(params) * special.gamma(1 - 1 / params.a)


def k_upper_bound(params, lam, t, x, C):
    """(C / t^(1/a)) G(t,x) (1 + t^(1/a) exp(gamma^(a*) t))"""
    a = params.a
    t = np.asarray(t, dtype=float)
    gamma = upper_bound_gamma(params, lam)
    a_star = a / (a - 1)
    root = t ** (1 / a)
    return C / root * green_values(params, t, x) * (1 + root * np.exp(gamma ** a_star * t))


def _bound_ratio(table, mask):
    ts, xs = np.meshgrid(table.ts, table.xs, indexing="ij")
    shape = k_upper_bound(table.params, table.lam, ts, xs, 1.0)
    ratio = np.where(shape > 0, table.values / np.where(shape > 0, shape, 1.0), 0.0)
    return ratio[mask] if mask is not None else ratio


def _region(table, t_min, x_max):
    ts, xs = np.meshgrid(table.ts, table.xs, indexing="ij")
    mask = np.ones_like(ts, dtype=bool)
    if t_min is not None:
        mask &= ts >= t_min
    if x_max is not None:
        mask &= np.abs(xs) <= x_max
    return mask


def fit_upper_bound_constant(table, headroom=1.05, t_min=None, x_max=None):
    """C = headroom * max K / shape over the calibration table"""
    return headroom * float(_bound_ratio(table, _region(table, t_min, x_max)).max())


def verify_upper_bound(table, C, t_min=None, x_max=None):
    """(holds, worst ratio K / bound) on a verification table"""
    worst = float(_bound_ratio(table, _region(table, t_min, x_max)).max()) / C
    return worst <= 1.0, worst


def _j0_square_cells(measure, params, grid):
    def square(s, y):
        return j0_profile(measure, params, s, y.ravel()).reshape(y.shape) ** 2

    masses = [(z, lambda lo, hi, m=m: m * m * squared_green_mass(params, lo, hi)) for z, m in measure.atoms]
    return _cell_averages(square, params, grid, masses)


def moment_grid(t, x, params, n_t=32, n_x=161, L=None):
    """Kernel grid whose last cell midpoint is t"""
    if L is None:
        L = max(6.0, abs(x) + 10 * t ** (1 / params.a))
    T = t * n_t / (n_t - 0.5)
    return KernelGrid(T, L, n_t, n_x)


def moment_upper_bound(p, measure, rho, params, t, x, grid=None, tol=1e-8):
    """Bound on E|u(t,x)|^p from the second-moment kernel inequality.

    p = 2:  J0^2 + ([vartheta^2 + J0^2] * K(lam = Lip))
    p > 2:  (2 J0^2 + ([vartheta^2 + 2 J0^2] * K(lam = 4 sqrt(p) Lip)))^(p/2)

    The p > 2 constant uses the Burkholder bound z_p <= 2 sqrt(p).
    """
    if p < 2 or p % 2:
        raise OutOfRange("p must be an even integer >= 2")
    if t <= 0:
        raise OutOfRange("t must be > 0")
    grid = grid or moment_grid(t, x, params)
    if abs(grid.ts[-1] - t) > 1e-9 * t:
        raise OutOfRange(f"kernel grid ends at t={grid.ts[-1]:g}, not t={t:g}; build it with moment_grid")
    lip, vartheta = rho.growth
    lam = lip if p == 2 else 4 * math.sqrt(p) * lip
    factor = 1.0 if p == 2 else 2.0
    j0_now = j0_profile(measure, params, t, np.array([x]))[0]
    if lam == 0:
        return (factor * j0_now ** 2) ** (p / 2) if p > 2 else j0_now ** 2
    kernel = k_kernel(lam, params, grid, tol)
    source = factor * _j0_square_cells(measure, params, grid) + vartheta ** 2
    convolved = _convolve_cells(kernel.values, source, grid)
    second = factor * j0_now ** 2 + float(np.interp(x, grid.xs, convolved[-1]))
    return second if p == 2 else second ** (p / 2)


def moment_growth_bound(p, t, Q, a):
    """Q^p exp(Q p^((2a-1)/(a-1)) t)"""
    if Q <= 0:
        raise OutOfRange("Q must be > 0")
    return Q ** p * math.exp(Q * p ** ((2 * a - 1) / (a - 1)) * t)


def cell_average(fn, grid, i, j, order=6):
    """Average of fn(t, x) over time cell i and the space bin of node j"""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    ts = (i + 0.5 + 0.5 * nodes) * grid.h
    xs = grid.xs[j] + 0.5 * nodes * grid.dx
    values = fn(ts[:, None], xs[None, :])
    return float(weights @ values @ weights) / 4


def closed_form_error(table, closed, probe_ts, probe_xs):
    """Largest relative gap between table cells and the cell-averaged closed form at the probes"""
    grid = table.grid
    worst = 0.0
    for t in probe_ts:
        i = min(int(t / grid.h), grid.n_t - 1)
        for x in probe_xs:
            j = int(round((x + grid.L) / grid.dx))
            exact = cell_average(closed, grid, i, j)
            worst = max(worst, abs(table.values[i, j] - exact) / exact)
    return worst
