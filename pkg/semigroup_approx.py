"""Discrete-generator approximation of the stable semigroup.

D_eps = (G(eps) - I)/eps generates exp(t D_eps) = e^(-t/eps) I + R_eps(t) with

    R_eps(t,x) = e^(-t/eps) sum_{n>=1} (t/eps)^n / n! G(n eps, x),

a Poisson mixture of stable densities. This module evaluates R_eps, applies
the semigroup to tabulated functions, and certifies the approximation through
the L1 / L2 error bounds and the series f_b behind their constants.
"""

import functools
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize, special, stats
from scipy.signal import fftconvolve

from errors import OutOfRange, TruncationTooTight
from stable_green import (
    InitialMeasure,
    beta_integral,
    cell_kernel,
    cross_moment,
    fitted_constants,
    green_cdf,
    green_values,
    j0_profile,
    psi_cutoff,  # noqa: F401  re-exported
    squared_green_mass,
)

logger = logging.getLogger(__name__)

poisson_tail_tol = 1e-12
_gauss_nodes, _gauss_weights = np.polynomial.legendre.leggauss(16)


def poisson_cutoff(t, eps):
    """Mean + 12 standard deviations + 30"""
    m = t / eps
    return int(math.ceil(m + 12 * math.sqrt(m) + 30))


def _poisson_weights(t, eps, n_cut=None):
    """Indices n >= 1 and weights e^(-t/eps)(t/eps)^n/n! that matter, up to n_cut"""
    if eps <= 0:
        raise OutOfRange("eps must be > 0")
    m = t / eps
    n_cut = poisson_cutoff(t, eps) if n_cut is None else int(n_cut)
    tail = float(stats.poisson.sf(n_cut, m))
    if tail >= poisson_tail_tol:
        raise TruncationTooTight(f"Poisson({m:g}) tail beyond n_cut={n_cut} is {tail:.2e}")
    n = np.arange(1, n_cut + 1)
    w = stats.poisson.pmf(n, m)
    keep = w > 1e-18 * w.max()
    return n[keep], w[keep]


def r_kernel(params, eps, t, x, n_cut=None):
    """R_eps(t, x) as a truncated Poisson mixture"""
    if t == 0:
        return 0.0
    n, w = _poisson_weights(t, eps, n_cut)
    return float(w @ green_values(params, n * eps, x))


def _r_values(params, eps, t, xs, n_cut=None, chunk=64):
    xs = np.asarray(xs, dtype=float)
    out = np.zeros_like(xs)
    if t == 0:
        return out
    n, w = _poisson_weights(t, eps, n_cut)
    for start in range(0, n.size, chunk):
        times = n[start:start + chunk] * eps
        out += w[start:start + chunk] @ green_values(params, times[:, None], xs[None, :])
    return out


@dataclass(frozen=True)
class ApproxKernel:
    eps: float
    params: object
    t: float
    xs: np.ndarray
    r_values: np.ndarray
    atom_weight: float
    trunc_error: float

    @property
    def mass(self):
        return float(np.trapezoid(self.r_values, self.xs))


def approx_kernel(params, eps, t, xs, n_cut=None):
    xs = np.asarray(xs, dtype=float)
    values = _r_values(params, eps, t, xs, n_cut)
    trunc = 0.0
    if t > 0:
        n, w = _poisson_weights(t, eps, n_cut)
        times = n * eps
        left = green_cdf(params, times, xs[0])
        right = 1.0 - green_cdf(params, times, xs[-1])
        trunc = float(w @ (left + right))
    return ApproxKernel(eps, params, t, xs, values, math.exp(-t / eps), trunc)


@dataclass(frozen=True)
class FunctionTable:
    """Function tabulated on a uniform grid, extended by its edge values"""

    xs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        steps = np.diff(self.xs)
        if self.xs.size < 2 or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise OutOfRange("FunctionTable needs a uniform grid")

    @property
    def dx(self):
        return float(self.xs[1] - self.xs[0])


def r_cell_weights(params, eps, t, dx, n):
    """Bin probabilities of R_eps(t) on offsets -(n-1)..(n-1), tails lumped into the end bins"""
    idx, w = _poisson_weights(t, eps)
    weights = np.zeros(2 * n - 1)
    for k, p in zip(idx, w):
        weights += p * cell_kernel(params, k * eps, dx, n, lump_tails=True)
    return weights


def edge_convolve(values, weights):
    """sum_m weights[m + n - 1] v[i - m] along the last axis, v extended by its edge values"""
    n = values.shape[-1]
    pad = [(0, 0)] * (values.ndim - 1) + [(n - 1, n - 1)]
    padded = np.pad(values, pad, mode="edge")
    kernel = weights.reshape((1,) * (values.ndim - 1) + (-1,))
    return fftconvolve(padded, kernel, mode="valid", axes=-1)


def g_eps_apply(f, params, eps, t):
    """exp(t D_eps) f = e^(-t/eps) f + R_eps(t) * f"""
    if t == 0:
        return FunctionTable(f.xs, f.values.copy())
    weights = r_cell_weights(params, eps, t, f.dx, f.xs.size)
    return FunctionTable(f.xs, math.exp(-t / eps) * f.values + edge_convolve(f.values, weights))


def approx_series_f(b, z):
    """f_b(z) = e^(-z) z^(b+1) sum_{k>=1} z^(k-1) / (k! k^b), summed in log space"""
    if z < 0:
        raise OutOfRange("z must be >= 0")
    if z == 0:
        if b == -1:
            return 1.0
        return 0.0 if b > -1 else math.inf
    k = np.arange(1, int(z + 40 * math.sqrt(z) + 60) + 1, dtype=float)
    logs = -z + (k + b) * math.log(z) - special.gammaln(k + 1) - b * np.log(k)
    return float(np.exp(special.logsumexp(logs)))


def _sup_on_log_grid(fn, lo=1e-8, hi=1e4, n=600, limit=None):
    zs = np.geomspace(lo, hi, n)
    values = np.array([fn(z) for z in zs])
    i = int(np.argmax(values))
    best = float(values[i])
    left, right = math.log(zs[max(i - 1, 0)]), math.log(zs[min(i + 1, n - 1)])
    if right > left:
        res = optimize.minimize_scalar(lambda s: -fn(math.exp(s)), bounds=(left, right), method="bounded")
        best = max(best, float(-res.fun))
    if limit is not None:
        best = max(best, limit)
    return best


def c_b_sup(b):
    """sup_z f_b(z); f_b -> 1 as z -> inf so the limit is a candidate"""
    if b < -1:
        raise OutOfRange(f"b={b} < -1")
    best = _sup_on_log_grid(lambda z: approx_series_f(b, z), limit=1.0)
    return max(best, approx_series_f(b, 0.0))


@functools.lru_cache(maxsize=None)
def l1_constant(params):
    """C of the L1 bound, from the fitted K_{a,1} and the sup of the f_2 expression"""
    a = params.a
    k1 = fitted_constants(params).k1

    def weighted(z):
        return approx_series_f(2.0, z) * (4 * z * z + 7 * z + 1) / (z * z)

    sup = _sup_on_log_grid(weighted, limit=4.0)
    return (1 / a) * (1 + k1 * 2 * beta_integral(a, 1.0)) * math.sqrt(sup)


def mixture_grid(params, eps, t, points_per_width=20, reach=30.0):
    n, _ = _poisson_weights(t, eps)
    widest = (n.max() * eps) ** (1 / params.a)
    narrowest = min(n.min() * eps, t) ** (1 / params.a)
    half = reach * max(widest, t ** (1 / params.a))
    dx = narrowest / points_per_width
    count = 2 * int(math.ceil(half / dx)) + 1
    return np.linspace(-half, half, count)


def l1_error(params, eps, t):
    """(numeric, bound) for int |R_eps(t,x) - G(t,x)| dx <= e^(-t/eps) + C sqrt(eps/t)"""
    if t <= 0 or eps <= 0:
        raise OutOfRange("t and eps must be > 0")
    xs = mixture_grid(params, eps, t)
    gap = np.abs(_r_values(params, eps, t, xs) - green_values(params, t, xs))
    numeric = float(np.trapezoid(gap, xs))
    logger.debug("L1 gap eps=%g t=%g on %d nodes: %.6g", eps, t, xs.size, numeric)
    bound = math.exp(-t / eps) + l1_constant(params) * math.sqrt(eps / t)
    return numeric, bound


def time_integral(fn, T, singular_mass=None, levels=40):
    """int_0^T fn(s) ds for integrands with an integrable s^(-1/a) blow-up at 0.

    Geometric panels [T 2^(-k-1), T 2^(-k)] with 16-point Gauss each; the last
    sliver [0, T 2^(-levels)] is supplied by singular_mass(lo, hi) when given.
    """
    total = 0.0
    for k in range(levels):
        lo, hi = T * 2.0 ** (-k - 1), T * 2.0 ** (-k)
        half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
        total += sum(w * fn(s) for s, w in zip(mid + half * _gauss_nodes, half * _gauss_weights))
    if singular_mass is not None:
        total += singular_mass(0.0, T * 2.0 ** -levels)
    return total


def _l2_terms(params, eps, s):
    """(int (R - G)^2, int R^2) at time s from the closed-form cross moments"""
    n, w = _poisson_weights(s, eps)
    times = n * eps
    rr = float(w @ cross_moment(params, times[:, None], times[None, :]) @ w)
    rg = float(w @ cross_moment(params, times, s))
    gg = float(cross_moment(params, s, s))
    return max(rr - 2 * rg + gg, 0.0), rr


class L2Profile(NamedTuple):
    integral: float
    r_mass: float


def l2_error_profile(params, eps, T):
    """int_0^T int (R_eps - G)^2 dx ds, plus int R_eps(T,x)^2 dx.

    Space integrals are exact through cross_moment; time is integrated on
    geometric Gauss panels. On the final sliver R_eps is O(s/eps) and the
    integrand is taken as int G^2.
    """
    if T <= 0:
        raise OutOfRange("T must be > 0")
    integral = time_integral(lambda s: _l2_terms(params, eps, s)[0], T, lambda lo, hi: squared_green_mass(params, lo, hi))
    logger.debug("L2 profile eps=%g T=%g: %.6g", eps, T, integral)
    return L2Profile(integral, _l2_terms(params, eps, T)[1])


def fit_l2_constant(params, eps_list, t_list, headroom=1.05):
    """C_{a,delta} = headroom * max t^(1/a) int R_eps(t)^2 over the calibration lattice"""
    ratios = [_l2_terms(params, e, t)[1] * t ** (1 / params.a) for e in eps_list for t in t_list]
    return headroom * max(ratios)


def r_mass_ratio(params, eps, t):
    """t^(1/a) int R_eps(t,x)^2 dx, to compare with a fitted C_{a,delta}"""
    return _l2_terms(params, eps, t)[1] * t ** (1 / params.a)


def pointwise_limit_probe(params, t, xs, eps_ladder):
    """R_eps(t, xs) along a shrinking eps ladder next to G(t, xs)"""
    xs = np.asarray(xs, dtype=float)
    rows = np.array([_r_values(params, e, t, xs) for e in eps_ladder])
    return rows, green_values(params, t, xs)


def mollifier(eps, x):
    x = np.asarray(x, dtype=float)
    return np.exp(-x * x / (2 * eps)) / math.sqrt(2 * math.pi * eps)


def mollified_noise_variance(eps, dx, L):
    """Per-unit-time variance dx sum_k phi_eps(y_k)^2 of the mollified noise at x=0, y_k = -L + k dx.

    Approaches 1/sqrt(4 pi eps) once dx << sqrt(eps).
    """
    ys = -L + dx * np.arange(int(round(2 * L / dx)))
    return float(dx * np.sum(mollifier(eps, ys) ** 2))


def smooth_initial(measure, params, eps, xs=None):
    """((mu psi_eps) * G(eps, .)) as a piecewise-linear density on xs.

    The default grid covers the cutoff support plus 20 widths eps^(1/a) at
    eight nodes per width.
    """
    cut = measure.cutoff(eps)
    if xs is None:
        width = eps ** (1 / params.a)
        half = 1 + 1 / eps + 20 * width
        dx = width / 8
        xs = np.linspace(-half, half, 2 * int(math.ceil(half / dx)) + 1)
    xs = np.asarray(xs, dtype=float)
    values = np.maximum(j0_profile(cut, params, eps, xs), 0.0)
    return InitialMeasure(density_x=tuple(xs.tolist()), density_y=tuple(values.tolist()), name=f"smooth({measure.name}, eps={eps:g})")
