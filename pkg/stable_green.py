"""Skewed a-stable Green function G(t,x), the homogeneous solution J0 and the
constants derived from them.

All times are reduced to t=1 with G(t,x) = t^(-1/a) G(1, t^(-1/a) x). The t=1
law is obtained by inverse Fourier transform of exp(-|xi|^a e^(-i delta pi sgn(xi)/2)),
written on the half line as

    G(1,z) = (1/pi) int_0^inf exp(-xi^a cos(theta)) cos(xi z + xi^a sin(theta)) dxi,

with theta = delta pi / 2. The one-sided cosine form is real by construction.
"""

import argparse
import logging
import math
import threading
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, optimize, special
from scipy.interpolate import CubicSpline

from errors import GridTooCoarse, OutOfRange, QuadratureFailure

logger = logging.getLogger(__name__)

# Tolerances
tol_neg = 1e-9
tol_mass = 1e-6
fourier_cutoff = 1e-12

# Unit-law interpolation table
unit_half_width = 40.0
unit_points = 8001

# Gauss-Legendre panel rule for the inverse transform
_gl_nodes, _gl_weights = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class StableParams:
    a: float
    delta: float

    @property
    def theta(self):
        return self.delta * math.pi / 2

    @property
    def is_gaussian(self):
        return self.a == 2.0

    def label(self):
        return f"a={self.a:g} delta={self.delta:g}"


def make_params(a, delta):
    """Validate (a, delta) against 1 < a <= 2 and |delta| <= 2 - a"""
    a = float(a)
    delta = float(delta)
    if not (1.0 < a <= 2.0):
        raise OutOfRange(f"a={a} outside ]1, 2]")
    if abs(delta) > 2.0 - a + 1e-12:
        raise OutOfRange(f"|delta|={abs(delta)} exceeds 2 - a = {2.0 - a}")
    if a == 2.0:
        delta = 0.0
    return StableParams(a, delta)


class _BuildOnceCache:
    """Concurrent readers, one builder per key"""

    def __init__(self, maxsize=32):
        self.maxsize = maxsize
        self._items = {}
        self._locks = {}
        self._guard = threading.Lock()

    def get(self, key, build):
        with self._guard:
            if key in self._items:
                return self._items[key]
            lock = self._locks.setdefault(key, threading.Lock())
        with lock:
            with self._guard:
                if key in self._items:
                    return self._items[key]
            value = build()
            with self._guard:
                if len(self._items) >= self.maxsize:
                    self._items.pop(next(iter(self._items)))
                self._items[key] = value
                self._locks.pop(key, None)
            return value


_law_cache = _BuildOnceCache()
_table_cache = _BuildOnceCache(maxsize=128)


def _frequency_cutoff(params):
    # exp(-Xi^a cos(theta)) < fourier_cutoff at t=1
    return (-math.log(fourier_cutoff) / math.cos(params.theta)) ** (1.0 / params.a)


def _fourier_nodes(params, zmax):
    """Composite Gauss-Legendre nodes on [0, Xi].

    Panels are graded geometrically towards xi=0 (where xi^a has a cusp) and
    uniform beyond, narrow enough that xi*z turns by at most ~8 rad per panel
    for |z| <= zmax.
    """
    xi_max = _frequency_cutoff(params)
    width = min(0.5, 8.0 / max(1.0, zmax))
    graded = width * 2.0 ** -np.arange(40, -1, -1)
    uniform = np.arange(2 * width, xi_max + width, width)
    edges = np.concatenate([[0.0], graded, uniform])
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    xi = (mid[:, None] + half[:, None] * _gl_nodes[None, :]).ravel()
    w = (half[:, None] * _gl_weights[None, :]).ravel()
    return xi, w


def _inverse_transform(params, z, kind="pdf", chunk=256):
    """Evaluate the t=1 pdf, cdf or x-derivative at arbitrary points z.

    One pass over a fixed frequency grid; the cdf uses the Gil-Pelaez form
    F(z) = 1/2 + (1/pi) int_0^inf exp(-xi^a c) sin(xi z + xi^a s) / xi dxi,
    whose z-derivative is the pdf.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    zmax = float(np.max(np.abs(z))) if z.size else 1.0
    xi, w = _fourier_nodes(params, zmax)
    c, s = math.cos(params.theta), math.sin(params.theta)
    xia = xi ** params.a
    envelope = w * np.exp(-xia * c)
    phase = xia * s
    out = np.empty_like(z)
    for start in range(0, z.size, chunk):
        zz = z[start:start + chunk, None]
        if kind == "pdf":
            block = np.cos(xi * zz + phase) @ envelope
        elif kind == "cdf":
            block = 0.5 * math.pi + np.sin(xi * zz + phase) @ (envelope / xi)
        elif kind == "deriv":
            block = -(np.sin(xi * zz + phase) @ (envelope * xi))
        else:
            raise ValueError(f"unknown transform kind {kind!r}")
        out[start:start + chunk] = block / math.pi
    return out


class UnitLaw:
    """Interpolated t=1 law: pdf, cdf and partial first moment H(z) = int_{-inf}^z w G(1,w) dw.

    Beyond |z| = unit_half_width the density is continued by its power tails
    c_pm |z|^(-1-a). c_pm is fixed by the table-end cdf, so the cdf, pdf and
    partial-mean tails are one continuation and the cdf is continuous there.
    """

    def __init__(self, params):
        self.params = params
        a = params.a
        self.z_max = unit_half_width
        zs = np.linspace(-unit_half_width, unit_half_width, unit_points)
        pdf = _inverse_transform(params, zs, "pdf")
        cdf = _inverse_transform(params, zs, "cdf")
        self.c_minus = a * max(float(cdf[0]), 0.0) * unit_half_width ** a
        self.c_plus = a * max(1.0 - float(cdf[-1]), 0.0) * unit_half_width ** a
        self._pdf = CubicSpline(zs, pdf)
        self._cdf = CubicSpline(zs, cdf)
        self._moment = CubicSpline(zs, zs * pdf).antiderivative()
        self._h_left = -self.c_minus * unit_half_width ** (1 - a) / (a - 1)
        logger.debug("Built unit law for %s (c-=%.3g, c+=%.3g)", params.label(), self.c_minus, self.c_plus)

    def _split(self, z):
        z = np.asarray(z, dtype=float)
        return z, z < -self.z_max, z > self.z_max

    def pdf(self, z):
        z, left, right = self._split(z)
        inside = np.clip(z, -self.z_max, self.z_max)
        out = self._pdf(inside)
        az = np.maximum(np.abs(z), self.z_max)
        out = np.where(left, self.c_minus * az ** (-1 - self.params.a), out)
        return np.where(right, self.c_plus * az ** (-1 - self.params.a), out)

    def cdf(self, z):
        a = self.params.a
        z, left, right = self._split(z)
        out = self._cdf(np.clip(z, -self.z_max, self.z_max))
        az = np.maximum(np.abs(z), self.z_max)
        out = np.where(left, self.c_minus * az ** -a / a, out)
        out = np.where(right, 1.0 - self.c_plus * az ** -a / a, out)
        return np.clip(out, 0.0, 1.0)

    def partial_mean(self, z):
        a = self.params.a
        z, left, right = self._split(z)
        out = self._h_left + self._moment(np.clip(z, -self.z_max, self.z_max))
        az = np.maximum(np.abs(z), self.z_max)
        out = np.where(left, -self.c_minus * az ** (1 - a) / (a - 1), out)
        return np.where(right, -self.c_plus * az ** (1 - a) / (a - 1), out)


class GaussianLaw:
    """Exact t=1 law for a=2: N(0, 2)"""

    def __init__(self, params):
        self.params = params

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        return np.exp(-z * z / 4) / math.sqrt(4 * math.pi)

    def cdf(self, z):
        return special.ndtr(np.asarray(z, dtype=float) / math.sqrt(2))

    def partial_mean(self, z):
        return -2.0 * self.pdf(z)


def unit_law(params):
    if params.is_gaussian:
        return GaussianLaw(params)
    return _law_cache.get(params, lambda: UnitLaw(params))


def _check_time(t):
    if np.any(np.asarray(t) <= 0):
        raise OutOfRange(f"t must be > 0, got {t}")


def green_density(params, t, x):
    """Pointwise G(t,x) by adaptive oscillatory quadrature.

    Independent of the tabulated path so the two can be cross-checked.
    """
    _check_time(t)
    a = params.a
    if params.is_gaussian:
        return math.exp(-x * x / (4 * t)) / math.sqrt(4 * math.pi * t)
    scale = t ** (-1.0 / a)
    z = scale * x
    c, s = math.cos(params.theta), math.sin(params.theta)
    xi_max = _frequency_cutoff(params)

    def f_cos(xi):
        return math.exp(-xi ** a * c) * math.cos(xi ** a * s)

    def f_sin(xi):
        return math.exp(-xi ** a * c) * math.sin(xi ** a * s)

    opts = dict(epsabs=1e-13, epsrel=1e-11, limit=500)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if z == 0.0:
            value, err = integrate.quad(f_cos, 0.0, xi_max, **opts)
        else:
            v1, e1 = integrate.quad(f_cos, 0.0, xi_max, weight="cos", wvar=z, **opts)
            v2, e2 = integrate.quad(f_sin, 0.0, xi_max, weight="sin", wvar=z, **opts)
            value, err = v1 - v2, e1 + e2
    if err > 1e-8:
        raise QuadratureFailure(f"G({t}, {x}) for {params.label()}: error estimate {err:.2e}")
    return scale * value / math.pi


def green_values(params, t, xs):
    """Vectorized G(t, xs) through the cached unit law"""
    _check_time(t)
    scale = np.asarray(t, dtype=float) ** (-1.0 / params.a)
    return scale * unit_law(params).pdf(scale * np.asarray(xs, dtype=float))


def green_cdf(params, t, xs):
    _check_time(t)
    scale = np.asarray(t, dtype=float) ** (-1.0 / params.a)
    return unit_law(params).cdf(scale * np.asarray(xs, dtype=float))


def green_partial_mean(params, t, xs):
    """H_t(x) = int_{-inf}^x w G(t,w) dw = t^(1/a) H_1(t^(-1/a) x)"""
    _check_time(t)
    tt = np.asarray(t, dtype=float)
    return tt ** (1.0 / params.a) * unit_law(params).partial_mean(tt ** (-1.0 / params.a) * np.asarray(xs, dtype=float))


@dataclass(frozen=True)
class DensityTable:
    params: StableParams
    t: float
    xs: np.ndarray
    values: np.ndarray
    trunc_error: float

    @property
    def mass(self):
        return float(np.trapezoid(self.values, self.xs))

    def to_csv(self, path):
        from artifacts import write_csv

        header = f"params a={self.params.a:g} delta={self.params.delta:g} t={self.t:g} trunc_error={self.trunc_error:.6g}"
        write_csv(path, ["x", "value"], zip(self.xs, self.values), comments=[header])


def green_table(params, t, xs, mass_tol=tol_mass):
    """Tabulate G(t, xs) with one inverse-transform pass and check its mass.

    Args:
        params: validated StableParams
        t: time > 0
        xs: ascending grid
        mass_tol: allowed excess of the trapezoid mass over the tail-corrected target
    """
    _check_time(t)
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or xs.size < 2 or np.any(np.diff(xs) <= 0):
        raise OutOfRange("xs must be a strictly ascending grid")
    key = (params, float(t), xs.tobytes(), mass_tol)
    return _table_cache.get(key, lambda: _build_table(params, float(t), xs, mass_tol))


def _build_table(params, t, xs, mass_tol):
    scale = t ** (-1.0 / params.a)
    z = scale * xs
    if params.is_gaussian:
        law = GaussianLaw(params)
        values = scale * law.pdf(z)
        ends = law.cdf(z[[0, -1]])
    else:
        values = scale * _inverse_transform(params, z, "pdf")
        ends = _inverse_transform(params, z[[0, -1]], "cdf")
    trunc_error = float(max(ends[0], 0.0) + max(1.0 - ends[1], 0.0))
    table = DensityTable(params, t, xs, values, trunc_error)
    if values.min() < -tol_neg:
        raise GridTooCoarse(f"negative density {values.min():.2e} below -{tol_neg:g}")
    mass = table.mass
    if not (1.0 - trunc_error - mass_tol <= mass <= 1.0 + mass_tol):
        raise GridTooCoarse(f"mass {mass:.9f} with trunc_error {trunc_error:.2e} for {params.label()} t={t}")
    return table


def cross_moment(params, s, t):
    """int G(s,x) G(t,x) dx in closed form.

    Parseval gives Gamma(1+1/a)/pi * Re[(A - iB)^(-1/a)] with A = (s+t)cos(theta),
    B = (s-t)sin(theta). For s = t this is the symmetric law at time 2t cos(theta).
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    A = (s + t) * math.cos(params.theta)
    B = (s - t) * math.sin(params.theta)
    return special.gamma(1 + 1 / params.a) / math.pi * np.real((A - 1j * B + 0j) ** (-1.0 / params.a))


def squared_green_mass(params, lo, hi):
    """int_lo^hi ds int G(s,y)^2 dy, with int G(s,.)^2 = cross_moment(s, s) ~ s^(-1/a)"""
    a = params.a
    coef = special.gamma(1 + 1 / a) / math.pi * (2 * math.cos(params.theta)) ** (-1 / a)
    return coef * (hi ** (1 - 1 / a) - lo ** (1 - 1 / a)) / (1 - 1 / a)


def cell_kernel(params, t, dx, n, lump_tails=False):
    """Bin-averaged one-step kernel on offsets -(n-1)..(n-1), as probabilities.

    Entry m is P(Z_t in [(m-1/2)dx, (m+1/2)dx]). With lump_tails the mass beyond
    the outermost bins is added to them so the weights sum to one.
    """
    m = np.arange(-(n - 1), n)
    edges = (np.arange(-(n - 1), n + 1) - 0.5) * dx
    cdf = green_cdf(params, t, edges)
    weights = np.diff(cdf)
    if weights.min() < -tol_neg:
        raise GridTooCoarse(f"cdf decreases by {-weights.min():.2e} across a bin for {params.label()} t={t}")
    weights = np.maximum(weights, 0.0)
    if lump_tails:
        weights[0] += cdf[0]
        weights[-1] += 1.0 - cdf[-1]
    assert weights.size == m.size
    return weights


# Initial measures


@dataclass(frozen=True)
class InitialMeasure:
    """Nonnegative measure: atoms plus a piecewise-linear density with an optional constant tail.

    density_x may repeat a node to encode a jump; the first copy carries the
    left value and the second the right value.
    """

    atoms: tuple = ()
    density_x: tuple = ()
    density_y: tuple = ()
    tail: float | None = None
    name: str = "custom"

    def __post_init__(self):
        if any(m <= 0 for _, m in self.atoms):
            raise OutOfRange("atom masses must be > 0")
        if len(self.density_x) != len(self.density_y):
            raise OutOfRange("density_x and density_y differ in length")
        if len(self.density_x) == 1:
            raise OutOfRange("a density needs at least two nodes")
        if any(y < 0 for y in self.density_y):
            raise OutOfRange("density values must be >= 0")
        if any(b < a for a, b in zip(self.density_x, self.density_x[1:])):
            raise OutOfRange("density_x must be nondecreasing")
        if self.tail is not None and (self.tail < 0 or not self.density_x):
            raise OutOfRange("a constant tail needs a density support and a value >= 0")

    @property
    def has_density(self):
        return len(self.density_x) > 0

    @property
    def support(self):
        return (self.density_x[0], self.density_x[-1]) if self.has_density else None

    @property
    def is_zero(self):
        return not self.atoms and (not self.has_density or (max(self.density_y) == 0 and not self.tail))

    def density_at(self, x):
        """Density value (right-continuous at jumps), including the tail"""
        x = np.asarray(x, dtype=float)
        if not self.has_density:
            return np.zeros_like(x)
        X = np.asarray(self.density_x)
        Y = np.asarray(self.density_y)
        idx = np.clip(np.searchsorted(X, x, side="right") - 1, 0, X.size - 2)
        x0, x1 = X[idx], X[idx + 1]
        y0, y1 = Y[idx], Y[idx + 1]
        width = np.where(x1 > x0, x1 - x0, 1.0)
        inside = y0 + (y1 - y0) * np.clip((x - x0) / width, 0.0, 1.0)
        inside = np.where(x >= X[-1], Y[-1], inside)
        outside = 0.0 if self.tail is None else self.tail
        return np.where((x < X[0]) | (x > X[-1]), outside, inside)

    def pieces(self):
        """Linear pieces (x0, x1, alpha, beta) with density alpha + beta*x on [x0, x1]"""
        X = np.asarray(self.density_x, dtype=float)
        Y = np.asarray(self.density_y, dtype=float)
        keep = X[1:] > X[:-1]
        x0, x1 = X[:-1][keep], X[1:][keep]
        y0, y1 = Y[:-1][keep], Y[1:][keep]
        beta = (y1 - y0) / (x1 - x0)
        alpha = y0 - beta * x0
        return x0, x1, alpha, beta

    def scaled(self, c):
        return InitialMeasure(
            atoms=tuple((z, c * m) for z, m in self.atoms),
            density_x=self.density_x,
            density_y=tuple(c * y for y in self.density_y),
            tail=None if self.tail is None else c * self.tail,
            name=f"{c:g}*{self.name}",
        )

    def pair(self, phi, lo, hi):
        """<mu, phi> for phi supported in [lo, hi]"""
        total = sum(m * float(phi(z)) for z, m in self.atoms if lo <= z <= hi)
        if self.has_density:
            points = [x for x in self.density_x if lo < x < hi]
            value, _ = integrate.quad(lambda x: float(self.density_at(x)) * float(phi(x)), lo, hi, points=points or None, limit=500)
            total += value
        return total

    def mass_within(self, lo, hi):
        total = sum(m for z, m in self.atoms if lo <= z <= hi)
        if not self.has_density:
            return total
        x0, x1, alpha, beta = self.pieces()
        a, b = np.maximum(x0, lo), np.minimum(x1, hi)
        keep = b > a
        total += float(np.sum(alpha[keep] * (b - a)[keep] + 0.5 * beta[keep] * (b[keep] ** 2 - a[keep] ** 2)))
        if self.tail:
            s_lo, s_hi = self.support
            total += self.tail * (max(0.0, min(hi, s_lo) - lo) + max(0.0, hi - max(lo, s_hi)))
        return total

    def admissibility_bound(self, a):
        """Upper bound on sup_y int mu(dx) / (1 + |y - x|^(1+a))"""
        bound = sum(m for _, m in self.atoms)
        if self.has_density:
            peak = max(max(self.density_y), self.tail or 0.0)
            bound += peak * 2 * beta_integral(a - 1, 0.0)
        return bound

    def cutoff(self, eps):
        """mu * psi_eps as a compactly supported measure"""
        reach = 1.0 + 1.0 / eps
        atoms = tuple((z, m * psi_cutoff(eps, z)) for z, m in self.atoms if psi_cutoff(eps, z) > 0)
        if not self.has_density:
            return InitialMeasure(atoms=atoms, name=f"cutoff({self.name})")
        nodes = list(zip(self.density_x, self.density_y))
        if self.tail is not None:
            lo, hi = self.support
            nodes = [(lo, self.tail)] + nodes + [(hi, self.tail)]
            if -reach < lo:
                nodes.insert(0, (-reach, self.tail))
            if hi < reach:
                nodes.append((reach, self.tail))
        ramp = np.concatenate([np.linspace(-reach, -1 / eps, 65), np.linspace(1 / eps, reach, 65)])
        known = {x for x, _ in nodes}
        extra = [(float(x), float(self.density_at(x))) for x in ramp if x not in known]
        merged = sorted(nodes + extra, key=lambda p: p[0])
        merged = [(x, y * psi_cutoff(eps, x)) for x, y in merged if -reach <= x <= reach]
        if len(merged) < 2:
            return InitialMeasure(atoms=atoms, name=f"cutoff({self.name})")
        return InitialMeasure(
            atoms=atoms,
            density_x=tuple(x for x, _ in merged),
            density_y=tuple(y for _, y in merged),
            name=f"cutoff({self.name})",
        )


def delta(z=0.0, mass=1.0):
    return InitialMeasure(atoms=((float(z), float(mass)),), name="delta" if mass == 1.0 else f"{mass:g}delta")


def lebesgue(level=1.0):
    return InitialMeasure(density_x=(-1.0, 1.0), density_y=(level, level), tail=level, name="lebesgue")


def indicator(d, level=1.0):
    return InitialMeasure(density_x=(-d, -d, d, d), density_y=(0.0, level, level, 0.0), name=f"indicator[{d:g}]")


def bump(half_width=1.0, level=1.0):
    return InitialMeasure(density_x=(-half_width, 0.0, half_width), density_y=(0.0, level, 0.0), name="bump")


def zero():
    return InitialMeasure(name="zero")


def measure_leq(mu1, mu2, tol=1e-12):
    """mu1 <= mu2 atomwise and densitywise"""
    mass2 = {}
    for z, m in mu2.atoms:
        mass2[z] = mass2.get(z, 0.0) + m
    mass1 = {}
    for z, m in mu1.atoms:
        mass1[z] = mass1.get(z, 0.0) + m
    if any(m > mass2.get(z, 0.0) + tol for z, m in mass1.items()):
        return False
    nodes = np.asarray(sorted(set(mu1.density_x) | set(mu2.density_x)), dtype=float)
    if nodes.size == 0:
        return True
    nudge = 1e-9 * (1 + np.abs(nodes))
    probes = np.concatenate([nodes, nodes - nudge, nodes + nudge, 0.5 * (nodes[1:] + nodes[:-1]), [-1e6, 1e6]])
    return bool(np.all(mu1.density_at(probes) <= mu2.density_at(probes) + tol))


def j0_profile(measure, params, t, xs):
    """J0(t, xs) = (G(t,.) * mu)(xs).

    Atoms contribute mass*G; each linear density piece alpha + beta*y on
    [y0, y1] contributes (alpha + beta x)[F(x-y0) - F(x-y1)] - beta[H(x-y0) - H(x-y1)]
    with F the cdf and H the partial first moment of G(t,.). A constant tail
    enters through the cdf alone.
    """
    _check_time(t)
    xs = np.asarray(xs, dtype=float)
    out = np.zeros_like(xs)
    for z, m in measure.atoms:
        out += m * green_values(params, t, xs - z)
    if not measure.has_density:
        return out
    x0, x1, alpha, beta = measure.pieces()
    for start in range(0, x0.size, 256):
        sl = slice(start, start + 256)
        u0 = xs[None, :] - x0[sl, None]
        u1 = xs[None, :] - x1[sl, None]
        f_diff = green_cdf(params, t, u0) - green_cdf(params, t, u1)
        h_diff = green_partial_mean(params, t, u0) - green_partial_mean(params, t, u1)
        value = (alpha[sl, None] + beta[sl, None] * xs[None, :]) * f_diff - beta[sl, None] * h_diff
        out += value.sum(axis=0)
    if measure.tail:
        lo, hi = measure.support
        out += measure.tail * (green_cdf(params, t, xs - hi) + 1.0 - green_cdf(params, t, xs - lo))
    return out


def j0(measure, params, t, x):
    return float(j0_profile(measure, params, t, np.array([x], dtype=float))[0])


def j0_cell_profile(measure, params, t, xs, dx):
    """Cell averages (1/dx) int_{x-dx/2}^{x+dx/2} J0(t, y) dy at every x in xs.

    Atoms enter through cdf differences, so a point mass whose G(t) is
    narrower than a cell is still seen with its full weight. The density part
    is averaged by Gauss-Legendre with 3 to 16 nodes, more when t^(1/a) < 4 dx.
    """
    _check_time(t)
    xs = np.asarray(xs, dtype=float)
    half = 0.5 * dx
    out = np.zeros_like(xs)
    for z, m in measure.atoms:
        out += m * (green_cdf(params, t, xs + half - z) - green_cdf(params, t, xs - half - z)) / dx
    if not measure.has_density:
        return out
    spread = replace(measure, atoms=())
    nodes = int(np.clip(math.ceil(4 * dx / t ** (1 / params.a)), 3, 16))
    gl_x, gl_w = np.polynomial.legendre.leggauss(nodes)
    for node, weight in zip(gl_x, gl_w):
        out += 0.5 * weight * j0_profile(spread, params, t, xs + half * node)
    return out


# Constants


def lambda_const(params):
    """Lambda = sup_x G(1,x): grid search plus bounded local refinement"""
    if params.is_gaussian:
        return 1.0 / (2.0 * math.sqrt(math.pi))
    law = unit_law(params)
    zs = np.linspace(-10.0, 10.0, 2001)
    peak = zs[int(np.argmax(law.pdf(zs)))]
    res = optimize.minimize_scalar(lambda z: -float(law.pdf(z)), bounds=(peak - 0.02, peak + 0.02), method="bounded", options={"xatol": 1e-10})
    return max(float(-res.fun), float(law.pdf(peak)))


def gamma_const(params):
    """Half the smaller half-line mass of the t=1 law"""
    f0 = float(unit_law(params).cdf(0.0))
    return min(f0, 1.0 - f0) / 2.0


def beta_integral(a, b):
    """int_0^inf y^b / (1 + y^(2+a)) dy in closed form"""
    if a <= 0:
        raise OutOfRange(f"a={a} must be > 0")
    if not (-1.0 < b < a + 1.0):
        raise OutOfRange(f"b={b} outside ]-1, {a + 1}[")
    n = a + 2.0
    return special.gamma((a - b + 1) / n) * special.gamma((a + b + 3) / n) / (b + 1)


@dataclass(frozen=True)
class FittedConstants:
    k0: float
    k1: float
    headroom: float = 1.05
    provenance: str = field(default="fitted: grid supremum over |z| <= 200 with 5% headroom")


def fitted_constants(params, headroom=1.05):
    """K_{a,0} >= sup G(1,z)(1+|z|^(1+a)) and K_{a,1} >= sup |dG/dz(1,z)|(1+|z|^(2+a))"""

    def build():
        a = params.a
        tail = np.geomspace(5.0, 200.0, 400)
        zs = np.concatenate([-tail[::-1], np.linspace(-5.0, 5.0, 2001)[1:-1], tail])
        if params.is_gaussian:
            law = GaussianLaw(params)
            pdf = law.pdf(zs)
            deriv = -zs / 2 * pdf
        else:
            pdf = _inverse_transform(params, zs, "pdf")
            deriv = _inverse_transform(params, zs, "deriv")
        k0 = float(np.max(pdf * (1 + np.abs(zs) ** (1 + a))))
        k1 = float(np.max(np.abs(deriv) * (1 + np.abs(zs) ** (2 + a))))
        logger.debug("Fitted K_{a,0}=%.4g K_{a,1}=%.4g for %s", k0, k1, params.label())
        return FittedConstants(headroom * k0, headroom * k1, headroom)

    return _law_cache.get(("fitted", params, headroom), build)


def psi_cutoff(eps, x):
    """1 on [-1/eps, 1/eps], linear down to 0 at |x| = 1 + 1/eps"""
    value = np.clip(1.0 + 1.0 / eps - np.abs(np.asarray(x, dtype=float)), 0.0, 1.0)
    return float(value) if value.ndim == 0 else value


def lemma_interval_check(params, d, t, m, M, n_s=9, n_x=101):
    """Minimum of J0(s,x) from 1_[-d,d] over s in [t/(2m), t/m], |x| <= d + M/m.

    Returns (minimum, gamma); the lower bound J0 >= gamma holds once m is large.
    """
    measure = indicator(d)
    reach = d + M / m
    xs = np.linspace(-reach, reach, n_x)
    low = min(float(j0_profile(measure, params, s, xs).min()) for s in np.linspace(t / (2 * m), t / m, n_s))
    return low, gamma_const(params)


def main():
    parser = argparse.ArgumentParser(description="Constants of the skewed stable Green function")
    parser.add_argument("--a", type=float, default=1.5, help="Stability index in ]1, 2]")
    parser.add_argument("--delta", type=float, default=0.0, help="Skewness, |delta| <= 2 - a")
    args = parser.parse_args()

    params = make_params(args.a, args.delta)
    fitted = fitted_constants(params)
    print(f"Green function constants for {params.label()}")
    print(f"  Lambda  = {lambda_const(params):.10f}")
    print(f"  gamma   = {gamma_const(params):.10f}")
    print(f"  K_a,0   = {fitted.k0:.6g} (fitted)")
    print(f"  K_a,1   = {fitted.k1:.6g} (fitted)")


if __name__ == "__main__":
    main()
