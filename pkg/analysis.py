"""Estimators that turn simulated fields into moments, Lyapunov exponents,
comparison statistics, positivity tails, Hoelder exponents and convergence curves.

Standard errors are jackknife estimates over replicates; every statistic is
first reduced to one number per replicate so that correlated lattice nodes
never masquerade as independent samples.
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from errors import GridMismatch, InsufficientLadder, InsufficientLags, InsufficientReplicates, OutOfRange
from semigroup_approx import smooth_initial
from spde_solver import Ensemble, make_j0_rows, run_ensemble

logger = logging.getLogger(__name__)


def jackknife(samples):
    """(mean, jackknife standard error) of per-replicate samples"""
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n < 2:
        raise InsufficientReplicates(f"need >= 2 replicates, got {n}")
    total = samples.sum()
    loo = (total - samples) / (n - 1)
    se = math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))
    return float(samples.mean()), se


def _window(ensemble, x, radius):
    if radius is None:
        return [ensemble.node_index(x)]
    js = np.flatnonzero(np.abs(ensemble.xs - x) <= radius + 1e-12)
    if js.size == 0:
        raise OutOfRange(f"no nodes within {radius} of x={x}")
    return js


def _replicate_moment(ensemble, k, js, p):
    return np.mean(np.abs(ensemble.values[:, k][:, js]) ** p, axis=1)


def empirical_moment(ensemble, p, probe, radius=None):
    """E|u(t,x)|^p at probe (t, x); with radius, pooled over nodes within radius of x"""
    if p < 1:
        raise OutOfRange("p must be >= 1")
    t, x = probe
    return jackknife(_replicate_moment(ensemble, ensemble.time_index(t), _window(ensemble, x, radius), p))


@dataclass(frozen=True)
class EnsembleStats:
    n_rep: int
    probes: tuple
    moments: dict
    seed_base: int | None = None

    def rows(self):
        for p, values in sorted(self.moments.items()):
            for (t, x), (est, se) in zip(self.probes, values):
                yield p, t, x, est, se


def ensemble_stats(ensemble, ps, probes, seed_base=None):
    probes = tuple((float(t), float(x)) for t, x in probes)
    moments = {p: [empirical_moment(ensemble, p, probe) for probe in probes] for p in ps}
    return EnsembleStats(ensemble.n_rep, probes, moments, seed_base)


@dataclass(frozen=True)
class LyapunovEstimate:
    lower: float
    upper: float
    slope: float
    stderr: float
    ts: tuple = ()
    log_moments: tuple = ()


def lyapunov_estimate(ensemble, p, x=0.0, radius=None, ts=None):
    """Growth rate of E|u(t,x)|^p along the kept-time ladder.

    slope is the least-squares slope of log E|u|^p over the upper half of the
    ladder; lower/upper are the smallest and largest (1/t) log E|u|^p there.
    stderr adds the regression error and the propagated Monte Carlo error of
    the log-moments in quadrature.
    """
    ladder = np.asarray(ensemble.ts if ts is None else ts, dtype=float)
    if ladder.size < 4:
        raise InsufficientLadder(f"need >= 4 rungs, got {ladder.size}")
    js = _window(ensemble, x, radius)
    logs, log_se = [], []
    for t in ladder:
        m, se = jackknife(_replicate_moment(ensemble, ensemble.time_index(t), js, p))
        if m <= 0:
            raise OutOfRange(f"moment vanished at t={t}")
        logs.append(math.log(m))
        log_se.append(se / m)
    logs, log_se = np.array(logs), np.array(log_se)
    upper_half = slice((ladder.size - 1) // 2, None)
    tu, lu, su = ladder[upper_half], logs[upper_half], log_se[upper_half]
    fit = stats.linregress(tu, lu)
    centred = tu - tu.mean()
    coef = centred / np.sum(centred ** 2)
    mc = math.sqrt(float(np.sum((coef * su) ** 2)))
    reg = 0.0 if not math.isfinite(fit.stderr) else float(fit.stderr)
    rates = lu / tu
    return LyapunovEstimate(float(rates.min()), float(rates.max()), float(fit.slope), math.hypot(reg, mc),
                            tuple(ladder.tolist()), tuple(logs.tolist()))


@dataclass(frozen=True)
class ViolationReport:
    total_cells: int
    violating_cells: int
    max_violation: float
    violation_l1: float
    field_scale: float = 0.0
    refinement_trend: tuple | None = None

    @property
    def violating_fraction(self):
        return self.violating_cells / self.total_cells if self.total_cells else 0.0

    def to_dict(self):
        return {
            "total_cells": self.total_cells,
            "violating_cells": self.violating_cells,
            "violating_fraction": self.violating_fraction,
            "max_violation": self.max_violation,
            "violation_l1": self.violation_l1,
            "field_scale": self.field_scale,
            "refinement_trend": list(self.refinement_trend) if self.refinement_trend else None,
        }


def _violations(u1, u2, tol, cell_area):
    excess = u1 - u2
    bad = excess > tol
    return ViolationReport(
        total_cells=int(excess.size),
        violating_cells=int(np.count_nonzero(bad)),
        max_violation=float(max(excess.max(), 0.0)),
        violation_l1=float(np.sum(np.maximum(excess, 0.0)) * cell_area),
        field_scale=float(max(np.abs(u1).max(), np.abs(u2).max())),
    )


def comparison_report(path1, path2, tol=0.0, t_min=None):
    """Cells with u1 > u2 + tol for two paths on the same lattice, rows with t >= t_min"""
    if path1.grid != path2.grid or path1.u.shape != path2.u.shape:
        raise GridMismatch(f"{path1.grid} vs {path2.grid}")
    rows = slice(None) if t_min is None else np.asarray(path1.ts) >= t_min - 1e-12
    return _violations(path1.u[rows], path2.u[rows], tol, path1.grid.dt * path1.grid.dx)


def ensemble_comparison(ens1, ens2, tol=0.0):
    """comparison_report pooled over replicates sharing noise seeds"""
    if ens1.values.shape != ens2.values.shape or ens1.seeds != ens2.seeds or not np.array_equal(ens1.ts, ens2.ts):
        raise GridMismatch("ensembles differ in shape, kept times or seeds")
    grid = ens1.grid
    area = grid.dt * grid.dx if grid is not None else 1.0
    return _violations(ens1.values, ens2.values, tol, area)


def negativity_report(ensemble, tol=0.0):
    """Cells with u < -tol over every kept row of every replicate"""
    grid = ensemble.grid
    area = grid.dt * grid.dx if grid is not None else 1.0
    return _violations(np.zeros_like(ensemble.values), ensemble.values, tol, area)


def with_refinement_trend(report, reports):
    """Attach the violating fractions of a refinement family, coarsest first"""
    return replace(report, refinement_trend=tuple(r.violating_fraction for r in reports))


def is_non_increasing(values, slack=0.0):
    return all(b <= a + slack for a, b in zip(values, values[1:]))


def strict_ordering_fraction(path1, path2):
    """Fraction of cells with u1 < u2 strictly"""
    if path1.u.shape != path2.u.shape:
        raise GridMismatch("paths differ in shape")
    return float(np.mean(path1.u < path2.u))


def box_minima(ensemble, box):
    t_lo, t_hi, x_lo, x_hi = box
    ks = np.flatnonzero((ensemble.ts >= t_lo - 1e-12) & (ensemble.ts <= t_hi + 1e-12))
    js = np.flatnonzero((ensemble.xs >= x_lo - 1e-12) & (ensemble.xs <= x_hi + 1e-12))
    if ks.size == 0 or js.size == 0:
        raise OutOfRange(f"box {box} holds no lattice cells")
    return ensemble.values[:, ks][:, :, js].min(axis=(1, 2))


def tail_rate(eps, a):
    """|log eps|^(1-1/a) (log|log eps|)^(2-1/a); nan where log|log eps| <= 0"""
    le = abs(math.log(eps))
    if le <= 1:
        return math.nan
    return le ** (1 - 1 / a) * math.log(le) ** (2 - 1 / a)


def density_tail_rate(eps, a):
    """(|log eps| log|log eps|)^(2-1/a)"""
    le = abs(math.log(eps))
    if le <= 1:
        return math.nan
    return (le * math.log(le)) ** (2 - 1 / a)


@dataclass(frozen=True)
class TailPoint:
    eps: float
    probability: float
    ci_low: float
    ci_high: float
    count: int
    ell: float
    ell2: float


def positivity_tail(ensemble, box, eps_ladder, a, confidence=0.99):
    """Empirical P(min over box of u < eps) with Wilson intervals, one point per eps"""
    minima = box_minima(ensemble, box)
    n = minima.size
    points = []
    for eps in eps_ladder:
        count = int(np.count_nonzero(minima < eps))
        ci = stats.binomtest(count, n).proportion_ci(confidence_level=confidence, method="wilson")
        points.append(TailPoint(float(eps), count / n, float(ci.low), float(ci.high), count, tail_rate(eps, a), density_tail_rate(eps, a)))
    return points


@dataclass(frozen=True)
class TailRegression:
    slope: float
    intercept: float
    stderr: float
    upper: float
    n_points: int


def tail_shape_regression(points, column="ell", confidence=0.99):
    """Regress log P on the rate column; upper is the one-sided confidence bound on the slope"""
    usable = [(getattr(p, column), math.log(p.probability)) for p in points
              if p.probability > 0 and math.isfinite(getattr(p, column))]
    if len(usable) < 3:
        raise InsufficientLadder(f"only {len(usable)} eps rungs with nonzero probability")
    xs, ys = map(np.array, zip(*usable))
    fit = stats.linregress(xs, ys)
    df = len(usable) - 2
    upper = fit.slope + stats.t.ppf(confidence, df) * fit.stderr if df > 0 else math.inf
    return TailRegression(float(fit.slope), float(fit.intercept), float(fit.stderr), float(upper), len(usable))


def negative_moment(ensemble, box, p):
    """E[(min over box of u)^(-p)]; dominated by rare events, exploratory only"""
    minima = box_minima(ensemble, box)
    if np.any(minima <= 0):
        logger.warning("%d replicates have a non-positive box minimum", int(np.count_nonzero(minima <= 0)))
        return math.inf, math.inf
    return jackknife(minima ** (-float(p)))


@dataclass(frozen=True)
class HolderFit:
    slope: float
    stderr: float
    r2: float
    steps: tuple = ()
    second_moments: tuple = ()
    flat: bool = False


def _increment_fit(values, step, lags, axis, rows, cols):
    """Log-log fit of the mean squared increment at each lag along axis (1 time, 2 space)"""
    steps, m2 = [], []
    n_k, n_j = values.shape[1], values.shape[2]
    for lag in lags:
        if axis == 1:
            ks = rows[rows + lag < n_k]
            if ks.size == 0:
                continue
            diff = values[:, ks + lag][:, :, cols] - values[:, ks][:, :, cols]
        else:
            js = cols[cols + lag < n_j]
            if js.size == 0:
                continue
            diff = values[:, rows][:, :, js + lag] - values[:, rows][:, :, js]
        steps.append(lag * step)
        m2.append(float(np.mean(diff ** 2)))
    steps, m2 = np.array(steps), np.array(m2)
    if steps.size and np.all(m2 <= 1e-28):
        return HolderFit(0.0, 0.0, 1.0, tuple(steps.tolist()), tuple(m2.tolist()), flat=True)
    keep = m2 > 0
    if np.count_nonzero(keep) < 3:
        raise InsufficientLags(f"only {int(np.count_nonzero(keep))} usable lags")
    fit = stats.linregress(np.log(steps[keep]), np.log(m2[keep]))
    return HolderFit(float(fit.slope), float(fit.stderr), float(fit.rvalue ** 2), tuple(steps.tolist()), tuple(m2.tolist()))


def holder_exponent(ensemble, direction, lags=range(1, 9), t_min=None, x_max=None):
    """Slope of log E|increment|^2 against log lag; 1-1/a in time, a-1 in space.

    Probes use kept rows with t >= t_min (default T/4) and nodes with
    |x| <= x_max (default L/2). Time increments need uniformly spaced rows.
    """
    ts, xs = ensemble.ts, ensemble.xs
    t_min = ts[-1] / 4 if t_min is None else t_min
    x_max = (xs[-1] - xs[0]) / 4 if x_max is None else x_max
    rows = np.flatnonzero(ts >= t_min - 1e-12)
    cols = np.flatnonzero(np.abs(xs) <= x_max + 1e-12)
    if direction == "time":
        gaps = np.diff(ts)
        if gaps.size == 0 or not np.allclose(gaps, gaps[0]):
            raise InsufficientLags("time increments need uniformly spaced kept rows")
        return _increment_fit(ensemble.values, float(gaps[0]), lags, 1, rows, cols)
    if direction == "space":
        return _increment_fit(ensemble.values, float(xs[1] - xs[0]), lags, 2, rows, cols)
    raise OutOfRange(f"direction must be 'time' or 'space', got {direction!r}")


def deterministic_holder_control(measure, params, grid, direction, lags=range(1, 9)):
    """holder_exponent applied to the noise-free field J0 on the solver lattice"""
    values = make_j0_rows(params, measure, grid)[None]
    ens = Ensemble(grid.ts, grid.xs, values, (0,), grid)
    return holder_exponent(ens, direction, lags)


@dataclass(frozen=True)
class CurvePoint:
    x: float
    value: float
    stderr: float
    median: float = math.nan


def weak_convergence(ensemble, phi, lo, hi, measure):
    """E[(<u(t), phi> - <mu, phi>)^2] at every kept time, phi supported in [lo, hi]"""
    target = measure.pair(phi, lo, hi)
    weights = np.asarray(phi(ensemble.xs), dtype=float) * (ensemble.xs[1] - ensemble.xs[0])
    curve = []
    for k, t in enumerate(ensemble.ts):
        gaps = (ensemble.values[:, k] @ weights - target) ** 2
        if gaps.size > 1:
            mean, se = jackknife(gaps)
        else:
            mean, se = float(gaps[0]), 0.0
        curve.append(CurvePoint(float(t), mean, se, float(np.median(gaps))))
    return curve


def approx_convergence(measure, params, rho, eps_ladder, probe, grid, seeds, threads=None, progress=True):
    """E|u(t,x) - u^eps(t,x)|^2 where u^eps starts from smooth_initial(mu, eps), same noise"""
    t, x = probe
    base = run_ensemble(params, measure, rho, grid, seeds, keep_times=[t], threads=threads, progress=progress)
    reference = base.probe(t, x)
    curve = []
    for eps in eps_ladder:
        smooth = smooth_initial(measure, params, eps)
        approx = run_ensemble(params, smooth, rho, grid, seeds, keep_times=[t], threads=threads, progress=progress)
        gaps = (reference - approx.probe(t, x)) ** 2
        mean, se = jackknife(gaps) if gaps.size > 1 else (float(gaps[0]), 0.0)
        curve.append(CurvePoint(float(eps), mean, se, float(np.median(gaps))))
        logger.info("eps=%g: mean squared gap %.4g (median %.4g)", eps, mean, curve[-1].median)
    return curve


def mollified_gap(measure, params, rho, eps_ladder, probe, grid, seeds, threads=None, progress=True):
    """E|u(t,x) - u_eps(t,x)|^2 with u_eps from the mollified D_eps system, same noise lattice"""
    t, x = probe
    base = run_ensemble(params, measure, rho, grid, seeds, keep_times=[t], threads=threads, progress=progress)
    reference = base.probe(t, x)
    curve = []
    for eps in eps_ladder:
        approx = run_ensemble(params, measure, rho, grid, seeds, keep_times=[t], scheme="mollified-sde", eps=eps,
                              threads=threads, progress=progress)
        gaps = (reference - approx.probe(t, x)) ** 2
        mean, se = jackknife(gaps) if gaps.size > 1 else (float(gaps[0]), 0.0)
        curve.append(CurvePoint(float(eps), mean, se, float(np.median(gaps))))
    return curve
