"""The nine experiment kinds behind `fracheat run`.

Each runner receives a RunContext, writes its CSV/SVG/JSON artifacts into
the run directory and returns the acceptance checks that decide the exit
status. Values reported for information only go through RunContext.note.
"""

import logging
import math
import os
import platform
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata

import numpy as np
from scipy import integrate, special, stats

import analysis
from artifacts import save_plot, write_csv, write_json
from config import DEFAULT_PROBES
from errors import GridTooCoarse, InsufficientLadder
from kernel_series import (
    KernelGrid,
    brute_force_l1_mass,
    closed_form_error,
    extrapolate,
    fit_upper_bound_constant,
    k_heat_closed,
    k_kernel,
    k_wave_closed,
    k_wave_series,
    layer_one_mass,
    make_rho,
    moment_upper_bound,
    verify_upper_bound,
)
from semigroup_approx import (
    FunctionTable,
    approx_kernel,
    approx_series_f,
    c_b_sup,
    fit_l2_constant,
    g_eps_apply,
    l1_error,
    l2_error_profile,
    mixture_grid,
    mollified_noise_variance,
    pointwise_limit_probe,
    r_mass_ratio,
)
from spde_solver import (
    SpaceTimeGrid,
    make_j0_rows,
    make_noise,
    mollified_increments,
    replicate_seeds,
    run_ensemble,
    simulate,
)
from stable_green import (
    beta_integral,
    bump,
    green_density,
    green_table,
    green_values,
    j0_cell_profile,
    lambda_const,
    lebesgue,
    lemma_interval_check,
    make_params,
    zero,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Check:
    name: str
    target: str
    value: float
    threshold: float
    passed: bool

    def to_dict(self):
        return {"name": self.name, "target": self.target, "value": self.value, "threshold": self.threshold, "passed": self.passed}


def at_most(name, target, value, threshold):
    return Check(name, target, float(value), float(threshold), bool(value <= threshold))


def at_least(name, target, value, threshold):
    return Check(name, target, float(value), float(threshold), bool(value >= threshold))


def holds(name, target, condition, value=math.nan):
    return Check(name, target, float(value), math.nan, bool(condition))


@dataclass
class RunContext:
    cfg: object
    out_dir: str
    seeds: list
    threads: int | None = None
    progress: bool = True
    exploratory: dict = field(default_factory=dict)

    def path(self, name):
        return os.path.join(self.out_dir, name)

    @property
    def params(self):
        return self.cfg.params.build()

    @property
    def grid(self):
        return self.cfg.grid.build()

    def ensemble(self, measure, rho=None, keep_times=None, grid=None, seeds=None, **kwargs):
        return run_ensemble(self.params, measure, rho or self.cfg.rho.build(), grid or self.grid,
                            self.seeds if seeds is None else seeds, keep_times=keep_times,
                            batch=self.cfg.ensemble.batch, threads=self.threads, progress=self.progress, **kwargs)

    def note(self, name, value):
        self.exploratory[name] = value


# green-checks


def _semigroup_residual(params, s, t, n_probe=13):
    """max |int G(s, x-y) G(t, y) dy - G(s+t, x)| over probes within three widths"""
    a = params.a
    width = (s + t) ** (1 / a)
    step = min(s, t) ** (1 / a) / 40
    ys = np.arange(-60 * width, 60 * width + step, step)
    gt = green_values(params, t, ys)
    probes = np.linspace(-3 * width, 3 * width, n_probe)
    conv = np.array([np.trapezoid(green_values(params, s, x - ys) * gt, ys) for x in probes])
    return float(np.max(np.abs(conv - green_values(params, s + t, probes))))


def _lambda_anchor(a):
    return 1 / (2 * math.sqrt(math.pi)) if a == 2 else special.gamma(1 + 1 / a) / math.pi


def _beta_by_quadrature(a, b):
    fn = lambda y: y ** b / (1 + y ** (2 + a))  # noqa: E731
    head, _ = integrate.quad(fn, 0, 1, epsabs=1e-14, epsrel=1e-12, limit=200)
    tail, _ = integrate.quad(fn, 1, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)
    return head + tail


def run_green_checks(ctx):
    cfg = ctx.cfg
    sets = cfg.ladders.params or ((cfg.params.a, cfg.params.delta),)
    times = cfg.ladders.t or (0.1, 1.0)
    mass_tol = cfg.check("mass_tol", 1e-6)
    semigroup_tol = cfg.check("semigroup_tol", 1e-5)
    checks, rows, series = [], [], {}
    for a, delta in sets:
        params = make_params(a, delta)
        tag = f"a{a:g}_d{delta:g}"
        for t in times:
            width = t ** (1 / a)
            xs = np.linspace(-100 * width, 100 * width, 10001)
            try:
                table = green_table(params, t, xs, mass_tol)
                gap, trunc = abs(table.mass - 1.0), table.trunc_error
                table.to_csv(ctx.path(f"green_{tag}_t{t:g}.csv"))
                if t == max(times):
                    keep = np.abs(xs) <= 8 * width
                    series[params.label()] = (xs[keep], table.values[keep])
            except GridTooCoarse as err:
                logger.warning("%s", err)
                gap, trunc = math.inf, 0.0
            checks.append(at_most(f"mass {params.label()} t={t:g}", "total mass 1 up to reported truncation", gap, mass_tol + trunc))
            rows.append((a, delta, t, gap, trunc))
        t = max(times)
        residual = _semigroup_residual(params, t / 2, t / 2)
        checks.append(at_most(f"semigroup {params.label()}", "G(s) * G(t) = G(s+t)", residual, semigroup_tol))
        pointwise = max(abs(green_density(params, 1.0, x) - float(green_values(params, 1.0, x))) for x in (-2.0, 0.0, 1.5))
        checks.append(at_most(f"pointwise {params.label()}", "quadrature and tabulated G agree", pointwise, cfg.check("pointwise_tol", 1e-7)))
        if delta == 0:
            gap = abs(lambda_const(params) - _lambda_anchor(a))
            checks.append(at_most(f"Lambda {params.label()}", "sup G(1,.) = Gamma(1+1/a)/pi", gap, 1e-6 if a == 2 else 1e-5))
        low, gamma = lemma_interval_check(params, 1.0, 1.0, cfg.check("lemma_m", 8), 1.0)
        ctx.note(f"interval lower bound {params.label()}", {"min_j0": low, "gamma": gamma})

    rng = np.random.default_rng(cfg.ensemble.seed)
    worst = 0.0
    for _ in range(20):
        a = float(rng.uniform(0.2, 3.0))
        b = float(rng.uniform(-0.5, a + 0.5))
        exact = beta_integral(a, b)
        worst = max(worst, abs(exact - _beta_by_quadrature(a, b)) / exact)
    checks.append(at_most("beta integral vs quadrature", "closed form of int y^b/(1+y^(2+a))", worst, 1e-8))
    checks.append(at_most("beta integral anchor", "pi/(2 sqrt 2) at a=2, b=0", abs(beta_integral(2.0, 0.0) - math.pi / (2 * math.sqrt(2))), 1e-12))

    write_csv(ctx.path("green_mass.csv"), ["a", "delta", "t", "mass_gap", "trunc_error"], rows)
    save_plot(ctx.path("green_densities.svg"), series, "x", "G(t,x)", title=f"t={max(times):g}")
    return checks


# kernel-checks


def run_kernel_checks(ctx):
    cfg = ctx.cfg
    g = cfg.grid
    lam = cfg.check("lambda", 1.0)
    tol = cfg.check("series_tol", 1e-8)
    heat = make_params(2.0, 0.0)
    base = KernelGrid(g.T, g.L, cfg.check("kernel_n_t", 64), cfg.check("kernel_n_x", 257))
    half = cfg.check("probe_half_width", 2.0)
    probe_ts = np.linspace(g.T / 4, base.ts[-1], 16)
    probe_xs = np.linspace(-half, half, 16)

    def closed(t, x):
        return k_heat_closed(2.0, lam, t, x)

    errors, tables = [], []
    for grid in (base, base.refined()):
        table = k_kernel(lam, heat, grid, tol)
        tables.append(table)
        errors.append(closed_form_error(table, closed, probe_ts, probe_xs))
        logger.info("Heat kernel series on %dx%d cells: %d terms, max relative error %.3g", grid.n_t, grid.n_x, table.n_terms, errors[-1])
    extrapolated = closed_form_error(extrapolate(*tables), closed, probe_ts, probe_xs)
    logger.info("Extrapolated heat kernel: max relative error %.3g", extrapolated)
    checks = [
        at_most("heat oracle", "series K matches the closed heat kernel", extrapolated, cfg.check("heat_rtol", 1e-3)),
        holds("heat refinement", "halving the spacing reduces the error", errors[1] < errors[0], errors[1] / errors[0]),
    ]
    write_csv(ctx.path("heat_oracle.csv"), ["n_t", "n_x", "extrapolated", "max_rel_error"],
              [(grid.n_t, grid.n_x, 0, e) for grid, e in zip((base, base.refined()), errors)] + [(base.n_t, base.n_x, 1, extrapolated)])

    params = ctx.params
    exact = layer_one_mass(lam, params, g.T)
    brute = brute_force_l1_mass(lam, params, base)
    checks.append(at_most("L1 layer mass", "double convolution matches the Beta-function mass", abs(brute - exact) / exact, cfg.check("l1_mass_rtol", 2e-2)))

    coarse = k_kernel(lam, params, base, tol)
    fine = k_kernel(lam, params, base.refined(), tol)
    t_min, x_max = g.T / 4, g.L / 2
    C = fit_upper_bound_constant(coarse, t_min=t_min, x_max=x_max)
    ok, worst = verify_upper_bound(fine, C, t_min=t_min, x_max=x_max)
    checks.append(at_most("upper bound", "K <= (C/t^(1/a)) G (1 + t^(1/a) e^(gamma t))", worst, 1.0))
    checks.append(at_most("series tail", "remaining series mass below tolerance", coarse.series_tail_bound, 10 * tol * coarse.values.max()))
    coarse.to_csv(ctx.path("k_kernel.csv"), ctx.path("k_kernel.json"), fitted_c=C)

    ts = np.linspace(0.1, 2.0, 12)[:, None]
    xs = np.linspace(-2.0, 2.0, 41)[None, :]
    closed_wave = k_wave_closed(1.0, lam, ts, xs)
    series_wave = k_wave_series(1.0, lam, ts, xs)
    inside = closed_wave > 0
    wave_gap = float(np.max(np.abs(closed_wave - series_wave)[inside] / closed_wave[inside]))
    checks.append(at_most("wave kernel", "Bessel closed form matches its series", wave_gap, 1e-10))

    row = np.searchsorted(coarse.ts, g.T / 2)
    save_plot(ctx.path("k_kernel.svg"), {f"t={coarse.ts[row]:.3g}": (coarse.xs, coarse.values[row])}, "x", "K(t,x)", logy=True)
    return checks


# approx-ladder


def _quadratic_variation(eps, seed, n_t=400, L=4.0, n_x=256):
    grid = SpaceTimeGrid(1.0, L, n_t, n_x, allow_cfl_violation=True)
    incs = mollified_increments(make_noise(grid, seed), eps)
    centre = np.abs(grid.xs) <= L / 4
    return float(np.mean(np.sum(incs[:, centre] ** 2, axis=0))), grid


def run_approx_ladder(ctx):
    cfg = ctx.cfg
    params = ctx.params
    eps_list = sorted(cfg.ladders.eps, reverse=True)
    t_list = cfg.ladders.t or (0.1, 0.25, 0.5, 1.0)
    checks = []

    for b in (-1.0, 0.0, 0.5, 1 / 1.5):
        checks.append(at_most(f"f_b(500) b={b:.4g}", "f_b(z) -> 1", abs(approx_series_f(b, 500.0) - 1.0), 0.02))
        checks.append(at_least(f"sup f_b b={b:.4g}", "C_b finite and >= 1", c_b_sup(b), 1.0))
    f0_gap = max(abs(approx_series_f(0.0, z) - (1 - math.exp(-z))) for z in (0.1, 1.0, 10.0))
    checks.append(at_most("f_0 closed form", "f_0(z) = 1 - e^(-z)", f0_gap, 1e-12))
    checks.append(holds("f_-1(0)", "f_-1(0) = 1", approx_series_f(-1.0, 0.0) == 1.0))

    rows, worst_mass = [], 0.0
    for eps in eps_list:
        for t in t_list:
            kernel = approx_kernel(params, eps, t, mixture_grid(params, eps, t))
            worst_mass = max(worst_mass, abs(kernel.mass + kernel.trunc_error - (1 - math.exp(-t / eps))))
            numeric, bound = l1_error(params, eps, t)
            rows.append((eps, t, numeric, bound))
            checks.append(at_most(f"L1 eps={eps:g} t={t:g}", "int |R_eps - G| <= e^(-t/eps) + C sqrt(eps/t)", numeric, bound))
    checks.append(at_most("R mass identity", "int R_eps = 1 - e^(-t/eps)", worst_mass, cfg.check("mass_tol", 1e-8)))
    write_csv(ctx.path("l1_lattice.csv"), ["eps", "t", "numeric", "bound"], rows)

    T = cfg.check("l2_T", 1.0)
    profile = [l2_error_profile(params, eps, T) for eps in eps_list]
    integrals = [p.integral for p in profile]
    checks.append(holds("L2 profile", "strictly decreasing along the eps ladder", all(b < a for a, b in zip(integrals, integrals[1:])), integrals[-1]))
    write_csv(ctx.path("l2_profile.csv"), ["eps", "integral", "r_mass"], [(e, p.integral, p.r_mass) for e, p in zip(eps_list, profile)])
    save_plot(ctx.path("l2_profile.svg"), {"int (R - G)^2": (eps_list, integrals)}, "eps", "L2 gap", logx=True, logy=True)

    C = fit_l2_constant(params, eps_list, t_list)
    fresh = [(0.7 * e, 1.3 * t) for e in eps_list for t in t_list]
    worst_ratio = max(r_mass_ratio(params, e, t) for e, t in fresh)
    checks.append(at_most("L2 constant", "t^(1/a) int R_eps^2 <= fitted C on fresh points", worst_ratio, C))
    ctx.note("fitted C_a_delta", C)

    probe_t = cfg.check("probe_t", 0.5)
    rows_r, g_ref = pointwise_limit_probe(params, probe_t, [0.0], eps_list)
    gaps = [abs(r[0] - g_ref[0]) for r in rows_r]
    checks.append(holds("pointwise limit", "R_eps(t,0) -> G(t,0)", all(b <= a for a, b in zip(gaps, gaps[1:])), gaps[-1]))

    xs = np.linspace(-10.0, 10.0, 801)
    ones = g_eps_apply(FunctionTable(xs, np.ones_like(xs)), params, eps_list[0], probe_t)
    checks.append(at_most("semigroup on constants", "exp(t D_eps) 1 = 1", float(np.max(np.abs(ones.values - 1.0))), 1e-10))
    s = cfg.check("apply_s", 0.25)
    applied = g_eps_apply(FunctionTable(xs, green_values(params, s, xs)), params, eps_list[-1], probe_t)
    inner = np.abs(xs) <= 5.0
    gap = float(np.trapezoid(np.abs(applied.values - green_values(params, s + probe_t, xs))[inner], xs[inner]))
    checks.append(at_most("semigroup on G(s)", "exp(t D_eps) G(s) close to G(s+t)", gap, l1_error(params, eps_list[-1], probe_t)[1]))

    for eps in cfg.check("qv_eps", [0.05]):
        qv, grid = _quadratic_variation(eps, cfg.ensemble.seed)
        expected = mollified_noise_variance(eps, grid.dx, grid.L)
        checks.append(at_most(f"quadratic variation eps={eps:g}", "W^eps has variance rate 1/sqrt(4 pi eps)",
                              abs(qv - expected) / expected, 4 * math.sqrt(2 / grid.n_t)))
        ctx.note(f"1/sqrt(4 pi eps) eps={eps:g}", {"continuum": 1 / math.sqrt(4 * math.pi * eps), "lattice": expected})

    if len(ctx.seeds) >= 2:
        measure = cfg.measure.build()
        rho = cfg.rho.build()
        probe = (probe_t, cfg.check("probe_x", 0.0))
        curve = analysis.approx_convergence(measure, params, rho, cfg.check("mc_eps", [0.2, 0.1, 0.05, 0.025]), probe,
                                            ctx.grid, ctx.seeds, ctx.threads, ctx.progress)
        medians = [c.median for c in curve]
        checks.append(holds("smoothed initial data", "median gap decreases along eps", all(b < a for a, b in zip(medians, medians[1:])), medians[-1]))
        write_csv(ctx.path("approx_convergence.csv"), ["eps", "mean_gap", "stderr", "median_gap"], [(c.x, c.value, c.stderr, c.median) for c in curve])

        smooth_data = cfg.measure2.build() if cfg.measure2 is not None else bump()
        curve = analysis.mollified_gap(smooth_data, params, rho, cfg.check("mollified_eps", [0.2, 0.1, 0.05]), probe,
                                       ctx.grid, ctx.seeds, ctx.threads, ctx.progress)
        means = [c.value for c in curve]
        checks.append(holds("mollified noise", "L2 gap to the mild solution decreases along eps", all(b < a for a, b in zip(means, means[1:])), means[-1]))
        write_csv(ctx.path("mollified_gap.csv"), ["eps", "mean_gap", "stderr", "median_gap"], [(c.x, c.value, c.stderr, c.median) for c in curve])
    return checks


# simulate


def _probes(cfg):
    return [tuple(p) for p in cfg.check("probes", DEFAULT_PROBES)]


def run_simulate(ctx):
    cfg = ctx.cfg
    params, grid = ctx.params, ctx.grid
    measure, rho = cfg.measure.build(), cfg.rho.build()
    noise = make_noise(grid, ctx.seeds[0])
    checks = []

    quiet = simulate(params, measure, make_rho("zero"), grid, noise)
    exact = make_j0_rows(params, measure, grid)
    checks.append(at_most("rho = 0", "u = J0 exactly", float(np.max(np.abs(quiet.u - exact))), 0.0))
    if rho.rho_zero == 0:
        null = simulate(params, zero(), rho, grid, noise)
        checks.append(at_most("mu = 0", "u = 0 exactly", float(np.max(np.abs(null.u))), 0.0))

    probes = _probes(cfg)
    keep = sorted({t for t, _ in probes} | {grid.T})
    z = cfg.check("se_multiplier", 3.0)
    measures = [("measure", measure)] + ([("measure2", cfg.measure2.build())] if cfg.measure2 is not None else [])
    rows = []
    for label, mu in measures:
        ens = ctx.ensemble(mu, keep_times=keep)
        for t, x in probes:
            mean, se = analysis.jackknife(ens.probe(t, x))
            target = float(j0_cell_profile(mu, params, t, np.array([x]), grid.dx)[0])
            m2, se2 = analysis.empirical_moment(ens, 2, (t, x))
            bound = moment_upper_bound(2, mu, rho, params, t, x)
            if label == "measure":
                checks.append(at_most(f"mean t={t:g} x={x:g}", "E u = J0", abs(mean - target), z * se))
            checks.append(at_most(f"second moment {mu.name} t={t:g} x={x:g}", "E u^2 <= moment bound", m2 - z * se2, bound))
            rows.append((mu.name, t, x, mean, se, target, m2, se2, bound))
        if label == "measure" and rho.rho_zero == 0:
            neg = analysis.negativity_report(ens)
            checks.append(at_most("nonnegative cells", "fraction of cells with u < 0", neg.violating_fraction, cfg.check("negative_fraction", 0.01)))
            checks.append(at_most("negative magnitude", "u >= -1e-3 max |u|", neg.max_violation, 1e-3 * neg.field_scale))
            ctx.note("negativity", neg.to_dict())
        if label == "measure":
            k = ens.time_index(grid.T)
            save_plot(ctx.path("mean_profile.svg"),
                      {"ensemble mean": (ens.xs, ens.values[:, k].mean(axis=0)), "J0": (grid.xs, j0_cell_profile(mu, params, grid.T, grid.xs, grid.dx))},
                      "x", f"u({grid.T:g}, x)")
    write_csv(ctx.path("moments.csv"), ["measure", "t", "x", "mean", "mean_se", "j0", "m2", "m2_se", "bound"], rows)

    path = simulate(params, measure, rho, grid, noise)
    path.to_csv(ctx.path("path_0.csv"), ctx.path("path_0.json"))

    subset = ctx.seeds[:min(len(ctx.seeds), cfg.check("warm_start_replicates", 200))]
    t, x = probes[0]
    for mode in ("drop", "lumped"):
        ens = ctx.ensemble(measure, keep_times=[t], seeds=subset, warm_start=mode)
        ctx.note(f"E u^2 warm_start={mode}", analysis.empirical_moment(ens, 2, (t, x)))
    return checks


# compare


def run_compare(ctx):
    cfg = ctx.cfg
    params, grid = ctx.params, ctx.grid
    mu1, mu2 = cfg.measure.build(), cfg.measure2.build()
    rho = cfg.rho.build()
    checks = []

    linear = make_rho("linear", cfg.check("linear_lam", 1.0))
    n_linear = min(len(ctx.seeds), cfg.check("linear_replicates", 20))
    # dt/dx small keeps the per-cell noise factor above -1 on the linear run
    fine_dt = SpaceTimeGrid(grid.T, grid.L, cfg.check("linear_n_t", grid.n_t * 16), grid.n_x, grid.allow_cfl_violation)
    linear_t_min = cfg.check("linear_t_min", grid.T / 4)
    scaled_gap, worst_violations = 0.0, 0
    for seed in ctx.seeds[:n_linear]:
        noise = make_noise(fine_dt, seed)
        p1 = simulate(params, mu1, linear, fine_dt, noise)
        p2 = simulate(params, mu1.scaled(2.0), linear, fine_dt, noise)
        scaled_gap = max(scaled_gap, float(np.max(np.abs(p2.u - 2 * p1.u))))
        report1 = analysis.comparison_report(p1, p2, tol=1e-12, t_min=linear_t_min)
        worst_violations = max(worst_violations, report1.violating_cells)
    checks.append(at_most("linear scaling", "mu2 = 2 mu1 gives u2 = 2 u1 exactly", scaled_gap, 0.0))
    checks.append(at_most("linear ordering", f"zero violations at tol 1e-12 for t >= {linear_t_min:g}", worst_violations, 0))

    reports = []
    n_ref = min(len(ctx.seeds), cfg.check("refinement_replicates", 20))
    for level in cfg.ladders.levels:
        fine = SpaceTimeGrid(grid.T, grid.L, grid.n_t * level * level, grid.n_x * level, grid.allow_cfl_violation)
        seeds = replicate_seeds(cfg.ensemble.seed + level, n_ref) if level != 1 else ctx.seeds[:n_ref]
        e1 = ctx.ensemble(mu1, grid=fine, seeds=seeds)
        e2 = ctx.ensemble(mu2, grid=fine, seeds=seeds)
        reports.append(analysis.ensemble_comparison(e1, e2))
        logger.info("Refinement level %d: violating fraction %.4g", level, reports[-1].violating_fraction)
    report = analysis.with_refinement_trend(reports[0], reports)
    fractions = list(report.refinement_trend)
    checks.append(at_most("violating fraction", "ordering holds at >= 99% of cells", fractions[0], cfg.check("max_fraction", 0.01)))
    checks.append(holds("refinement trend", "violating fraction non-increasing under refinement",
                        analysis.is_non_increasing(fractions, cfg.check("trend_slack", 0.002)), fractions[-1]))
    scale = report.field_scale or 1.0
    checks.append(at_most("violation magnitude", "max violation below 1e-3 of the field scale", report.max_violation / scale, cfg.check("max_relative_violation", 1e-3)))
    write_csv(ctx.path("refinement.csv"), ["level", "violating_fraction", "max_violation", "violation_l1"],
              [(lv, r.violating_fraction, r.max_violation, r.violation_l1) for lv, r in zip(cfg.ladders.levels, reports)])
    save_plot(ctx.path("refinement.svg"), {"violating fraction": (list(cfg.ladders.levels), fractions)}, "refinement level", "fraction")

    noise = make_noise(grid, ctx.seeds[0])
    p1 = simulate(params, mu1, rho, grid, noise)
    p2 = simulate(params, mu2, rho, grid, noise)
    pair = analysis.comparison_report(p1, p2)
    p1.to_csv(ctx.path("path_mu1.csv"), ctx.path("path_mu1.json"), pair.to_dict())
    p2.to_csv(ctx.path("path_mu2.csv"), ctx.path("path_mu2.json"), pair.to_dict())
    ctx.note("strict ordering fraction", analysis.strict_ordering_fraction(p1, p2))
    ctx.note("comparison", report.to_dict())
    return checks


# positivity


def run_positivity(ctx):
    cfg = ctx.cfg
    params, grid = ctx.params, ctx.grid
    box = tuple(cfg.ladders.box) or (grid.T / 2, grid.T, -1.0, 1.0)
    keep = [t for t in grid.ts if box[0] - 1e-12 <= t <= box[1] + 1e-12]
    ens = ctx.ensemble(cfg.measure.build(), keep_times=keep)
    minima = analysis.box_minima(ens, box)
    if cfg.ladders.eps:
        ladder = sorted(cfg.ladders.eps, reverse=True)
    else:
        qs = np.quantile(minima, cfg.check("quantiles", [0.5, 0.25, 0.1, 0.05, 0.025, 0.01]))
        ladder = sorted({float(q) for q in qs if 0 < q < 1 / math.e}, reverse=True)
    ladder = [float(minima.max()) * 1.01 + 1e-300] + ladder
    points = analysis.positivity_tail(ens, box, ladder, params.a)
    checks = [
        at_least("top rung", "eps above every minimum has probability 1", points[0].probability, 1.0),
        holds("nested events", "probabilities non-increasing as eps decreases",
              analysis.is_non_increasing([p.probability for p in points]), points[-1].probability),
    ]
    fit = analysis.tail_shape_regression(points[1:], "ell")
    checks.append(at_most("tail shape", "log P decreasing in the rate transform (99% one-sided)", fit.upper, 0.0))
    try:
        ctx.note("density rate regression slope", analysis.tail_shape_regression(points[1:], "ell2").slope)
    except InsufficientLadder:
        pass
    ctx.note("negative moment p=1", analysis.negative_moment(ens, box, 1))
    write_csv(ctx.path("positivity_tail.csv"), ["eps", "probability", "ci_low", "ci_high", "count", "ell", "ell2"],
              [(p.eps, p.probability, p.ci_low, p.ci_high, p.count, p.ell, p.ell2) for p in points])
    usable = [p for p in points[1:] if p.probability > 0 and math.isfinite(p.ell)]
    save_plot(ctx.path("positivity_tail.svg"), {"P(min < eps)": ([p.ell for p in usable], [p.probability for p in usable])},
              "rate transform", "probability", logy=True)
    return checks


# holder


def run_holder(ctx):
    cfg = ctx.cfg
    params, grid = ctx.params, ctx.grid
    window = grid.ts[-min(grid.n_t, cfg.check("holder_rows", 16)):]
    ens = ctx.ensemble(cfg.measure.build(), keep_times=window.tolist())
    tol = cfg.check("slope_tol", 0.15)
    checks, rows = [], []
    for direction, expected in (("time", 1 - 1 / params.a), ("space", params.a - 1)):
        fit = analysis.holder_exponent(ens, direction)
        checks.append(at_most(f"{direction} exponent", f"increment slope {expected:.3g}", abs(fit.slope - expected), tol))
        rows.extend((direction, s, m) for s, m in zip(fit.steps, fit.second_moments))
        ctx.note(f"{direction} fit", {"slope": fit.slope, "stderr": fit.stderr, "r2": fit.r2})
    flat = analysis.deterministic_holder_control(lebesgue(), params, grid, "space")
    checks.append(at_most("flat control", "J0 from Lebesgue data has no increments", abs(flat.slope), 1e-12))
    smooth = analysis.deterministic_holder_control(bump(), params, grid, "space")
    checks.append(at_least("smooth control", "regression R^2 on a smooth field", smooth.r2, cfg.check("control_r2", 0.95)))
    write_csv(ctx.path("holder_increments.csv"), ["direction", "lag", "second_moment"], rows)
    series = {}
    for direction in ("time", "space"):
        pts = [(s, m) for d, s, m in rows if d == direction]
        series[direction] = ([s for s, _ in pts], [m for _, m in pts])
    save_plot(ctx.path("holder_increments.svg"), series, "lag", "E |increment|^2", logx=True, logy=True)
    return checks


# weak-convergence


def smooth_bump(x):
    """exp(1 - 1/(1 - x^2)) on (-1, 1), equal to 1 at 0"""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1
    safe = np.where(inside, 1 - x * x, 1.0)
    return np.where(inside, np.exp(1 - 1 / safe), 0.0)


def run_weak_convergence(ctx):
    cfg = ctx.cfg
    params, grid = ctx.params, ctx.grid
    measure = cfg.measure.build()
    ladder = sorted(cfg.ladders.t, reverse=True)
    ens = ctx.ensemble(measure, keep_times=ladder)
    curve = sorted(analysis.weak_convergence(ens, smooth_bump, -1.0, 1.0, measure), key=lambda c: -c.x)
    values = [c.value for c in curve]
    checks = [
        holds("decreasing gap", "E(<u(t),phi> - <mu,phi>)^2 decreases as t -> 0", all(b < a for a, b in zip(values, values[1:])), values[-1]),
        at_least("gap ratio", "first rung / last rung", values[0] / values[-1] if values[-1] > 0 else math.inf, cfg.check("min_ratio", 5.0)),
    ]
    if measure.atoms == ((0.0, 1.0),) and not measure.has_density:
        checks.append(at_most("point evaluation", "<delta_0, phi> = phi(0) = 1", abs(measure.pair(smooth_bump, -1.0, 1.0) - 1.0), 1e-12))
    quiet = ctx.ensemble(measure, rho=make_rho("zero"), keep_times=ladder, seeds=ctx.seeds[:2])
    det = sorted(analysis.weak_convergence(quiet, smooth_bump, -1.0, 1.0, measure), key=lambda c: -c.x)
    ctx.note("noise-free gaps", [(c.x, c.value) for c in det])
    write_csv(ctx.path("weak_convergence.csv"), ["t", "gap", "stderr", "median"], [(c.x, c.value, c.stderr, c.median) for c in curve])
    save_plot(ctx.path("weak_convergence.svg"), {"squared gap": ([c.x for c in curve], values)}, "t", "gap",
              logx=True, logy=True, errors={"squared gap": [c.stderr for c in curve]})
    return checks


# intermittency


def run_intermittency(ctx):
    cfg = ctx.cfg
    grid = ctx.grid
    measure = cfg.measure.build()
    ladder = sorted(cfg.ladders.t)
    radius = cfg.check("radius", grid.L / 4)
    ens = ctx.ensemble(measure, keep_times=ladder)
    z_zero = cfg.check("zero_slope_multiplier", 3.0)
    z_pos = float(stats.norm.ppf(0.99))
    checks, rows = [], []
    for p in cfg.ladders.p or (1, 2):
        est = analysis.lyapunov_estimate(ens, p, 0.0, radius)
        rows.extend((p, t, lm) for t, lm in zip(est.ts, est.log_moments))
        ctx.note(f"Lyapunov p={p}", {"lower": est.lower, "upper": est.upper, "slope": est.slope, "stderr": est.stderr})
        if p == 1:
            checks.append(at_most("p=1 slope", "first moment does not grow", abs(est.slope), z_zero * est.stderr + 1e-12))
        elif p == 2:
            checks.append(at_least("p=2 slope", "second moment grows (99% one-sided)", est.slope - z_pos * est.stderr, 0.0))
    quiet = ctx.ensemble(measure, rho=make_rho("zero"), keep_times=ladder, seeds=ctx.seeds[:2])
    flat = analysis.lyapunov_estimate(quiet, 2, 0.0, radius)
    checks.append(at_most("noise-free slope", "J0 = 1 has zero growth", abs(flat.slope), 1e-10))
    write_csv(ctx.path("lyapunov.csv"), ["p", "t", "log_moment"], rows)
    series = {f"p={p}": ([t for q, t, _ in rows if q == p], [lm for q, _, lm in rows if q == p]) for p in cfg.ladders.p or (1, 2)}
    save_plot(ctx.path("lyapunov.svg"), series, "t", "log E|u|^p")
    return checks


@dataclass(frozen=True)
class Experiment:
    kind: str
    description: str
    target: str
    runner: object


CATALOG = {
    e.kind: e
    for e in (
        Experiment("green-checks", "Green function mass, semigroup, Lambda and Beta-integral anchors",
                   "Green function lemma: unit mass, semigroup, Lambda and Beta-integral identities", run_green_checks),
        Experiment("kernel-checks", "K series vs the heat closed form, layer mass and the K upper bound",
                   "second-moment theorem: K series, closed forms and the K upper bound", run_kernel_checks),
        Experiment("approx-ladder", "Discrete-generator kernel errors, f_b series and approximation ladders",
                   "initial-data approximation theorem: smoothed and mollified solutions converge to u", run_approx_ladder),
        Experiment("simulate", "Solver sanity: J0 reproduction, mean preservation and moment bound",
                   "second-moment theorem: E u^2 below the K bound for the mild solution", run_simulate),
        Experiment("compare", "Coupled runs from ordered initial data sharing one noise",
                   "weak comparison theorem: mu1 <= mu2 gives u1 <= u2", run_compare),
        Experiment("positivity", "Lower tail of the box minimum and its decay shape",
                   "strict positivity theorem: lower-tail rate of the box minimum", run_positivity),
        Experiment("holder", "Moment Hoelder exponents of time and space increments",
                   "Hoelder regularity theorem: exponents 1 - 1/a in time and a - 1 in space", run_holder),
        Experiment("weak-convergence", "Pairing <u(t), phi> approaching <mu, phi> as t -> 0",
                   "weak convergence theorem: <u(t), phi> -> <mu, phi> as t -> 0", run_weak_convergence),
        Experiment("intermittency", "Lyapunov slopes of the first and second moments",
                   "full intermittency corollary: Lyapunov slopes zero at p = 1, positive at p = 2", run_intermittency),
    )
}


def list_experiments():
    return [(e.kind, e.description, e.target) for e in CATALOG.values()]


def _versions():
    out = {"python": platform.python_version()}
    for name in ("numpy", "scipy", "matplotlib", "tqdm"):
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = "unknown"
    return out


def run_experiment(cfg, output_dir=None, threads=None, progress=True):
    """Run one configured experiment; returns (report, output directory)"""
    out_dir = output_dir or cfg.output.directory
    os.makedirs(out_dir, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    start = time.time()
    seeds = replicate_seeds(cfg.ensemble.seed, cfg.ensemble.replicates)
    ctx = RunContext(cfg, out_dir, seeds, threads, progress)
    logger.info("Running %s (%s) into %s", cfg.kind, cfg.name or "unnamed", out_dir)
    checks = CATALOG[cfg.kind].runner(ctx)
    report = {
        "experiment": cfg.kind,
        "name": cfg.name,
        "passed": all(c.passed for c in checks),
        "checks": [c.to_dict() for c in checks],
        "exploratory": ctx.exploratory,
    }
    write_json(os.path.join(out_dir, "report.json"), report)
    write_json(os.path.join(out_dir, "run_manifest.json"), {
        "config": cfg.to_dict(),
        "seeds": {"base": cfg.ensemble.seed, "replicates": seeds},
        "versions": _versions(),
        "started": started,
        "generation_time": time.time() - start,
    })
    return report, out_dir
