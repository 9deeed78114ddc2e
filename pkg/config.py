"""Experiment configuration: TOML file -> frozen ExperimentConfig.

Sections and keys:

    [experiment] kind, name
    [params]     a, delta
    [measure]    kind = delta | lebesgue | indicator | bump | zero | custom
                 location, mass, half_width, level, atoms = [[x, m], ...],
                 density_x, density_y, tail
    [measure2]   same keys; second initial condition for `compare`
    [rho]        kind = linear | sin | affine | zero; lam, shift
    [grid]       T, L, n_t, n_x, allow_cfl_violation
    [ensemble]   replicates, seed, batch
    [ladders]    eps, t, p, levels, params = [[a, delta], ...], box = [t_lo, t_hi, x_lo, x_hi]
    [checks]     thresholds read by the experiment runners (free-form numbers/bools)
    [output]     directory

Every precondition a runner relies on is checked here, before any compute,
and failures raise ConfigError naming the dotted field.
"""

import dataclasses
import math
import tomllib
from dataclasses import dataclass, field

from errors import ConfigError, OutOfRange
from kernel_series import make_rho
from spde_solver import SpaceTimeGrid
from stable_green import (
    InitialMeasure,
    bump,
    delta,
    indicator,
    lebesgue,
    make_params,
    measure_leq,
    zero,
)

KINDS = (
    "green-checks",
    "kernel-checks",
    "approx-ladder",
    "simulate",
    "compare",
    "positivity",
    "holder",
    "weak-convergence",
    "intermittency",
)

MEASURE_KINDS = ("delta", "lebesgue", "indicator", "bump", "zero", "custom")

DEFAULT_PROBES = ((0.5, 0.0), (0.25, 0.0), (0.5, 0.5))

# free-form checks that must be nonnegative numbers when given
THRESHOLD_KEYS = (
    "heat_rtol",
    "l1_mass_rtol",
    "mass_tol",
    "max_fraction",
    "max_relative_violation",
    "min_ratio",
    "negative_fraction",
    "pointwise_tol",
    "se_multiplier",
    "semigroup_tol",
    "slope_tol",
    "trend_slack",
    "zero_slope_multiplier",
)


@dataclass(frozen=True)
class ParamsConfig:
    a: float = 1.5
    delta: float = 0.0

    def build(self):
        return make_params(self.a, self.delta)


@dataclass(frozen=True)
class MeasureConfig:
    kind: str = "delta"
    location: float = 0.0
    mass: float = 1.0
    half_width: float = 1.0
    level: float = 1.0
    atoms: tuple = ()
    density_x: tuple = ()
    density_y: tuple = ()
    tail: float | None = None

    def build(self):
        if self.kind == "delta":
            return delta(self.location, self.mass)
        if self.kind == "lebesgue":
            return lebesgue(self.level)
        if self.kind == "indicator":
            return indicator(self.half_width, self.level)
        if self.kind == "bump":
            return bump(self.half_width, self.level)
        if self.kind == "zero":
            return zero()
        return InitialMeasure(atoms=self.atoms, density_x=self.density_x, density_y=self.density_y, tail=self.tail)


@dataclass(frozen=True)
class RhoConfig:
    kind: str = "linear"
    lam: float = 1.0
    shift: float = 0.0

    def build(self):
        return make_rho(self.kind, self.lam, self.shift)


@dataclass(frozen=True)
class GridConfig:
    T: float = 1.0
    L: float = 8.0
    n_t: int = 64
    n_x: int = 128
    allow_cfl_violation: bool = False

    def build(self):
        return SpaceTimeGrid(self.T, self.L, self.n_t, self.n_x, self.allow_cfl_violation)


@dataclass(frozen=True)
class EnsembleConfig:
    replicates: int = 100
    seed: int = 20240601
    batch: int = 256


@dataclass(frozen=True)
class LaddersConfig:
    eps: tuple = ()
    t: tuple = ()
    p: tuple = ()
    levels: tuple = ()
    params: tuple = ()
    box: tuple = ()


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "runs/default"


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    name: str = ""
    params: ParamsConfig = field(default_factory=ParamsConfig)
    measure: MeasureConfig = field(default_factory=MeasureConfig)
    measure2: MeasureConfig | None = None
    rho: RhoConfig = field(default_factory=RhoConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    ladders: LaddersConfig = field(default_factory=LaddersConfig)
    checks: dict = field(default_factory=dict)
    output: OutputConfig = field(default_factory=OutputConfig)

    def check(self, key, default):
        return self.checks.get(key, default)

    def to_dict(self):
        doc = {"experiment": {"kind": self.kind, "name": self.name}}
        for name in ("params", "measure", "measure2", "rho", "grid", "ensemble", "ladders", "output"):
            section = getattr(self, name)
            if section is not None:
                doc[name] = {k: _plain(v) for k, v in dataclasses.asdict(section).items() if v is not None}
        doc["checks"] = dict(self.checks)
        return doc

    @classmethod
    def from_dict(cls, doc):
        return parse_config(doc)


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def _frozen(value):
    if isinstance(value, list):
        return tuple(_frozen(v) for v in value)
    return value


def _section(doc, name, section_cls):
    raw = doc.get(name, {})
    if not isinstance(raw, dict):
        raise ConfigError(name, "must be a table")
    known = {f.name: f for f in dataclasses.fields(section_cls)}
    values = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"{name}.{key}", "unknown key")
        values[key] = _frozen(value)
    try:
        return section_cls(**values)
    except TypeError as err:
        raise ConfigError(name, str(err)) from err


def _number(path, value, lo=None, hi=None, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    if lo is not None and value < lo:
        raise ConfigError(path, f"must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(path, f"must be <= {hi}, got {value}")


def _validate_params(path, a, delta_):
    _number(f"{path}.a", a)
    _number(f"{path}.delta", delta_)
    if not (1.0 < a <= 2.0):
        raise ConfigError(f"{path}.a", f"{a} outside ]1, 2]")
    if abs(delta_) > 2.0 - a + 1e-12:
        raise ConfigError(f"{path}.delta", f"|delta| must be <= 2 - a = {2.0 - a:g}")
    make_params(a, delta_)


def _validate_measure(path, m):
    if m.kind not in MEASURE_KINDS:
        raise ConfigError(f"{path}.kind", f"unknown measure kind {m.kind!r}")
    for key in ("location", "mass", "half_width", "level"):
        _number(f"{path}.{key}", getattr(m, key))
    if m.kind == "delta" and m.mass <= 0:
        raise ConfigError(f"{path}.mass", "must be > 0")
    if m.kind in ("indicator", "bump") and m.half_width <= 0:
        raise ConfigError(f"{path}.half_width", "must be > 0")
    if m.kind != "zero" and m.level < 0:
        raise ConfigError(f"{path}.level", "must be >= 0")
    try:
        return m.build()
    except OutOfRange as err:
        raise ConfigError(f"{path}.{m.kind}", str(err)) from err


def _validate_grid(cfg):
    g = cfg.grid
    _number("grid.T", g.T, lo=1e-12)
    _number("grid.L", g.L, lo=1e-12)
    _number("grid.n_t", g.n_t, lo=1, integer=True)
    _number("grid.n_x", g.n_x, lo=2, integer=True)
    grid = g.build()
    try:
        grid.check_cfl(cfg.params.a)
    except OutOfRange as err:
        raise ConfigError("grid.n_t", str(err)) from err
    return grid


def _validate_ladders(cfg, grid):
    lad = cfg.ladders
    for i, e in enumerate(lad.eps):
        _number(f"ladders.eps[{i}]", e, lo=1e-300)
    for i, t in enumerate(lad.t):
        _number(f"ladders.t[{i}]", t, lo=1e-300)
    for i, p in enumerate(lad.p):
        _number(f"ladders.p[{i}]", p, lo=1, integer=True)
    for i, lv in enumerate(lad.levels):
        _number(f"ladders.levels[{i}]", lv, lo=1, integer=True)
    for i, pair in enumerate(lad.params):
        if not isinstance(pair, tuple) or len(pair) != 2:
            raise ConfigError(f"ladders.params[{i}]", "expected [a, delta]")
        _validate_params(f"ladders.params[{i}]", *pair)
    if lad.box and len(lad.box) != 4:
        raise ConfigError("ladders.box", "expected [t_lo, t_hi, x_lo, x_hi]")
    if cfg.kind in ("intermittency", "weak-convergence", "simulate", "holder", "positivity"):
        for i, t in enumerate(lad.t):
            try:
                grid.row_index(t)
            except OutOfRange as err:
                raise ConfigError(f"ladders.t[{i}]", str(err)) from err
    if cfg.kind == "intermittency" and len(lad.t) < 4:
        raise ConfigError("ladders.t", "the Lyapunov fit needs at least 4 rungs")
    if cfg.kind == "weak-convergence" and len(lad.t) < 2:
        raise ConfigError("ladders.t", "need at least 2 rungs")
    if cfg.kind == "approx-ladder" and len(lad.eps) < 4:
        raise ConfigError("ladders.eps", "need at least 4 rungs")
    if cfg.kind == "compare" and len(lad.levels) < 3:
        raise ConfigError("ladders.levels", "the refinement trend needs 3 levels")


def _lattice_point(path, grid, t, x):
    try:
        grid.row_index(t)
        grid.node_index(x)
    except OutOfRange as err:
        raise ConfigError(path, str(err)) from err


def _eps_list(path, values):
    if not isinstance(values, tuple) or len(values) < 2:
        raise ConfigError(path, "expected a list of at least 2 eps values")
    for i, e in enumerate(values):
        _number(f"{path}[{i}]", e, lo=1e-300)


def _validate_checks(cfg, grid):
    for key in THRESHOLD_KEYS:
        if key in cfg.checks:
            _number(f"checks.{key}", cfg.checks[key], lo=0)
    if cfg.kind == "simulate":
        probes = cfg.check("probes", DEFAULT_PROBES)
        if not isinstance(probes, tuple) or not probes:
            raise ConfigError("checks.probes", "expected a non-empty list of [t, x]")
        for i, probe in enumerate(probes):
            if not isinstance(probe, tuple) or len(probe) != 2:
                raise ConfigError(f"checks.probes[{i}]", "expected [t, x]")
            _number(f"checks.probes[{i}]", probe[0], lo=1e-300)
            _number(f"checks.probes[{i}]", probe[1])
            _lattice_point(f"checks.probes[{i}]", grid, *probe)
    if cfg.kind == "approx-ladder":
        probe_t, probe_x = cfg.check("probe_t", 0.5), cfg.check("probe_x", 0.0)
        _number("checks.probe_t", probe_t, lo=1e-300)
        _number("checks.probe_x", probe_x)
        _eps_list("checks.mc_eps", cfg.check("mc_eps", (0.2, 0.1, 0.05, 0.025)))
        _eps_list("checks.mollified_eps", cfg.check("mollified_eps", (0.2, 0.1, 0.05)))
        if cfg.ensemble.replicates >= 2:
            _lattice_point("checks.probe_t", grid, probe_t, probe_x)
    if cfg.kind == "kernel-checks":
        _number("checks.kernel_n_t", cfg.check("kernel_n_t", 64), lo=2, integer=True)
        n_x = cfg.check("kernel_n_x", 257)
        _number("checks.kernel_n_x", n_x, lo=3, integer=True)
        if n_x % 2 == 0:
            raise ConfigError("checks.kernel_n_x", "must be odd so that x=0 is a node")
        _number("checks.lambda", cfg.check("lambda", 1.0))
        _number("checks.series_tol", cfg.check("series_tol", 1e-8), lo=1e-300)
        _number("checks.probe_half_width", cfg.check("probe_half_width", 2.0), lo=0, hi=cfg.grid.L)
    if cfg.kind == "holder":
        _number("checks.holder_rows", cfg.check("holder_rows", 16), lo=10, integer=True)


def parse_config(doc):
    """Validate a config document (as read from TOML) into an ExperimentConfig"""
    unknown = set(doc) - {"experiment", "params", "measure", "measure2", "rho", "grid", "ensemble", "ladders", "checks", "output"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown section")
    exp = doc.get("experiment", {})
    kind = exp.get("kind")
    if kind not in KINDS:
        raise ConfigError("experiment.kind", f"expected one of {', '.join(KINDS)}, got {kind!r}")
    checks = doc.get("checks", {})
    if not isinstance(checks, dict):
        raise ConfigError("checks", "must be a table")
    cfg = ExperimentConfig(
        kind=kind,
        name=str(exp.get("name", "")),
        params=_section(doc, "params", ParamsConfig),
        measure=_section(doc, "measure", MeasureConfig),
        measure2=_section(doc, "measure2", MeasureConfig) if "measure2" in doc else None,
        rho=_section(doc, "rho", RhoConfig),
        grid=_section(doc, "grid", GridConfig),
        ensemble=_section(doc, "ensemble", EnsembleConfig),
        ladders=_section(doc, "ladders", LaddersConfig),
        checks={k: _frozen(v) for k, v in checks.items()},
        output=_section(doc, "output", OutputConfig),
    )
    validate(cfg)
    return cfg


def validate(cfg):
    _validate_params("params", cfg.params.a, cfg.params.delta)
    mu1 = _validate_measure("measure", cfg.measure)
    if cfg.rho.kind not in ("linear", "sin", "affine", "zero"):
        raise ConfigError("rho.kind", f"unknown rho kind {cfg.rho.kind!r}")
    _number("rho.lam", cfg.rho.lam)
    _number("rho.shift", cfg.rho.shift)
    try:
        cfg.rho.build()
    except OutOfRange as err:
        raise ConfigError("rho.lam", str(err)) from err
    grid = _validate_grid(cfg)
    e = cfg.ensemble
    _number("ensemble.replicates", e.replicates, lo=0, integer=True)
    _number("ensemble.seed", e.seed, lo=0, hi=2 ** 64 - 1, integer=True)
    _number("ensemble.batch", e.batch, lo=1, integer=True)
    _validate_ladders(cfg, grid)
    _validate_checks(cfg, grid)
    if cfg.kind == "compare":
        if cfg.measure2 is None:
            raise ConfigError("measure2", "compare needs a second initial measure")
        mu2 = _validate_measure("measure2", cfg.measure2)
        if not measure_leq(mu1, mu2):
            raise ConfigError("measure2", f"{mu1.name} is not below {mu2.name}")
    elif cfg.measure2 is not None:
        _validate_measure("measure2", cfg.measure2)
    if cfg.kind in ("simulate", "compare", "positivity", "holder", "weak-convergence", "intermittency") and e.replicates < 2:
        raise ConfigError("ensemble.replicates", "Monte Carlo experiments need >= 2 replicates")
    if not cfg.output.directory:
        raise ConfigError("output.directory", "must not be empty")


def load_config(path):
    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(str(path), f"invalid TOML: {err}") from err
    except OSError as err:
        raise ConfigError(str(path), err.strerror or str(err)) from err
    return parse_config(doc)
