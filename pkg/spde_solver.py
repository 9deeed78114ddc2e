"""Lattice simulation of du = D u dt + rho(u) W(dt, dx) in mild form.

The state at t_n = (n+1) dt is split as u = J0 + I. J0(t_n, .) is the exact
cell average over each spatial bin and the stochastic part is stepped with the
bin-averaged kernel of G(dt):

    I_{n+1} = K_dt * (I_n + rho(u_n) dW_{n+1} / dx),    I_0 = 0.

Noise cell n covers [n dt, (n+1) dt] x [x_j - dx/2, x_j + dx/2] and is drawn
from a Philox stream keyed by the replicate seed with counter n << 64, so any
row of any replicate can be regenerated on its own.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.signal import fftconvolve
from tqdm import tqdm

from errors import Blowup, OutOfRange
from semigroup_approx import FunctionTable, edge_convolve, g_eps_apply, mollifier, r_cell_weights
from stable_green import cell_kernel, green_cdf, j0_cell_profile, measure_leq

logger = logging.getLogger(__name__)

blowup_ceiling = 1e12
boundary_leak_tol = 1e-6


@dataclass(frozen=True)
class SpaceTimeGrid:
    """[0, T] in n_t steps and [-L, L) in n_x nodes x_j = -L + j dx, dx = 2L/n_x"""

    T: float
    L: float
    n_t: int
    n_x: int
    allow_cfl_violation: bool = False

    def __post_init__(self):
        if self.T <= 0 or self.L <= 0 or self.n_t < 1 or self.n_x < 2:
            raise OutOfRange("grid needs T, L > 0, n_t >= 1 and n_x >= 2")

    @property
    def dt(self):
        return self.T / self.n_t

    @property
    def dx(self):
        return 2 * self.L / self.n_x

    @property
    def xs(self):
        return -self.L + self.dx * np.arange(self.n_x)

    @property
    def ts(self):
        return self.dt * np.arange(1, self.n_t + 1)

    def check_cfl(self, a):
        if self.dt <= self.dx ** a:
            return
        if not self.allow_cfl_violation:
            raise OutOfRange(f"dt={self.dt:.3g} exceeds dx^a={self.dx ** a:.3g}; set allow_cfl_violation to override")
        logger.warning("dt=%.3g exceeds dx^a=%.3g (override in effect)", self.dt, self.dx ** a)

    def boundary_leak(self, params):
        """Mass of G(T, .) beyond distance L"""
        return float(green_cdf(params, self.T, -self.L) + 1.0 - green_cdf(params, self.T, self.L))

    def row_index(self, t):
        """Row n with t_n = t; t must sit on the lattice"""
        n = int(round(t / self.dt)) - 1
        if not (0 <= n < self.n_t) or abs((n + 1) * self.dt - t) > 1e-9 * self.T:
            raise OutOfRange(f"t={t} is not a lattice time of {self}")
        return n

    def node_index(self, x):
        j = int(round((x + self.L) / self.dx))
        if not (0 <= j < self.n_x) or abs(self.xs[j] - x) > 1e-9 * self.L:
            raise OutOfRange(f"x={x} is not a lattice node of {self}")
        return j

    def to_dict(self):
        return {"T": self.T, "L": self.L, "n_t": self.n_t, "n_x": self.n_x, "allow_cfl_violation": self.allow_cfl_violation}


def _check_seed(seed):
    if not (0 <= int(seed) < 2 ** 64):
        raise OutOfRange(f"seed {seed} outside [0, 2^64)")
    return int(seed)


def noise_row(grid, seed, n):
    """Increments of noise cell row n, N(0, dt dx) each"""
    gen = np.random.Generator(np.random.Philox(key=_check_seed(seed), counter=n << 64))
    return gen.standard_normal(grid.n_x) * math.sqrt(grid.dt * grid.dx)


def noise_block(grid, seed, rows):
    return np.stack([noise_row(grid, seed, n) for n in rows])


@dataclass(frozen=True)
class NoiseLattice:
    grid: SpaceTimeGrid
    seed: int

    def row(self, n):
        return noise_row(self.grid, self.seed, n)

    @cached_property
    def increments(self):
        return noise_block(self.grid, self.seed, range(self.grid.n_t))


def make_noise(grid, seed):
    return NoiseLattice(grid, _check_seed(seed))


def replicate_seeds(base_seed, n_rep):
    """Replicate r gets the first 64-bit word of SeedSequence([base_seed, r])"""
    return [int(np.random.SeedSequence([int(base_seed), r]).generate_state(1, np.uint64)[0]) for r in range(n_rep)]


@dataclass(frozen=True)
class FieldPath:
    grid: SpaceTimeGrid
    params: object
    rho: object
    measure: object
    ts: np.ndarray
    u: np.ndarray
    scheme: str
    warm_start_t: float
    seed: int
    extra: dict = field(default_factory=dict)

    @property
    def xs(self):
        return self.grid.xs

    def manifest(self):
        return {
            "seed": self.seed,
            "grid": self.grid.to_dict(),
            "params": {"a": self.params.a, "delta": self.params.delta},
            "rho": {"kind": self.rho.kind, "lam": self.rho.lam, "shift": self.rho.shift},
            "measure": self.measure.name,
            "scheme": self.scheme,
            "warm_start_t": self.warm_start_t,
            **self.extra,
        }

    def to_csv(self, csv_path, json_path=None, violation_stats=None):
        from artifacts import write_csv, write_json

        xs = self.xs
        rows = ((n, j, t, xs[j], v) for n, (t, row) in enumerate(zip(self.ts, self.u)) for j, v in enumerate(row))
        write_csv(csv_path, ["n", "j", "t", "x", "u"], rows)
        if json_path:
            doc = self.manifest()
            if violation_stats is not None:
                doc["violation_stats"] = violation_stats
            write_json(json_path, doc)


@dataclass(frozen=True)
class Ensemble:
    """Kept rows of many replicates: values[r, k, j] at (ts[k], xs[j])"""

    ts: np.ndarray
    xs: np.ndarray
    values: np.ndarray
    seeds: tuple
    grid: SpaceTimeGrid | None = None

    @property
    def n_rep(self):
        return self.values.shape[0]

    def time_index(self, t):
        k = int(np.argmin(np.abs(self.ts - t)))
        if abs(self.ts[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise OutOfRange(f"t={t} is not a kept time")
        return k

    def node_index(self, x):
        j = int(np.argmin(np.abs(self.xs - x)))
        if abs(self.xs[j] - x) > 1e-9 * max(1.0, abs(x)):
            raise OutOfRange(f"x={x} is not a lattice node")
        return j

    def probe(self, t, x):
        return self.values[:, self.time_index(t), self.node_index(x)]


def _check_state(values, n):
    peak = float(np.max(np.abs(values)))
    if not math.isfinite(peak) or peak > blowup_ceiling:
        raise Blowup(f"|u| reached {peak:.3g} at step {n}; dt too coarse for this rho")


def make_j0_rows(params, measure, grid):
    """Cell-averaged J0 at every lattice time, shape (n_t, n_x)"""
    return np.stack([j0_cell_profile(measure, params, t, grid.xs, grid.dx) for t in grid.ts])


def _mild_rows(params, measure, rho, grid, seeds, keep_rows, warm_start="drop", j0_rows=None, kernel=None):
    """Stochastic part for a batch of replicates; returns u at keep_rows, shape (R, K, n_x)"""
    dx = grid.dx
    if j0_rows is None:
        j0_rows = make_j0_rows(params, measure, grid)
    if kernel is None:
        kernel = cell_kernel(params, grid.dt, dx, grid.n_x)[None, :]
    n_x = grid.n_x
    stoch = np.zeros((len(seeds), n_x))
    if warm_start == "lumped":
        first = noise_block_batch(grid, seeds, 0)
        stoch = rho(np.broadcast_to(j0_rows[0], stoch.shape)) * first / dx
    elif warm_start != "drop":
        raise OutOfRange(f"unknown warm_start {warm_start!r}")
    keep = {n: k for k, n in enumerate(keep_rows)}
    out = np.empty((len(seeds), len(keep_rows), n_x))
    u = j0_rows[0] + stoch
    if 0 in keep:
        out[:, keep[0]] = u
    for n in range(1, grid.n_t):
        kick = rho(u) * noise_block_batch(grid, seeds, n) / dx
        full = fftconvolve(stoch + kick, kernel, mode="full", axes=-1)
        stoch = full[:, n_x - 1:2 * n_x - 1]
        u = j0_rows[n] + stoch
        _check_state(u, n)
        if n in keep:
            out[:, keep[n]] = u
    return out


def noise_block_batch(grid, seeds, n):
    return np.stack([noise_row(grid, s, n) for s in seeds])


def simulate(params, measure, rho, grid, noise, warm_start="drop"):
    """One path of the exponential-mild scheme, rows at t_n = (n+1) dt"""
    grid.check_cfl(params.a)
    leak = grid.boundary_leak(params)
    if leak > boundary_leak_tol:
        logger.debug("Kernel mass beyond L=%g at T=%g: %.2e", grid.L, grid.T, leak)
    u = _mild_rows(params, measure, rho, grid, [noise.seed], list(range(grid.n_t)), warm_start)[0]
    return FieldPath(grid, params, rho, measure, grid.ts, u, "exponential-mild", grid.dt, noise.seed,
                     {"warm_start": warm_start, "boundary_leak": leak})


def simulate_coupled(params, mu1, mu2, rho, grid, noise, warm_start="drop"):
    """Paths from mu1 <= mu2 driven by the same noise"""
    if not measure_leq(mu1, mu2):
        raise OutOfRange(f"{mu1.name} is not below {mu2.name}")
    return simulate(params, mu1, rho, grid, noise, warm_start), simulate(params, mu2, rho, grid, noise, warm_start)


def mollifier_matrix(grid, eps):
    xs = grid.xs
    return mollifier(eps, xs[:, None] - xs[None, :])


def mollified_increments(noise, eps):
    """dW^eps_{n,j} = sum_k phi_eps(x_j - y_k) dW_{n,k}"""
    return noise.increments @ mollifier_matrix(noise.grid, eps).T


def _mollified_rows(params, measure, rho, eps, grid, seeds):
    """Exponential Euler for the D_eps system; rows at n dt, n = 0..n_t.

    As in the mild scheme u = exp(t D_eps) u(0) + I, with the deterministic
    part applied in one shot per row and only I stepped.
    """
    xs = grid.xs
    phi_t = mollifier_matrix(grid, eps).T
    weights = r_cell_weights(params, eps, grid.dt, grid.dx, grid.n_x)
    decay = math.exp(-grid.dt / eps)
    start = FunctionTable(xs, j0_cell_profile(measure, params, eps, xs, grid.dx))
    flow = [start.values] + [g_eps_apply(start, params, eps, t).values for t in grid.ts]
    stoch = np.zeros((len(seeds), grid.n_x))
    u = np.broadcast_to(flow[0], stoch.shape)
    out = np.empty((len(seeds), grid.n_t + 1, grid.n_x))
    out[:, 0] = u
    for n in range(grid.n_t):
        v = stoch + rho(u) * (noise_block_batch(grid, seeds, n) @ phi_t)
        stoch = decay * v + edge_convolve(v, weights)
        u = flow[n + 1] + stoch
        _check_state(u, n)
        out[:, n + 1] = u
    return out


def simulate_mollified(params, measure, rho, eps, grid, noise):
    """Path of du_eps = D_eps u_eps dt + rho(u_eps) dW^eps from u_eps(0) = mu * G(eps)"""
    if eps <= 0:
        raise OutOfRange("eps must be > 0")
    u = _mollified_rows(params, measure, rho, eps, grid, [noise.seed])[0]
    ts = grid.dt * np.arange(grid.n_t + 1)
    return FieldPath(grid, params, rho, measure, ts, u, "mollified-sde", 0.0, noise.seed, {"eps": eps})


def _thread_count(threads):
    if threads is not None:
        return max(1, int(threads))
    return max(1, int(os.environ.get("FRACHEAT_THREADS", "1")))


def _progress_enabled(progress):
    return progress and os.environ.get("FRACHEAT_PROGRESS", "1") != "0"


def run_ensemble(params, measure, rho, grid, seeds, keep_times=None, scheme="exponential-mild", eps=None,
                 batch=256, threads=None, progress=True, warm_start="drop"):
    """Simulate every seed and keep the rows at keep_times (default: all).

    Replicates run in batches; batches run on FRACHEAT_THREADS worker
    threads and are reassembled in seed order.
    """
    seeds = [_check_seed(s) for s in seeds]
    if not seeds:
        raise OutOfRange("need at least one seed")
    if scheme == "exponential-mild":
        grid.check_cfl(params.a)
        all_ts = grid.ts
        keep_rows = list(range(grid.n_t)) if keep_times is None else [grid.row_index(t) for t in keep_times]
        j0_rows = make_j0_rows(params, measure, grid)
        kernel = cell_kernel(params, grid.dt, grid.dx, grid.n_x)[None, :]

        def work(chunk):
            return _mild_rows(params, measure, rho, grid, chunk, keep_rows, warm_start, j0_rows, kernel)
    elif scheme == "mollified-sde":
        if eps is None or eps <= 0:
            raise OutOfRange("mollified-sde ensembles need eps > 0")
        all_ts = grid.dt * np.arange(grid.n_t + 1)
        keep_rows = list(range(grid.n_t + 1)) if keep_times is None else [int(round(t / grid.dt)) for t in keep_times]

        def work(chunk):
            return _mollified_rows(params, measure, rho, eps, grid, chunk)[:, keep_rows]
    else:
        raise OutOfRange(f"unknown scheme {scheme!r}")

    chunks = [seeds[i:i + batch] for i in range(0, len(seeds), batch)]
    results = [None] * len(chunks)
    with tqdm(total=len(seeds), desc=f"{scheme} {measure.name}", disable=not _progress_enabled(progress)) as bar:
        with ThreadPoolExecutor(max_workers=_thread_count(threads)) as pool:
            futures = {pool.submit(work, chunk): i for i, chunk in enumerate(chunks)}
            for future, i in futures.items():
                results[i] = future.result()
                bar.update(len(chunks[i]))
    values = np.concatenate(results, axis=0)
    logger.info("Ensemble of %d replicates for %s (%s)", len(seeds), measure.name, scheme)
    return Ensemble(all_ts[keep_rows], grid.xs, values, tuple(seeds), grid)
