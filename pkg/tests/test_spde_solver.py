import json
import math

import numpy as np
import pytest
from scipy import stats

from errors import Blowup, OutOfRange
from kernel_series import make_rho
from semigroup_approx import FunctionTable, g_eps_apply, mollified_noise_variance
from spde_solver import (
    SpaceTimeGrid,
    make_j0_rows,
    make_noise,
    mollified_increments,
    noise_row,
    replicate_seeds,
    run_ensemble,
    simulate,
    simulate_coupled,
    simulate_mollified,
)
from stable_green import bump, delta, j0_cell_profile, lebesgue, make_params, zero

PARAMS = make_params(1.5, 0.0)
GRID = SpaceTimeGrid(0.5, 4.0, 32, 64)


def test_grid_lattice():
    assert GRID.dx == 0.125
    assert GRID.xs[0] == -4.0 and GRID.xs[32] == 0.0
    np.testing.assert_allclose(GRID.ts[[0, -1]], [GRID.dt, 0.5])
    assert GRID.row_index(0.25) == 15
    assert GRID.node_index(0.5) == 36
    with pytest.raises(OutOfRange):
        GRID.row_index(0.01)
    with pytest.raises(OutOfRange):
        GRID.node_index(0.3)


def test_cfl():
    coarse = SpaceTimeGrid(1.0, 4.0, 4, 64)
    with pytest.raises(OutOfRange):
        coarse.check_cfl(1.5)
    SpaceTimeGrid(1.0, 4.0, 4, 64, allow_cfl_violation=True).check_cfl(1.5)


def test_noise_is_location_addressed():
    noise = make_noise(GRID, 7)
    np.testing.assert_array_equal(noise.increments[5], noise_row(GRID, 7, 5))
    np.testing.assert_array_equal(noise.row(5), make_noise(GRID, 7).row(5))
    assert not np.array_equal(noise.row(5), noise.row(6))


def test_noise_variance():
    grid = SpaceTimeGrid(1.0, 4.0, 400, 256)
    incs = make_noise(grid, 3).increments
    np.testing.assert_allclose(incs.var(), grid.dt * grid.dx, rtol=0.02)


def test_seed_range():
    with pytest.raises(OutOfRange):
        make_noise(GRID, -1)
    with pytest.raises(OutOfRange):
        make_noise(GRID, 2 ** 64)


def test_replicate_seeds():
    seeds = replicate_seeds(42, 10)
    assert seeds == replicate_seeds(42, 10)
    assert len(set(seeds)) == 10
    assert seeds[:3] == replicate_seeds(42, 3)


def test_no_noise_reproduces_j0():
    path = simulate(PARAMS, delta(), make_rho("zero", 0.0), GRID, make_noise(GRID, 1))
    exact = make_j0_rows(PARAMS, delta(), GRID)
    np.testing.assert_array_equal(path.u, exact)


def test_zero_data_stays_zero():
    path = simulate(PARAMS, zero(), make_rho("linear", 1.0), GRID, make_noise(GRID, 1))
    assert np.all(path.u == 0.0)


@pytest.mark.parametrize("warm_start", ["drop", "lumped"])
def test_linear_scaling_is_exact(warm_start):
    noise = make_noise(GRID, 11)
    rho = make_rho("linear", 1.0)
    one = simulate(PARAMS, bump(), rho, GRID, noise, warm_start)
    two = simulate(PARAMS, bump().scaled(2.0), rho, GRID, noise, warm_start)
    np.testing.assert_array_equal(two.u, 2 * one.u)


def test_unknown_warm_start():
    with pytest.raises(OutOfRange):
        simulate(PARAMS, delta(), make_rho(), GRID, make_noise(GRID, 1), warm_start="hot")


def test_coupled_needs_order():
    with pytest.raises(OutOfRange):
        simulate_coupled(PARAMS, delta(mass=2.0), delta(), make_rho(), GRID, make_noise(GRID, 1))
    p1, p2 = simulate_coupled(PARAMS, delta(), delta(mass=2.0), make_rho("sin", 1.0), GRID, make_noise(GRID, 1))
    assert p1.u.shape == p2.u.shape


def test_blowup_detected():
    grid = SpaceTimeGrid(1.0, 4.0, 16, 64, allow_cfl_violation=True)
    with pytest.raises(Blowup):
        simulate(PARAMS, lebesgue(), make_rho("linear", 1e6), grid, make_noise(grid, 2))


def test_ensemble_independent_of_batching():
    seeds = replicate_seeds(5, 6)
    rho = make_rho("sin", 1.0)
    a = run_ensemble(PARAMS, delta(), rho, GRID, seeds, keep_times=[0.25, 0.5], batch=6, threads=1, progress=False)
    b = run_ensemble(PARAMS, delta(), rho, GRID, seeds, keep_times=[0.25, 0.5], batch=2, threads=3, progress=False)
    np.testing.assert_array_equal(a.values, b.values)
    single = simulate(PARAMS, delta(), rho, GRID, make_noise(GRID, seeds[4]))
    np.testing.assert_array_equal(a.values[4, 1], single.u[-1])


def test_ensemble_mean_is_j0():
    seeds = replicate_seeds(9, 400)
    ens = run_ensemble(PARAMS, delta(), make_rho("linear", 1.0), GRID, seeds, keep_times=[0.5], progress=False)
    samples = ens.probe(0.5, 0.0)
    se = samples.std(ddof=1) / np.sqrt(samples.size)
    target = j0_cell_profile(delta(), PARAMS, 0.5, np.array([0.0]), GRID.dx)[0]
    assert abs(samples.mean() - target) <= 4 * se


def test_mollified_rows():
    path = simulate_mollified(PARAMS, bump(), make_rho("linear", 1.0), 0.1, GRID, make_noise(GRID, 4))
    assert path.u.shape == (GRID.n_t + 1, GRID.n_x)
    np.testing.assert_allclose(path.ts[[0, -1]], [0.0, 0.5])
    ens = run_ensemble(PARAMS, bump(), make_rho("linear", 1.0), GRID, [4], scheme="mollified-sde", eps=0.1, progress=False)
    np.testing.assert_allclose(ens.values[0], path.u)


def test_mollified_needs_eps():
    with pytest.raises(OutOfRange):
        run_ensemble(PARAMS, bump(), make_rho(), GRID, [1], scheme="mollified-sde", progress=False)


def test_path_csv(tmp_path):
    path = simulate(PARAMS, delta(), make_rho(), GRID, make_noise(GRID, 1))
    path.to_csv(tmp_path / "path.csv", tmp_path / "path.json", {"violating_cells": 0})
    lines = (tmp_path / "path.csv").read_text().splitlines()
    assert lines[0] == "n,j,t,x,u"
    assert len(lines) == 1 + GRID.n_t * GRID.n_x
    manifest = json.loads((tmp_path / "path.json").read_text())
    assert manifest["seed"] == 1
    assert manifest["violation_stats"] == {"violating_cells": 0}


def test_noise_cells_are_centred_with_cell_variance():
    grid = SpaceTimeGrid(1.0, 8.0, 500, 2000)
    cells = make_noise(grid, 17).increments.ravel()
    scale = math.sqrt(grid.dt * grid.dx)
    assert abs(cells.mean()) <= 3 * scale / math.sqrt(cells.size)
    var_se = scale ** 2 * math.sqrt(2 / (cells.size - 1))
    assert abs(cells.var(ddof=1) - scale ** 2) <= 3 * var_se


def test_noise_blocks_are_uncorrelated():
    grid = SpaceTimeGrid(1.0, 8.0, 200, 512)
    block = make_noise(grid, 23).increments
    pairs = [(block[:100].ravel(), block[100:].ravel()), (block[:, :256].ravel(), block[:, 256:].ravel()), (block[:-1].ravel(), block[1:].ravel())]
    for left, right in pairs:
        _, p = stats.pearsonr(left, right)
        assert p > 0.01


def test_mollified_quadratic_variation():
    eps = 0.05
    grid = SpaceTimeGrid(1.0, 4.0, 200, 128)
    centre = grid.node_index(0.0)
    qv = np.array([np.sum(mollified_increments(make_noise(grid, s), eps)[:, centre] ** 2) for s in replicate_seeds(31, 40)])
    expected = grid.T * mollified_noise_variance(eps, grid.dx, grid.L)
    np.testing.assert_allclose(expected, 1 / math.sqrt(4 * math.pi * eps), rtol=1e-3)
    assert abs(qv.mean() - expected) <= 4 * qv.std(ddof=1) / math.sqrt(qv.size)


def test_mollified_without_noise_is_the_discrete_flow():
    eps = 0.1
    path = simulate_mollified(PARAMS, bump(), make_rho("zero", 0.0), eps, GRID, make_noise(GRID, 4))
    start = FunctionTable(GRID.xs, path.u[0])
    np.testing.assert_allclose(path.u[0], j0_cell_profile(bump(), PARAMS, eps, GRID.xs, GRID.dx))
    for n in (1, GRID.n_t // 2, GRID.n_t):
        np.testing.assert_allclose(path.u[n], g_eps_apply(start, PARAMS, eps, path.ts[n]).values, rtol=1e-12, atol=1e-15)
