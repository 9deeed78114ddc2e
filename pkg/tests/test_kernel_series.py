import math

import numpy as np
import pytest

from errors import OutOfRange, SingularityBlowup
from kernel_series import (
    KernelGrid,
    brute_force_l1_mass,
    cell_average,
    closed_form_error,
    extrapolate,
    fit_upper_bound_constant,
    k_heat_closed,
    k_kernel,
    k_wave_closed,
    k_wave_series,
    layer_one_mass,
    ln_kernel,
    make_rho,
    moment_growth_bound,
    moment_grid,
    moment_upper_bound,
    restrict_cells,
    verify_upper_bound,
)
from stable_green import StableParams, delta, j0, make_params


@pytest.mark.parametrize(
    "kind, lam, shift, u, expected",
    [
        ("linear", 2.0, 0.0, 1.5, 3.0),
        ("sin", 1.0, 0.0, math.pi / 2, 1.0),
        ("affine", 2.0, 1.0, 1.0, 3.0),
        ("zero", 0.0, 0.0, 5.0, 0.0),
    ],
)
def test_rho_values(kind, lam, shift, u, expected):
    rho = make_rho(kind, lam, shift)
    np.testing.assert_allclose(rho(np.array([u]))[0], expected)


def test_rho_growth():
    assert make_rho("zero", 0.0).lip == 0.0
    assert make_rho("sin", -2.0).growth == (2.0, 0.0)
    lip, vartheta = make_rho("affine", 1.0, 0.5).growth
    np.testing.assert_allclose((lip, vartheta), (math.sqrt(2), 0.5))
    assert make_rho("affine", 1.0, 0.5).rho_zero == 0.5


@pytest.mark.parametrize("kind, lam", [("linear", 0.0), ("cubic", 1.0)])
def test_rho_rejects(kind, lam):
    with pytest.raises(OutOfRange):
        make_rho(kind, lam)


def test_kernel_grid_needs_odd_nodes():
    with pytest.raises(OutOfRange):
        KernelGrid(1.0, 4.0, 8, 64)
    grid = KernelGrid(1.0, 4.0, 8, 65)
    assert grid.xs[32] == 0.0
    assert grid.refined().n_x == 129


def test_heat_series_matches_closed_form():
    lam = 1.0
    heat = make_params(2.0, 0.0)
    base = KernelGrid(1.0, 6.0, 16, 97)
    probe_ts = np.linspace(0.25, base.ts[-1], 6)
    probe_xs = np.linspace(-1.5, 1.5, 7)

    def closed(t, x):
        return k_heat_closed(2.0, lam, t, x)

    coarse = closed_form_error(k_kernel(lam, heat, base), closed, probe_ts, probe_xs)
    fine = closed_form_error(k_kernel(lam, heat, base.refined()), closed, probe_ts, probe_xs)
    assert fine < coarse


def test_extrapolated_heat_series_matches_closed_form():
    lam = 1.0
    heat = make_params(2.0, 0.0)
    base = KernelGrid(1.0, 8.0, 64, 257)
    probe_ts = np.linspace(0.25, base.ts[-1], 16)
    probe_xs = np.linspace(-2.0, 2.0, 16)

    def closed(t, x):
        return k_heat_closed(2.0, lam, t, x)

    coarse = k_kernel(lam, heat, base)
    fine = k_kernel(lam, heat, base.refined())
    plain = closed_form_error(fine, closed, probe_ts, probe_xs)
    extrapolated = closed_form_error(extrapolate(coarse, fine), closed, probe_ts, probe_xs)
    assert extrapolated < plain
    assert extrapolated < 1e-3


def test_restrict_cells_averages_pairs():
    grid = KernelGrid(1.0, 4.0, 4, 9)
    fine = grid.refined()
    ts, xs = np.meshgrid(fine.ts, fine.xs, indexing="ij")
    restricted = restrict_cells(3.0 + ts + 0.5 * xs, grid)
    expected = 3.0 + grid.ts[:, None] + 0.5 * grid.xs[None, :]
    np.testing.assert_allclose(restricted[:, 1:-1], expected[:, 1:-1], rtol=1e-12)
    with pytest.raises(OutOfRange):
        restrict_cells(np.zeros((4, 9)), grid)


def test_k_kernel_zero_lambda():
    table = k_kernel(0.0, make_params(1.5, 0.0), KernelGrid(1.0, 4.0, 8, 33))
    assert np.all(table.values == 0.0)


def test_k_kernel_dominates_first_layer():
    params = make_params(1.5, 0.2)
    grid = KernelGrid(1.0, 6.0, 16, 65)
    total = k_kernel(1.0, params, grid)
    first = ln_kernel(0, 1.0, params, grid)
    assert np.all(total.values >= first.values)
    assert total.n_terms > 2
    assert total.series_tail_bound < 1e-6 * total.values.max()


def test_layer_one_mass():
    params = make_params(1.5, 0.0)
    grid = KernelGrid(1.0, 8.0, 32, 129)
    exact = layer_one_mass(1.0, params, 1.0)
    np.testing.assert_allclose(brute_force_l1_mass(1.0, params, grid), exact, rtol=5e-2)


def test_singular_order():
    with pytest.raises(SingularityBlowup):
        ln_kernel(0, 1.0, StableParams(1.0, 0.0), KernelGrid(1.0, 4.0, 8, 33))


def test_heat_closed_rejects_nonpositive_time():
    with pytest.raises(OutOfRange):
        k_heat_closed(2.0, 1.0, np.array([0.0, 1.0]), 0.0)


def test_wave_closed_matches_series():
    ts = np.linspace(0.1, 2.0, 8)[:, None]
    xs = np.linspace(-2.0, 2.0, 21)[None, :]
    np.testing.assert_allclose(k_wave_series(1.0, 1.5, ts, xs), k_wave_closed(1.0, 1.5, ts, xs), rtol=1e-10)
    assert k_wave_closed(1.0, 1.0, 0.5, 0.8) == 0.0


def test_upper_bound_fit_and_verify():
    params = make_params(1.5, 0.0)
    grid = KernelGrid(1.0, 6.0, 16, 65)
    table = k_kernel(1.0, params, grid)
    C = fit_upper_bound_constant(table, t_min=0.25, x_max=3.0)
    ok, worst = verify_upper_bound(table, C, t_min=0.25, x_max=3.0)
    assert ok
    np.testing.assert_allclose(worst, 1 / 1.05)


def test_moment_bound_without_noise_is_j0_squared():
    params = make_params(1.5, 0.0)
    bound = moment_upper_bound(2, delta(), make_rho("zero", 0.0), params, 0.5, 0.0)
    np.testing.assert_allclose(bound, j0(delta(), params, 0.5, 0.0) ** 2, rtol=1e-3)


def test_moment_bound_grows_with_noise():
    params = make_params(1.5, 0.0)
    quiet = moment_upper_bound(2, delta(), make_rho("linear", 0.5), params, 0.5, 0.0)
    loud = moment_upper_bound(2, delta(), make_rho("linear", 1.0), params, 0.5, 0.0)
    assert loud > quiet > 0


@pytest.mark.parametrize("p", [1, 3])
def test_moment_bound_needs_even_order(p):
    with pytest.raises(OutOfRange):
        moment_upper_bound(p, delta(), make_rho(), make_params(1.5, 0.0), 0.5, 0.0)


def test_moment_growth_bound():
    np.testing.assert_allclose(moment_growth_bound(2, 1.0, 1.0, 1.5), math.exp(2 ** 4))
    with pytest.raises(OutOfRange):
        moment_growth_bound(2, 1.0, 0.0, 1.5)


def test_cell_average_of_constant():
    grid = KernelGrid(1.0, 4.0, 8, 33)
    np.testing.assert_allclose(cell_average(lambda t, x: np.ones_like(t * x), grid, 3, 10), 1.0)


def test_moment_bound_uses_requested_time():
    params = make_params(1.5, 0.0)
    rho = make_rho("linear", 1.0)
    grid = moment_grid(0.5, 0.0, params, n_t=16, n_x=81)
    np.testing.assert_allclose(grid.ts[-1], 0.5)
    on_grid = moment_upper_bound(2, delta(), rho, params, 0.5, 0.0, grid=grid)
    assert on_grid >= j0(delta(), params, 0.5, 0.0) ** 2
    with pytest.raises(OutOfRange):
        moment_upper_bound(2, delta(), rho, params, 0.25, 0.0, grid=grid)
