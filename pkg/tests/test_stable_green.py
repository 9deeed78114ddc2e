import math

import numpy as np
import pytest
from scipy import integrate, special

from errors import GridTooCoarse, OutOfRange
from stable_green import (
    InitialMeasure,
    beta_integral,
    bump,
    cell_kernel,
    cross_moment,
    delta,
    fitted_constants,
    gamma_const,
    green_cdf,
    green_density,
    green_partial_mean,
    green_table,
    green_values,
    indicator,
    j0,
    j0_cell_profile,
    j0_profile,
    lambda_const,
    lebesgue,
    make_params,
    measure_leq,
    psi_cutoff,
    squared_green_mass,
    zero,
)

PARAMS = [(2.0, 0.0), (1.5, 0.0), (1.5, 0.3), (1.2, -0.5), (1.8, 0.2)]


@pytest.mark.parametrize("a, d", [(1.0, 0.0), (2.5, 0.0), (1.5, 0.6), (1.2, -0.9)])
def test_make_params_rejects(a, d):
    with pytest.raises(OutOfRange):
        make_params(a, d)


def test_make_params_gaussian_forces_symmetry():
    assert make_params(2.0, 0.0).delta == 0.0
    assert make_params(2.0, 0.0).is_gaussian


@pytest.mark.parametrize("a, d", PARAMS)
@pytest.mark.parametrize("t", [0.1, 1.0])
def test_green_table_mass(a, d, t):
    params = make_params(a, d)
    width = t ** (1 / a)
    table = green_table(params, t, np.linspace(-100 * width, 100 * width, 10001))
    assert abs(table.mass - 1.0) <= 1e-6 + table.trunc_error
    assert table.values.min() >= -1e-9


def test_green_table_coarse_grid_fails():
    params = make_params(2.0, 0.0)
    with pytest.raises(GridTooCoarse):
        green_table(params, 1.0, np.linspace(-1.5, 1.5, 3))


def test_gaussian_is_heat_kernel():
    params = make_params(2.0, 0.0)
    xs = np.linspace(-4.0, 4.0, 81)
    t = 0.7
    exact = np.exp(-xs ** 2 / (4 * t)) / np.sqrt(4 * math.pi * t)
    np.testing.assert_allclose(green_values(params, t, xs), exact, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("a, d", [(1.5, 0.0), (1.5, 0.3), (1.2, -0.5)])
@pytest.mark.parametrize("x", [-2.0, 0.0, 0.7, 3.0])
def test_density_and_table_agree(a, d, x):
    params = make_params(a, d)
    np.testing.assert_allclose(float(green_values(params, 1.0, x)), green_density(params, 1.0, x), atol=1e-7)


@pytest.mark.parametrize("a, d", [(1.5, 0.0), (1.5, 0.3)])
def test_scaling(a, d):
    params = make_params(a, d)
    t = 0.3
    xs = np.linspace(-3.0, 3.0, 13)
    scale = t ** (-1 / a)
    np.testing.assert_allclose(green_values(params, t, xs), scale * green_values(params, 1.0, scale * xs), rtol=1e-10)


def test_reflection_flips_skewness():
    xs = np.linspace(-3.0, 3.0, 25)
    left = green_values(make_params(1.5, 0.3), 1.0, xs)
    right = green_values(make_params(1.5, -0.3), 1.0, -xs)
    np.testing.assert_allclose(left, right, rtol=1e-8, atol=1e-12)


@pytest.mark.parametrize("a, d", [(1.5, 0.0), (1.5, 0.3), (1.2, -0.5)])
def test_semigroup(a, d):
    params = make_params(a, d)
    s, t = 0.4, 0.6
    ys = np.linspace(-60.0, 60.0, 24001)
    for x in (-1.0, 0.0, 1.5):
        conv = np.trapezoid(green_values(params, s, x - ys) * green_values(params, t, ys), ys)
        np.testing.assert_allclose(conv, float(green_values(params, s + t, x)), atol=1e-5)


@pytest.mark.parametrize("a, d", [(1.5, 0.3), (1.8, -0.1)])
def test_cdf_and_partial_mean_integrate_density(a, d):
    params = make_params(a, d)
    t = 0.5
    lo, hi = -1.0, 2.0
    mass, _ = integrate.quad(lambda x: float(green_values(params, t, x)), lo, hi)
    first, _ = integrate.quad(lambda x: x * float(green_values(params, t, x)), lo, hi)
    cdf = green_cdf(params, t, np.array([lo, hi]))
    pm = green_partial_mean(params, t, np.array([lo, hi]))
    np.testing.assert_allclose(cdf[1] - cdf[0], mass, atol=1e-6)
    np.testing.assert_allclose(pm[1] - pm[0], first, atol=1e-6)


@pytest.mark.parametrize("a", [1.2, 1.5, 1.8])
def test_lambda_symmetric_anchor(a):
    params = make_params(a, 0.0)
    np.testing.assert_allclose(lambda_const(params), special.gamma(1 + 1 / a) / math.pi, atol=1e-5)


def test_lambda_gaussian():
    np.testing.assert_allclose(lambda_const(make_params(2.0, 0.0)), 1 / (2 * math.sqrt(math.pi)), rtol=1e-12)


@pytest.mark.parametrize("a, d", [(1.5, 0.0), (1.5, 0.3), (2.0, 0.0)])
def test_cross_moment_matches_quadrature(a, d):
    params = make_params(a, d)
    s, t = 0.3, 0.8
    value, _ = integrate.quad(lambda x: float(green_values(params, s, x) * green_values(params, t, x)), -np.inf, np.inf, limit=400)
    np.testing.assert_allclose(cross_moment(params, s, t), value, rtol=1e-5)


def test_squared_green_mass_matches_cross_moment():
    params = make_params(1.5, 0.3)
    value, _ = integrate.quad(lambda s: float(cross_moment(params, s, s)), 0.1, 0.9)
    np.testing.assert_allclose(squared_green_mass(params, 0.1, 0.9), value, rtol=1e-10)


@pytest.mark.parametrize("lump", [False, True])
def test_cell_kernel(lump):
    params = make_params(1.5, 0.0)
    w = cell_kernel(params, 0.1, 0.05, 200, lump_tails=lump)
    assert w.size == 399
    assert w.min() >= 0
    if lump:
        np.testing.assert_allclose(w.sum(), 1.0, rtol=1e-12)
    else:
        assert w.sum() < 1.0


@pytest.mark.parametrize("a, b", [(0.5, 0.0), (1.5, 1.0), (2.0, -0.5), (3.0, 3.5)])
def test_beta_integral(a, b):
    value, _ = integrate.quad(lambda y: y ** b / (1 + y ** (2 + a)), 0, np.inf, limit=200)
    np.testing.assert_allclose(beta_integral(a, b), value, rtol=1e-8)


def test_beta_integral_anchor():
    np.testing.assert_allclose(beta_integral(2.0, 0.0), math.pi / (2 * math.sqrt(2)), rtol=1e-13)


@pytest.mark.parametrize("a, b", [(0.0, 0.0), (1.5, -1.0), (1.5, 2.5)])
def test_beta_integral_domain(a, b):
    with pytest.raises(OutOfRange):
        beta_integral(a, b)


def test_fitted_constants_dominate():
    params = make_params(1.5, 0.0)
    fitted = fitted_constants(params)
    zs = np.linspace(-30.0, 30.0, 601)
    assert np.all(green_values(params, 1.0, zs) * (1 + np.abs(zs) ** 2.5) <= fitted.k0)
    assert fitted.k1 > 0


def test_j0_of_delta_is_green():
    params = make_params(1.5, 0.2)
    xs = np.linspace(-3.0, 3.0, 31)
    np.testing.assert_allclose(j0_profile(delta(0.5, 2.0), params, 0.4, xs), 2.0 * green_values(params, 0.4, xs - 0.5))


def test_j0_of_lebesgue_is_constant():
    params = make_params(1.5, 0.3)
    xs = np.linspace(-5.0, 5.0, 21)
    np.testing.assert_allclose(j0_profile(lebesgue(2.0), params, 1.0, xs), 2.0, rtol=1e-10)


@pytest.mark.parametrize("measure", [indicator(1.0), bump(1.0)])
@pytest.mark.parametrize("a, d, x", [(1.5, 0.0, 0.3), (1.5, 0.4, 0.3), (1.5, 0.4, -1.2), (1.2, 0.7, 1.5)])
def test_j0_of_density_matches_quadrature(measure, a, d, x):
    params = make_params(a, d)
    t = 0.5
    value, _ = integrate.quad(lambda y: float(measure.density_at(y)) * float(green_values(params, t, x - y)), -1.0, 1.0, points=[0.0])
    np.testing.assert_allclose(j0(measure, params, t, x), value, rtol=1e-5)


def test_cell_j0_of_delta_telescopes():
    params = make_params(1.5, 0.4)
    dx = 0.125
    xs = -4.0 + dx * np.arange(64)
    t = 0.01
    cells = j0_cell_profile(delta(), params, t, xs, dx)
    total = green_cdf(params, t, xs[-1] + dx / 2) - green_cdf(params, t, xs[0] - dx / 2)
    np.testing.assert_allclose(cells.sum() * dx, total, rtol=1e-12)
    assert cells[32] * dx > 0.5


def test_cell_j0_of_lebesgue_is_constant():
    params = make_params(1.5, 0.3)
    xs = np.linspace(-2.0, 2.0, 17)
    np.testing.assert_allclose(j0_cell_profile(lebesgue(2.0), params, 0.01, xs, 0.25), 2.0, rtol=1e-9)


@pytest.mark.parametrize("measure", [delta(0.2), bump(1.0)])
def test_cell_j0_matches_bin_quadrature(measure):
    params = make_params(1.2, 0.5)
    t, dx = 0.3, 0.1
    xs = np.array([-0.9, -0.2, 0.0, 0.4, 1.3])
    expected = [integrate.quad(lambda y: j0(measure, params, t, y), x - dx / 2, x + dx / 2)[0] / dx for x in xs]
    np.testing.assert_allclose(j0_cell_profile(measure, params, t, xs, dx), expected, rtol=1e-6)


def test_j0_of_zero():
    assert np.all(j0_profile(zero(), make_params(1.5, 0.0), 1.0, np.linspace(-1, 1, 5)) == 0.0)


def test_measure_order():
    assert measure_leq(delta(), delta(mass=2.0))
    assert not measure_leq(delta(mass=2.0), delta())
    assert measure_leq(indicator(1.0), lebesgue())
    assert measure_leq(zero(), bump())
    assert not measure_leq(lebesgue(), indicator(1.0))


def test_initial_measure_validation():
    with pytest.raises(OutOfRange):
        InitialMeasure(atoms=((0.0, -1.0),))
    with pytest.raises(OutOfRange):
        InitialMeasure(density_x=(0.0, 1.0), density_y=(1.0,))
    with pytest.raises(OutOfRange):
        InitialMeasure(density_x=(1.0, 0.0), density_y=(1.0, 1.0))


def test_pair_and_mass_within():
    phi = lambda x: 1.0  # noqa: E731
    np.testing.assert_allclose(bump(1.0, 2.0).pair(phi, -1.0, 1.0), 2.0, rtol=1e-10)
    np.testing.assert_allclose(bump(1.0, 2.0).mass_within(-1.0, 1.0), 2.0)
    np.testing.assert_allclose(lebesgue().mass_within(-3.0, 4.0), 7.0)
    assert delta(0.5).mass_within(0.0, 1.0) == 1.0


def test_cutoff_is_compact():
    cut = lebesgue().cutoff(0.5)
    lo, hi = cut.support
    assert lo >= -3.0 and hi <= 3.0
    np.testing.assert_allclose(cut.density_at(0.0), 1.0)
    assert cut.tail is None
    np.testing.assert_allclose(psi_cutoff(0.5, np.array([0.0, 2.0, 2.5, 3.0])), [1.0, 1.0, 0.5, 0.0])


@pytest.mark.parametrize("a, d", [(1.5, 0.4), (1.5, -0.4), (1.2, 0.7), (1.8, 0.2)])
@pytest.mark.parametrize("lo, hi", [(-3.0, -1.0), (-1.0, 0.0), (0.0, 2.0), (2.0, 5.0), (-60.0, -30.0), (30.0, 60.0)])
def test_skewed_cdf_integrates_density(a, d, lo, hi):
    params = make_params(a, d)
    mass, _ = integrate.quad(lambda x: float(green_values(params, 1.0, x)), lo, hi, limit=200)
    cdf = green_cdf(params, 1.0, np.array([lo, hi]))
    np.testing.assert_allclose(cdf[1] - cdf[0], mass, atol=1e-6)


@pytest.mark.parametrize("d", [0.3, 0.4])
def test_cdf_reflects_with_skewness(d):
    xs = np.array([-3.0, -1.0, 0.0, 0.5, 2.0])
    np.testing.assert_allclose(green_cdf(make_params(1.5, d), 1.0, xs), 1.0 - green_cdf(make_params(1.5, -d), 1.0, -xs), atol=1e-8)


@pytest.mark.parametrize("a, d", [(1.5, 0.4), (1.2, 0.7)])
def test_cdf_continuous_at_table_end(a, d):
    params = make_params(a, d)
    for edge in (-40.0, 40.0):
        inside, outside = green_cdf(params, 1.0, np.array([edge * (1 - 1e-12), edge * (1 + 1e-12)]))
        assert abs(outside - inside) < 1e-10


def test_skewed_cell_kernel_matches_density():
    params = make_params(1.5, 0.4)
    t, dx, n = 0.5, 0.1, 400
    w = cell_kernel(params, t, dx, n)
    for m in (-10, -3, 0, 3, 10):
        mass, _ = integrate.quad(lambda x: float(green_values(params, t, x)), (m - 0.5) * dx, (m + 0.5) * dx)
        np.testing.assert_allclose(w[m + n - 1], mass, atol=1e-8)
    assert w.sum() <= 1.0
    offsets = np.arange(-(n - 1), n) * dx
    xs = np.linspace(-(n - 1) * dx, (n - 1) * dx, 20001)
    pdf_mean = np.trapezoid(xs * green_values(params, t, xs), xs)
    assert np.sign(w @ offsets) == np.sign(pdf_mean)


@pytest.mark.parametrize("a, d", [(1.5, 0.3), (1.5, -0.4), (1.2, 0.7), (1.8, 0.0), (2.0, 0.0)])
def test_gamma_const_range(a, d):
    value = gamma_const(make_params(a, d))
    assert 0.0 < value <= 0.25


@pytest.mark.parametrize("a", [1.2, 1.5, 2.0])
def test_gamma_const_symmetric(a):
    np.testing.assert_allclose(gamma_const(make_params(a, 0.0)), 0.25, rtol=1e-10)
