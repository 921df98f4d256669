import math

import numpy as np
import pytest

from loopsoup_lab.core.chaos import (
    IsometryReport, cell_average, chaos_norm, chaos_norms, difference_operator, difference_product,
    gaussian_kernel, gaussian_series_bound, glf_variance, isometry_check, kernel_gap, kernel_inner_product, mean_gap,
    pair_coefficient, pair_quadrature, pointwise_quadrature, poisson_kernel, poisson_variance, power_term,
    tail_norm, variance_estimate,
)
from loopsoup_lab.core.geometry import quad_grid, unit_disk
from loopsoup_lab.core.loopmeasure import CutoffConfig, Estimate, TableBudget, build_alpha_table
from loopsoup_lab.core.soup import FieldParams, sample_signed_soup
from loopsoup_lab.errors import GridSpacingError, ParameterError, RegimeError
from loopsoup_lab.rng import stream


@pytest.fixture(scope="module")
def grid():
    return quad_grid(unit_disk(), 0.25)


@pytest.fixture
def grid_table(grid, table_factory):
    return table_factory(grid.centers)


def test_difference_operator_product_formula():
    rng = stream(0, 0, "difference")
    for _ in range(50):
        q = int(rng.integers(0, 4))
        eta, xs = rng.uniform(-1, 1, 5), rng.uniform(-1, 1, q)
        beta = float(rng.uniform(-1, 1))
        assert difference_operator(float, beta, xs, eta) == pytest.approx(
            difference_product(float, beta, xs, eta), rel=1e-9, abs=1e-12)


def test_difference_operator_on_empty_configuration():
    assert difference_operator(float, 0.5, [], []) == 1.0
    assert difference_operator(float, 0.5, [2.0], []) == pytest.approx(math.expm1(1.0))


def test_pair_coefficients():
    lam, xi = 100.0, 1.0
    beta = xi / math.sqrt(lam)
    combo = pair_coefficient("VV", lam, beta) - 2 * pair_coefficient("VW", lam, beta, xi) + pair_coefficient(
        "WW", lam, beta, xi)
    assert combo == pytest.approx(0.002504, rel=0.02)
    lam = 1e4
    beta = xi / math.sqrt(lam)
    combo = pair_coefficient("VV", lam, beta) - 2 * pair_coefficient("VW", lam, beta, xi) + pair_coefficient(
        "WW", lam, beta, xi)
    assert combo == pytest.approx(2.5e-5, rel=0.02)
    with pytest.raises(ParameterError):
        pair_coefficient("VX", 1.0)


def test_power_term_log_space():
    assert power_term(-2.0, 3) == pytest.approx(-8 / 6)
    assert power_term(0.0, 4) == 0.0
    big = power_term(10.0, 400)
    assert np.isfinite(big) and big > 0


def test_cell_average_mean_distance():
    assert cell_average(lambda r: 1.0, 0.3) == pytest.approx(1.0, rel=1e-8)
    mean_unit = (2 + math.sqrt(2) + 5 * math.log(1 + math.sqrt(2))) / 15
    assert cell_average(lambda r: r, 2.0) == pytest.approx(2 * mean_unit, rel=1e-6)


def test_kernel_coefficients(grid, grid_table):
    params = FieldParams(100.0, 0.1)
    v = poisson_kernel(np.ones(grid.n_cells), params, grid_table, grid)
    w = gaussian_kernel(np.ones(grid.n_cells), 1.0, grid_table, grid)
    assert v.pair_coefficient(v) == pytest.approx(pair_coefficient("VV", 100.0, 0.1))
    assert v.pair_coefficient(w) == pytest.approx(pair_coefficient("VW", 100.0, 0.1, 1.0))
    assert w.pair_coefficient(w) == pytest.approx(1.0)


def test_pointwise_quadrature_needs_coarse_grid(grid, grid_table):
    with pytest.raises(GridSpacingError):
        pointwise_quadrature(grid_table, grid, 0.5)


def test_kernel_gap_shrinks_along_ladder(grid, grid_table):
    phi = np.ones(grid.n_cells)
    quad = pair_quadrature(grid_table, grid)
    for q in (1, 2):
        ratios = []
        for lam in (1e2, 1e3, 1e4):
            g = kernel_gap(q, FieldParams(lam, 1.0 / math.sqrt(lam)), 1.0, phi, grid_table, grid, quad)
            ratios.append(g["gap"] / g["w_norm"])
        assert ratios[0] > ratios[1] > ratios[2]
        assert ratios[2] < 0.01


def test_kernel_gap_regime_checks(grid, grid_table):
    phi = np.ones(grid.n_cells)
    with pytest.raises(RegimeError):
        kernel_gap(1, FieldParams(100.0, 1.0), 1.0, phi, grid_table, grid)
    with pytest.raises(RegimeError):
        kernel_gap(1, FieldParams(100.0, 0.1), 1.5, phi, grid_table, grid)


def test_tail_decay(grid, grid_table):
    params = FieldParams(100.0, 0.1)
    phi = np.ones(grid.n_cells)
    quad = pair_quadrature(grid_table, grid)
    tails = [tail_norm(n, params, phi, grid_table, grid, quad) for n in range(1, 6)]
    assert all(a > b for a, b in zip(tails, tails[1:]))
    assert tails[-1] / tails[0] < 0.05
    with pytest.raises(RegimeError):
        tail_norm(1, FieldParams(100.0, 1.0), phi, grid_table, grid, quad)


def test_norms_sum_to_variance(grid, grid_table):
    phi = np.ones(grid.n_cells)
    quad = pair_quadrature(grid_table, grid)
    w = gaussian_kernel(phi, 1.0, grid_table, grid)
    norms = chaos_norms(w, quad, 60)
    assert np.all(norms > 0)
    assert norms.sum() == pytest.approx(glf_variance(phi, 1.0, grid_table, grid, quad), rel=1e-5)


def test_variance_below_series_bound(grid, grid_table):
    phi = np.ones(grid.n_cells)
    assert glf_variance(phi, 1.0, grid_table, grid) < gaussian_series_bound(phi, 1.0, grid)


def test_mean_gap_shrinks(grid, grid_table):
    phi = np.ones(grid.n_cells)
    gaps = [mean_gap(FieldParams(lam, 1.0 / math.sqrt(lam)), 1.0, phi, grid_table, grid)["relative_gap"]
            for lam in (1e2, 1e3, 1e4)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_variance_estimate():
    values = stream(4, 0, "var").standard_normal(20000)
    est = variance_estimate(values)
    assert est.value == pytest.approx(1.0, abs=4 * est.stderr)
    assert est.stderr == pytest.approx(math.sqrt(2 / 20000), rel=0.1)


NORMS = np.array([0.8, 0.15, 0.04, 0.008, 0.0015, 0.0004])


def _report(variance: float, full_series: float, norms=NORMS, first=Estimate(0.02, 0.1, 100)) -> IsometryReport:
    return IsometryReport(Estimate(variance, 0.01, 100), norms, np.cumsum(norms), full_series, 0.001, first)


def test_isometry_verdict_uses_six_orders():
    six = float(NORMS.sum())
    # all-orders series far off, six-order sum on target
    report = _report(1.0, full_series=1.2)
    assert report.checked_sum == pytest.approx(six)
    assert report.consistent()
    assert np.all(np.diff(report.gaps) < 0)
    # all-orders series on target, six-order sum far off
    assert not _report(1.2, full_series=1.2).consistent()


def test_isometry_verdict_ignores_first_chaos_mean():
    report = _report(1.0, full_series=1.0, first=Estimate(0.5, 0.01, 100))
    assert report.consistent()
    summary = report.as_dict()
    assert summary["first_chaos"]["value"] == 0.5
    assert summary["full_series"] == 1.0 and summary["checked_sum"] == pytest.approx(float(NORMS.sum()))
    assert "table_error" in summary


def test_isometry_verdict_needs_six_orders():
    short = _report(1.0, full_series=1.0, norms=NORMS[:3])
    assert short.as_dict()["checked_sum"] is None
    with pytest.raises(ParameterError):
        short.consistent()


def _soups(disk, params, delta, n, tag):
    cut = CutoffConfig.for_domain(disk, delta)
    return [sample_signed_soup(disk, params, cut, stream(n, i, tag), seed=i) for i in range(n)]


def test_isometry_check_without_coupling(disk, table_factory):
    grid = quad_grid(disk, 0.5)
    table = table_factory(grid.centers, deltas=[0.5])
    params = FieldParams(1.0, 0.0)
    soups = _soups(disk, params, 0.5, 3, "isometry_flat")
    phi = np.ones(grid.n_cells)
    report = isometry_check(soups, phi, 0.5, params, 6, table, grid)
    assert report.variance.value == pytest.approx(0.0, abs=1e-24)
    np.testing.assert_allclose(report.norms, 0.0, atol=1e-24)
    assert report.checked_sum == pytest.approx(0.0, abs=1e-24)
    assert report.consistent()
    with pytest.raises(ParameterError):
        isometry_check(soups, phi, 0.5, params, 4, table, grid)
    with pytest.raises(ParameterError):
        isometry_check(soups[:1], phi, 0.5, params, 6, table, grid)


@pytest.mark.slow
def test_isometry_check_against_replica_variance(disk):
    grid = quad_grid(disk, 0.5)
    delta = 0.1
    table = build_alpha_table(disk, grid.centers, [delta], TableBudget(n_rep=200), seed=12)
    params = FieldParams(1.0, 0.3)
    soups = _soups(disk, params, delta, 400, "isometry_replicas")
    report = isometry_check(soups, np.ones(grid.n_cells), delta, params, 6, table, grid)
    assert report.consistent()
    assert np.all(np.diff(report.gaps[:4]) <= 0)
    assert report.first_chaos.agrees_with(0.0, k=4)


def test_inner_product_and_poisson_variance(grid, grid_table):
    phi = np.ones(grid.n_cells)
    params = FieldParams(100.0, 0.1)
    quad = pair_quadrature(grid_table, grid)
    v = poisson_kernel(phi, params, grid_table, grid)
    assert kernel_inner_product(v, v, 2, quad) == pytest.approx(chaos_norm(v, 2, quad) / 2)
    assert chaos_norms(v, quad, 60).sum() == pytest.approx(
        poisson_variance(phi, params, grid_table, grid, quad), rel=1e-5)
