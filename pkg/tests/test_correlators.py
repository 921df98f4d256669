import math

import numpy as np
import pytest

from loopsoup_lab.core.correlators import (
    CoverPatternMasses, NPointSpec, conformal_covariance_check, estimate_cover_patterns, n_point_limit,
    one_point_limit, two_point_cutoff, two_point_l1_gap, two_point_limit,
)
from loopsoup_lab.core.loopmeasure import CutoffConfig, Estimate, TableBudget, build_alpha_table, estimate_alpha
from loopsoup_lab.core.soup import FieldParams, conformal_weight, field_values, sample_signed_soup
from loopsoup_lab.errors import ParameterError
from loopsoup_lab.rng import stream

from .conftest import log_alpha


def test_one_point_limit_closed_form(disk, table_factory):
    params = FieldParams(1.0, 1.0)
    table = table_factory([0.3 + 0j])
    est = one_point_limit(disk, 0.3 + 0j, params, table)
    d = 0.7
    expected = d ** (2 * params.delta) * math.exp(10 * params.delta * log_alpha(d))
    assert est.value == pytest.approx(expected)
    assert est.stderr == pytest.approx(expected * 10 * params.delta * 1e-3)


def test_two_point_cutoff_formula(table_factory):
    z, w = 0j, 0.4 + 0j
    table = table_factory([z, w], deltas=[0.1])
    lam, beta = 1.0, 1.0
    est = two_point_cutoff(z, w, 0.1, 0.1, beta, beta, lam, table)
    a_cond = log_alpha(0.1) - log_alpha(0.4)
    exponent = lam * ((math.cosh(beta) - 1) * 2 * a_cond + (math.cosh(2 * beta) - 1) * log_alpha(0.4))
    assert est.value == pytest.approx(math.exp(exponent))


def test_two_point_cutoff_requires_separated_points(table_factory):
    table = table_factory([0j, 0.05 + 0j], deltas=[0.1])
    with pytest.raises(ParameterError):
        two_point_cutoff(0j, 0.05 + 0j, 0.1, 0.1, 1.0, 1.0, 1.0, table)


def test_two_point_limit_symmetric(disk, table_factory):
    z, w = 0.2 + 0.1j, -0.3 + 0j
    table = table_factory([z, w])
    params = FieldParams(1.0, 0.8)
    assert two_point_limit(disk, z, w, params, table).value == pytest.approx(
        two_point_limit(disk, w, z, params, table).value)
    with pytest.raises(ParameterError):
        two_point_limit(disk, z, z, params, table)


def test_two_point_l1_gap_is_finite(disk, table_factory):
    pts = [0j, 0.3 + 0j, 0.3j]
    table = table_factory(pts, deltas=[0.05])
    gap = two_point_l1_gap(disk, pts, 0.05, FieldParams(1.0, 0.5), table)
    assert gap >= 0 and math.isfinite(gap)


def test_npoint_spec_validation(disk):
    with pytest.raises(ParameterError):
        NPointSpec(disk, (0j, 0j), (1.0, 1.0), 1.0)
    with pytest.raises(ParameterError):
        NPointSpec(disk, tuple(0.1 * k for k in range(5)), (1.0,) * 5, 1.0)
    with pytest.raises(ParameterError):
        NPointSpec(disk, (0j, 0.1 + 0j), (1.0,), 1.0)
    assert NPointSpec(disk, (0j, 0.3 + 0j), (1.0, 1.0), 1.0).m == pytest.approx(0.3)


def test_single_point_limit_matches_one_point_function(disk, table_factory):
    params = FieldParams(1.0, 1.0)
    spec = NPointSpec(disk, (0j,), (1.0,), 1.0)
    a = Estimate(log_alpha(1.0), 1e-3, 200)
    masses = CoverPatternMasses((0j,), 0.5, 1.0, {frozenset({0}): a}, {0: a})
    assert n_point_limit(spec, masses).value == pytest.approx(
        one_point_limit(disk, 0j, params, table_factory([0j])).value)


def _two_point_masses():
    pts = (0.1 + 0j, -0.2 + 0.1j)
    masses = {
        frozenset({0}): Estimate(0.2, 1e-3, 100),
        frozenset({1}): Estimate(0.25, 1e-3, 100),
        frozenset({0, 1}): Estimate(0.1, 1e-3, 100),
    }
    singles = {0: Estimate(0.05, 1e-3, 100), 1: Estimate(0.07, 1e-3, 100)}
    return pts, CoverPatternMasses(pts, 0.1, abs(pts[0] - pts[1]), masses, singles)


def test_n_point_limit_permutation_invariant(disk):
    pts, masses = _two_point_masses()
    spec = NPointSpec(disk, pts, (0.5, 1.0), 1.0)
    value = n_point_limit(spec, masses).value
    swapped = n_point_limit(spec.permuted([1, 0]), masses.permuted([1, 0])).value
    assert swapped == pytest.approx(value, rel=1e-12)
    m = spec.m
    expected = m ** (2 * (conformal_weight(1.0, 0.5) + conformal_weight(1.0, 1.0))) * math.exp(
        10 * conformal_weight(1.0, 1.5) * 0.1 + 10 * conformal_weight(1.0, 0.5) * 0.05
        + 10 * conformal_weight(1.0, 1.0) * 0.07)
    assert value == pytest.approx(expected)


def test_identity_map_ratio_is_exactly_one(disk):
    pts, masses = _two_point_masses()
    spec = NPointSpec(disk, pts, (1.0, 1.0), 1.0)
    report = conformal_covariance_check(0j, spec, masses)
    assert report.ratio == 1.0
    assert report.predicted == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        conformal_covariance_check(0.4 + 0j, spec, masses)


def test_covering_total_sums_patterns():
    _, masses = _two_point_masses()
    total = masses.covering_total(0)
    assert total.value == pytest.approx(0.3)
    assert total.stderr == pytest.approx(math.sqrt(2) * 1e-3)
    assert masses.covering_total(1).value == pytest.approx(0.35)


@pytest.mark.slow
def test_covering_total_matches_one_point_mass(disk):
    points = (0j, 0.4 + 0j)
    masses = estimate_cover_patterns(disk, points, 2.0, 300, 17, delta=0.2)
    for j, z in enumerate(points):
        direct = estimate_alpha(disk, z, 0.2, 2.0, 300, 18)
        total = masses.covering_total(j)
        assert abs(total.value - direct.value) <= 4 * total.combined_stderr(direct)


@pytest.mark.slow
def test_two_point_cutoff_matches_replica_mean(disk):
    z, w, delta = 0j, 0.4 + 0j, 0.2
    params = FieldParams(1.0, 0.5)
    table = build_alpha_table(disk, [z, w], [delta], TableBudget(n_rep=400), seed=19)
    predicted = two_point_cutoff(z, w, delta, delta, params.beta, params.beta, params.lam, table)

    cut = CutoffConfig.for_domain(disk, delta)
    products = []
    for i in range(400):
        soup = sample_signed_soup(disk, params, cut, stream(20, i, "twopoint_soup"))
        products.append(np.prod(field_values(soup, [z, w], delta, params, renormalize=False)))
    simulated = Estimate.from_samples(np.array(products))
    assert simulated.agrees_with(predicted.value, k=4, extra=predicted.stderr)
