import math

import numpy as np
import pytest

from loopsoup_lab.core.geometry import (
    AffineMap, CayleyMap, Disk, MappedDisk, MobiusMap, PointPair, Square, compose, make_domain,
    mobius_derivative_modulus, quad_grid,
)
from loopsoup_lab.errors import DomainMembershipError, ParameterError
from loopsoup_lab.rng import stream


def test_disk_boundary_distance(disk):
    assert disk.boundary_distance(0.3 + 0.4j) == pytest.approx(0.5)
    np.testing.assert_allclose(disk.boundary_distance(np.array([0j, 0.9])), [1.0, 0.1])


def test_boundary_distance_rejects_outside_points(disk):
    with pytest.raises(DomainMembershipError):
        disk.boundary_distance(1.2)
    with pytest.raises(DomainMembershipError):
        disk.boundary_distance(1.0)


def test_square_distance_and_diameter():
    sq = Square(0j, 2.0)
    assert sq.boundary_distance(0.5 + 0.2j) == pytest.approx(0.5)
    assert sq.diameter == pytest.approx(2 * math.sqrt(2))
    assert not sq.contains(1.5j)


def test_mobius_sends_a_to_origin_and_inverts():
    f = MobiusMap(0.4 + 0.1j)
    assert abs(f(0.4 + 0.1j)) < 1e-15
    z = np.array([0.1 - 0.2j, -0.5 + 0.3j])
    np.testing.assert_allclose(f.inverse(f(z)), z, atol=1e-14)
    assert f.derivative_modulus(0j) == pytest.approx(1 - abs(f.a) ** 2)


def test_mobius_parameter_checks():
    with pytest.raises(ParameterError):
        MobiusMap(1.0 + 0j)
    with pytest.raises(DomainMembershipError):
        mobius_derivative_modulus(0.2, 1.5)


def test_cayley_maps_disk_to_upper_half_plane():
    f = CayleyMap()
    assert f(0j) == pytest.approx(1j)
    for y in (0.5, 1.0, 2.0):
        assert f.inverse(1j * y) == pytest.approx((y - 1) / (y + 1))
    assert f(0.3 - 0.5j).imag > 0


def test_composition_chain_rule():
    a = 0.3 - 0.2j
    g = compose(MobiusMap(a), MobiusMap(-a))
    z = -0.1 + 0.45j
    assert g(z) == pytest.approx(z)
    assert g.derivative_modulus(z) == pytest.approx(1.0)
    assert g.inverse(z) == pytest.approx(z)


def test_affine_zero_scale_rejected():
    with pytest.raises(ParameterError):
        AffineMap(0.0, 1.0)


def test_mapped_disk_under_affine_map():
    d = make_domain("mapped_disk", map="affine", scale=(2.0, 0.0), shift=(1.0, 0.0))
    assert isinstance(d, MappedDisk)
    assert d.diameter == pytest.approx(4.0)
    assert d.boundary_distance(1.0 + 0j) == pytest.approx(2.0)
    assert d.describe()["kind"] == "mapped_disk"


def test_make_domain_catalog():
    assert make_domain("disk", center=(0.5, 0.0), radius=2.0) == Disk(0.5 + 0j, 2.0)
    with pytest.raises(ParameterError):
        make_domain("annulus")


def test_point_pair_truncated_separations(disk):
    pair = PointPair(disk, 0.8 + 0j, 0.2 + 0j)
    assert pair.separation == pytest.approx(0.6)
    assert pair.d_zw == pytest.approx(0.2)
    assert pair.d_wz == pytest.approx(0.6)


def test_quad_grid_cells_inside_domain(disk):
    grid = quad_grid(disk, 0.25)
    half = grid.h / 2
    for dz in (half + half * 1j, -half + half * 1j, half - half * 1j, -half - half * 1j):
        assert np.all(disk.contains(grid.centers + dz))
    assert grid.n_cells * grid.cell_area + grid.coverage_deficit == pytest.approx(disk.area)
    assert grid.integrate(grid.evaluate(lambda z: np.ones_like(z.real))) == pytest.approx(grid.n_cells * 0.0625)


def test_quad_grid_rejects_bad_spacing(disk):
    with pytest.raises(ParameterError):
        quad_grid(disk, 0.0)


def _random_disk_points(rng, n, radius=0.95):
    return radius * np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))


def test_mobius_preserves_the_disk():
    rng = stream(0, 0, "mobius_disk")
    for a in _random_disk_points(rng, 20):
        f = MobiusMap(complex(a))
        assert np.all(np.abs(f(_random_disk_points(rng, 200, radius=0.999))) < 1)
        circle = np.exp(2j * np.pi * rng.random(50))
        np.testing.assert_allclose(np.abs(f(circle)), 1.0, atol=1e-12)


def test_composed_derivative_follows_chain_rule():
    rng = stream(1, 0, "mobius_chain")
    h = 1e-6
    for _ in range(20):
        a, b = _random_disk_points(rng, 2, radius=0.8)
        f, g = MobiusMap(complex(a)), MobiusMap(complex(b))
        fg = compose(f, g)
        z = complex(_random_disk_points(rng, 1, radius=0.5)[0])
        assert fg(z) == pytest.approx(f(g(z)))
        assert fg.derivative_modulus(z) == pytest.approx(f.derivative_modulus(g(z)) * g.derivative_modulus(z))
        numeric = abs(fg(z + h) - fg(z - h)) / (2 * h)
        assert fg.derivative_modulus(z) == pytest.approx(numeric, rel=1e-6)
