import math

import numpy as np
import pytest
from scipy import ndimage

from loopsoup_lab.core.loops import (
    N_STEPS_MAX, N_STEPS_MIN, HullMask, Loop, MarkedLoop, dump_loops, hull_contains, hull_mask, load_loops,
    path_diameter, refine_bridges, sample_bridge, sample_bridges, steps_for_resolution, winding_number,
)
from loopsoup_lab.errors import ParameterError, ProximityError, ResolutionError
from loopsoup_lab.rng import stream


def _square(center=0j, side=1.0):
    h = side / 2
    return Loop.from_path([center + c for c in (-h - h * 1j, h - h * 1j, h + h * 1j, -h + h * 1j)])


def test_from_path_closes_the_loop():
    loop = _square()
    assert loop.path[0] == loop.path[-1]
    assert loop.n_steps == 4


def test_square_diameter_is_its_diagonal():
    assert _square(side=1.0).diameter == pytest.approx(math.sqrt(2))
    assert path_diameter(np.array([0j])) == 0.0


def test_hull_of_square():
    loop = _square(side=1.0)
    assert loop.covers(0j)
    assert not loop.covers(0.8 + 0j)
    np.testing.assert_array_equal(loop.covers(np.array([0.1j, 2 + 2j])), [True, False])


def test_hull_includes_zero_winding_pocket():
    # the path goes around the unit square twice in opposite directions, so the
    # winding number is zero everywhere yet the inside is enclosed
    ccw = [0j, 1, 1 + 1j, 1j]
    cw = [0j, 1j, 1 + 1j, 1]
    loop = Loop.from_path(ccw + cw)
    z = 0.5 + 0.5j
    assert winding_number(loop, z) == 0
    assert hull_contains(loop, loop.hull, z)


def test_winding_number_and_proximity():
    loop = _square()
    assert winding_number(loop, 0j) == 1
    with pytest.raises(ProximityError):
        winding_number(loop, 0.5 - 0.5j)


def test_hull_mask_resolution_bounds():
    loop = _square(side=1.0)
    with pytest.raises(ResolutionError):
        hull_mask(loop, loop.diameter / 8)
    with pytest.raises(ParameterError):
        hull_mask(loop, 0.0)
    assert hull_mask(loop, 0.01).area == pytest.approx(1.0, rel=0.1)


def test_bridges_are_closed_and_deterministic():
    roots = np.array([0j, 0.3 + 0.1j])
    a = sample_bridges(roots, np.array([0.1, 0.2]), 16, stream(1, 0, "bridge"))
    b = sample_bridges(roots, np.array([0.1, 0.2]), 16, stream(1, 0, "bridge"))
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a[:, 0], roots)
    np.testing.assert_array_equal(a[:, -1], roots)


def test_bridge_endpoint_variance():
    # Var of each coordinate at time s is s(t − s)/t; at s = t/2 that is t/4
    rng = stream(7, 0, "bridge_var")
    paths = sample_bridges(np.zeros(20000, dtype=complex), np.full(20000, 1.0), 16, rng)
    mid = paths[:, 8]
    assert mid.real.var() == pytest.approx(0.25, rel=0.05)
    assert mid.imag.var() == pytest.approx(0.25, rel=0.05)


def test_refinement_keeps_skeleton_and_doubles_steps():
    rng = stream(3, 0, "refine")
    skeleton = sample_bridges(np.array([0j]), np.array([0.5]), 16, rng)
    fine = refine_bridges(skeleton, np.array([0.5]), 2, rng)
    assert fine.shape == (1, 65)
    np.testing.assert_array_equal(fine[:, ::4], skeleton)


def test_single_bridge_matches_batch_row():
    loop = sample_bridge(0.2 + 0.1j, 0.5, 32, stream(3, 0, "bridge"))
    batch = sample_bridges(np.array([0.2 + 0.1j]), np.array([0.5]), 32, stream(3, 0, "bridge"))
    np.testing.assert_array_equal(loop.path, batch[0])
    assert loop.root == 0.2 + 0.1j and loop.duration == 0.5 and loop.n_steps == 32


def test_bridge_parameter_checks():
    rng = stream(0, 0, "x")
    with pytest.raises(ParameterError):
        sample_bridges(np.array([0j]), np.array([1.0]), 4, rng)
    with pytest.raises(ParameterError):
        sample_bridges(np.array([0j]), np.array([0.0]), 16, rng)


def test_steps_for_resolution_is_power_of_two_multiple():
    n = steps_for_resolution(0.01, 0.001)
    assert N_STEPS_MIN <= n <= N_STEPS_MAX
    assert n % N_STEPS_MIN == 0 and (n // N_STEPS_MIN) & (n // N_STEPS_MIN - 1) == 0
    assert steps_for_resolution(100.0, 1e-6) == N_STEPS_MAX


def test_dump_and_replay_preserves_signs_and_paths(tmp_path):
    loops = [MarkedLoop(1, _square(0j, 0.5)), MarkedLoop(-1, _square(0.2j, 0.3))]
    path = tmp_path / "loops.csv"
    dump_loops(loops, str(path), seed=11)
    replay = load_loops(str(path))
    assert [m.sign for m in replay] == [1, -1]
    np.testing.assert_array_equal(replay[1].loop.path, loops[1].loop.path)


def test_marked_loop_sign_check():
    with pytest.raises(ParameterError):
        MarkedLoop(0, _square())


def _polygon(n, radius=1.0):
    return Loop.from_path(radius * np.exp(2j * np.pi * np.arange(n) / n))


def _figure_eight(n=256):
    t = 2 * np.pi * np.arange(n) / n
    return Loop.from_path(np.sin(2 * t) + 1j * np.sin(t))


def _path_distance(path, zs):
    a, seg = path[:-1], np.diff(path)
    rel = zs[:, None] - a[None, :]
    s = np.clip((rel * np.conj(seg)).real / np.maximum(np.abs(seg) ** 2, 1e-300), 0, 1)
    return np.abs(rel - s * seg).min(axis=1)


def _lattice(lo, hi, n):
    x = np.linspace(lo, hi, n)
    return (x[:, None] + 1j * x[None, :]).ravel()


def test_polygon_hull_area_approaches_disk():
    mask = hull_mask(_polygon(64), 1 / 64)
    assert mask.area == pytest.approx(math.pi, rel=0.05)
    assert mask.contains(0j) and not mask.contains(2 + 0j)


def test_figure_eight_against_finer_flood_fill():
    loop = _figure_eight()
    rho = 1 / 64
    coarse, fine = hull_mask(loop, rho), hull_mask(loop, rho / 4)
    # both lobes: 2·∫₀^π 2 sin t cos²t dt = 8/3
    assert fine.area == pytest.approx(8 / 3, rel=0.05)
    assert coarse.area == pytest.approx(fine.area, rel=0.05)
    assert coarse.contains(0.5 + 0.5j) and fine.contains(0.5 + 0.5j)
    assert hull_contains(loop, coarse, 0.5 + 0.5j)

    zs = _lattice(-1.1, 1.1, 45)
    far = zs[_path_distance(loop.path, zs) >= 4 * rho]
    np.testing.assert_array_equal(coarse.contains(far), fine.contains(far))


def test_hull_refinement_consistency():
    fractions = []
    for i in range(100):
        loop = sample_bridge(0j, 1.0, 256, stream(21, i, "hull_refine"))
        rho = loop.diameter / 64
        coarse = loop.with_resolution(rho).hull
        fine = loop.with_resolution(rho / 2).hull
        assert coarse.rho == rho and fine.rho == rho / 2
        assert np.all(coarse.contains(loop.path))
        # one coarse cell is two fine cells
        grown = HullMask(fine.origin, fine.rho, ndimage.binary_dilation(fine.cells, np.ones((3, 3), bool), 2))
        ix, iy = np.nonzero(coarse.cells)
        centers = coarse.origin + (ix + 0.5) * rho + 1j * (iy + 0.5) * rho
        fractions.append(float(np.mean(~grown.contains(centers))))
    assert np.mean(fractions) < 0.01
    assert max(fractions) < 0.05


def test_nonzero_winding_implies_hull():
    checked = 0
    for i in range(20):
        loop = sample_bridge(0j, 1.0, 256, stream(22, i, "winding"))
        mask = loop.hull
        box = loop.bbox
        xs = np.linspace(box.x_min, box.x_max, 30)
        ys = np.linspace(box.y_min, box.y_max, 30)
        for z in (xs[:, None] + 1j * ys[None, :]).ravel():
            try:
                w = winding_number(loop, z, mask.rho)
            except ProximityError:
                continue
            if w != 0:
                checked += 1
                assert mask.contains(z)
    assert checked > 0


def test_diameter_translation_and_scale():
    loop = sample_bridge(0.1j, 0.5, 64, stream(23, 0, "diameter")).with_resolution(0.01)
    shift = 0.3 - 0.2j
    moved = loop.translated(shift)
    assert moved.root == loop.root + shift
    assert moved.diameter == pytest.approx(loop.diameter, rel=1e-12)
    assert path_diameter(loop.path + shift) == pytest.approx(loop.diameter, rel=1e-12)

    grown = loop.scaled(2.5)
    assert grown.diameter == pytest.approx(2.5 * loop.diameter, rel=1e-12)
    assert grown.duration == pytest.approx(0.5 * 2.5 ** 2)
    assert grown.resolution == pytest.approx(0.025)
    assert loop.scaled(1.0).diameter == loop.diameter


@pytest.mark.parametrize("duration", [1.0, 0.5])
def test_bridge_increment_variance(duration):
    # Var of a bridge increment over Δs is Δs(1 − Δs/t), t/n·(1 − 1/n) per step
    n = 16
    paths = sample_bridges(np.zeros(20000, dtype=complex), np.full(20000, duration), n, stream(8, 0, "bridge_inc"))
    inc = np.diff(paths, axis=1)
    expected = duration / n * (1 - 1 / n)
    assert inc.real.var() == pytest.approx(expected, rel=0.03)
    assert inc.imag.var() == pytest.approx(expected, rel=0.03)
