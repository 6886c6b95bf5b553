import numpy as np
import pytest

from geometry import Pose
from heatmap import (
    PolarHeatmap,
    apply_mask,
    cell_positions,
    jitter_heatmap,
    load_heatmap,
    masked_distribution,
    neighbour_mass,
    nms_sample,
    noisy_heatmap,
    oracle_heatmap,
    save_heatmap,
)
from lidar import LidarConfig, RadialOccupancyMask, sense_mask
from nav_config import ContractViolation, ScenarioIOError


def test_oracle_heatmap_support(open_scene):
    config = LidarConfig()
    heat = oracle_heatmap(open_scene, open_scene.start, config)
    assert heat.cells.shape == (120, 12)
    assert heat.cells.sum() == pytest.approx(1.0)
    assert not heat.degenerate
    # nothing closer than 0.5 m
    assert heat.cells[:, :2].sum() == 0.0
    xs, ys = cell_positions(open_scene.start, config)
    support = heat.cells > 0
    assert open_scene.navigable_at(xs[support], ys[support]).all()
    values = heat.cells[support]
    assert values.max() == pytest.approx(values.min())


def test_oracle_heatmap_hides_cells_behind_walls(walled_scene):
    heat = oracle_heatmap(walled_scene, walled_scene.start)
    # straight ahead the wall is 1 m away; bins past it are out of sight
    assert heat.cells[0, 4:].sum() == 0.0


def test_masked_distribution_zero_delta_is_identity():
    rng = np.random.default_rng(0)
    h = rng.random((120, 12))
    h /= h.sum()
    m = -(rng.random((120, 12)) < 0.3).astype(float)
    cells, saturated = masked_distribution(h, m, 0.0)
    np.testing.assert_allclose(cells, h)
    assert not saturated


def test_masked_distribution_small_example():
    cells, saturated = masked_distribution(np.array([0.6, 0.4]), np.array([-1.0, 0.0]), 0.5)
    np.testing.assert_allclose(cells, [0.2, 0.8], atol=1e-12)
    assert not saturated


def test_masked_distribution_removes_light_occupied_cells():
    h = np.array([[0.6, 0.4], [0.0, 0.0]])
    m = np.array([[0.0, -1.0], [0.0, 0.0]])
    cells, saturated = masked_distribution(h, m, 0.5)
    np.testing.assert_allclose(cells, [[1.0, 0.0], [0.0, 0.0]])
    assert not saturated


def test_masked_distribution_is_always_a_distribution():
    rng = np.random.default_rng(11)
    for _ in range(10_000):
        h = rng.random((120, 12)) * (rng.random((120, 12)) < 0.5)
        h[rng.integers(120), rng.integers(12)] += 1e-3
        h /= h.sum()
        m = -(rng.random((120, 12)) < rng.random()).astype(float)
        delta = float(rng.choice([0.0, rng.random() * 1e-3, rng.random()]))
        cells, _ = masked_distribution(h, m, delta)
        assert (cells >= 0).all()
        assert abs(cells.sum() - 1.0) <= 1e-9


def test_nms_never_emits_suppressed_cells():
    """Occupied cells with h <= delta get zero mass and are never sampled"""
    rng = np.random.default_rng(12)
    for _ in range(1000):
        h = rng.random((120, 12)) ** 4
        h /= h.sum()
        m = -(rng.random((120, 12)) < 0.6).astype(np.int8)
        free = rng.integers(120), rng.integers(12)
        m[free] = 0
        h[free] += 0.01
        delta = float(rng.uniform(1e-5, 5e-3))
        masked = apply_mask(PolarHeatmap(h / h.sum()), RadialOccupancyMask(m), delta)
        assert not masked.mask_saturated
        suppressed = (m == -1) & (h / h.sum() <= delta)
        for w in nms_sample(masked, k=int(rng.integers(1, 9))):
            assert not suppressed[w.heading_bin, w.range_bin]


def test_masked_distribution_saturation_falls_back_to_heatmap():
    h = np.array([[1.0, 0.0]])
    m = np.array([[-1.0, 0.0]])
    cells, saturated = masked_distribution(h, m, 2.0)
    assert saturated
    np.testing.assert_allclose(cells, h)


def test_masked_distribution_contracts():
    with pytest.raises(ContractViolation):
        masked_distribution(np.ones((2, 2)), np.ones((3, 2)), 0.1)
    with pytest.raises(ContractViolation):
        masked_distribution(np.ones((2, 2)), np.zeros((2, 2)), -1.0)


def test_mask_drops_waypoint_behind_wall(walled_scene):
    """A heavy enough mask weight moves the top waypoint off the occluded cell"""
    pose = walled_scene.start
    cells = np.zeros((120, 12))
    cells[0, 6] = 0.6  # 1.6 m ahead, behind the wall
    cells[30, 6] = 0.4
    heat = PolarHeatmap(cells, center=pose)
    mask = sense_mask(walled_scene, pose, LidarConfig())
    assert mask.cells[0, 6] == -1
    assert nms_sample(heat, k=1)[0].heading_bin == 0
    masked = apply_mask(heat, mask, delta=0.6)
    assert nms_sample(masked, k=1)[0].heading_bin == 30
    assert [w.heading_bin for w in nms_sample(apply_mask(heat, mask, 0.0), k=1)] == [0]


def test_nms_ties_and_suppression():
    cells = np.zeros((120, 12))
    cells[:, 2:] = 1.0
    heat = PolarHeatmap(cells / cells.sum(), center=Pose(0.0, 0.0, 0.0))
    wps = nms_sample(heat, k=5)
    assert [(w.heading_bin, w.range_bin) for w in wps] == [(0, 2), (0, 4), (0, 6), (0, 8), (0, 10)]
    assert wps[0].position.x == pytest.approx(0.625 * np.cos(np.radians(1.5)))


def test_nms_wraps_heading_and_stops_on_empty():
    cells = np.zeros((120, 12))
    cells[0, 5] = 0.5
    cells[119, 5] = 0.3
    cells[60, 5] = 0.2
    wps = nms_sample(PolarHeatmap(cells), k=5)
    assert [(w.heading_bin, w.range_bin) for w in wps] == [(0, 5), (60, 5)]
    with pytest.raises(ContractViolation):
        nms_sample(PolarHeatmap(cells), k=0)


def test_noise_spill_moves_mass_off_support(walled_scene):
    base = oracle_heatmap(walled_scene, walled_scene.start)
    noisy = noisy_heatmap(base, 0.2, 1, seed=9)
    support = base.cells > 0
    assert noisy.cells.sum() == pytest.approx(1.0)
    spilled = noisy.cells > 0
    assert (spilled & ~support).any()
    assert noisy.cells[:, :2].sum() == 0.0
    # support keeps its shape; spill only lands one bin away from it
    ratio = noisy.cells[support] / base.cells[support]
    assert ratio.max() == pytest.approx(ratio.min())
    near = neighbour_mass(support.astype(float), 1) > 0
    assert not (spilled & ~near).any()
    # a spilled cell never exceeds twice spill times its neighbours' mass
    scale = 1.0 / ratio[0]
    adjacent = neighbour_mass(base.cells, 1)
    ring = spilled & ~support
    assert (noisy.cells[ring] * scale <= 2 * 0.2 * adjacent[ring] + 1e-12).all()

    again = noisy_heatmap(base, 0.2, 1, seed=9)
    np.testing.assert_array_equal(noisy.cells, again.cells)
    np.testing.assert_array_equal(noisy_heatmap(base, 0.0, 1, seed=9).cells, base.cells)


def test_neighbour_mass_wraps_heading_only():
    cells = np.zeros((120, 12))
    cells[0, 0] = 1.0
    summed = neighbour_mass(cells, 1)
    assert summed[119, 1] == 1.0
    assert summed[1, 1] == 1.0
    assert summed[:, 11].sum() == 0.0
    assert summed.sum() == 6.0


def test_jitter_keeps_support(open_scene):
    base = oracle_heatmap(open_scene, open_scene.start)
    jittered = jitter_heatmap(base, 0.5, seed=2)
    np.testing.assert_array_equal(jittered.cells > 0, base.cells > 0)
    assert jittered.cells.sum() == pytest.approx(1.0)
    assert jitter_heatmap(base, 0.0, seed=2) is base


def test_heatmap_file_round_trip(tmp_path, open_scene):
    heat = noisy_heatmap(oracle_heatmap(open_scene, open_scene.start), 0.1, 1, seed=1)
    path = tmp_path / "heat.txt"
    save_heatmap(heat, path)
    loaded = load_heatmap(path)
    np.testing.assert_allclose(loaded.cells, heat.cells, rtol=1e-9)


def test_heatmap_file_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    np.savetxt(bad, np.ones((4, 12)))
    with pytest.raises(ScenarioIOError):
        load_heatmap(bad)
    with pytest.raises(ScenarioIOError):
        load_heatmap(tmp_path / "missing.txt")
    negative = tmp_path / "neg.txt"
    np.savetxt(negative, -np.ones((120, 12)))
    with pytest.raises(ScenarioIOError):
        load_heatmap(negative)


def test_empty_mask_changes_nothing(open_scene):
    heat = oracle_heatmap(open_scene, open_scene.start)
    mask = RadialOccupancyMask(np.zeros((120, 12), dtype=np.int8))
    np.testing.assert_allclose(apply_mask(heat, mask).cells, heat.cells)
