import numpy as np
import pytest

from conftest import make_scene, room
from geometry import Point2D, Pose
from lidar import (
    LidarConfig,
    RadialOccupancyMask,
    build_mask,
    fuse_masks,
    occupied_proportion,
    scan2d,
    scan3d,
    sense_mask,
    vertical_slopes,
    with_mode,
)
from nav_config import ConfigError, ContractViolation


@pytest.fixture
def low_box_scene():
    occ = room()
    heights = np.where(occ, 3.0, 0.0)
    occ[76:84, 64:72] = True  # x 3.2..3.6, y 3.8..4.2
    heights[76:84, 64:72] = 0.9
    return make_scene(occ, Pose(2.0, 4.0, 0.0), Point2D(6.0, 6.0), heightfield=heights, sid="low-box")


def test_config_shape():
    config = LidarConfig()
    assert config.n_readings == 1440
    assert config.readings_per_bin == 12
    assert config.range_bin_m == 0.25
    assert config.label() == "2D@1.5"


@pytest.mark.parametrize(
    "kwargs",
    [{"mode": "sonar"}, {"angular_resolution": 0.7}, {"range_noise_sigma": -1.0}, {"n_heading_bins": 7}],
)
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ConfigError):
        LidarConfig(**kwargs)


def test_build_mask_marks_hit_bin_and_beyond():
    config = LidarConfig()
    ranges = np.full(config.n_readings, config.max_range)
    assert build_mask(ranges, config).occupied_count == 0
    ranges[3] = 1.1
    mask = build_mask(ranges, config)
    assert mask.occupied_count == 8
    assert (mask.cells[0, 4:] == -1).all()
    assert (mask.cells[0, :4] == 0).all()
    assert (mask.cells[1:] == 0).all()


def test_build_mask_rejects_wrong_length():
    with pytest.raises(ContractViolation):
        build_mask(np.ones(10), LidarConfig())


def test_scan2d_sees_room_walls(open_scene):
    config = LidarConfig()
    ranges = scan2d(open_scene, open_scene.start, config)
    assert ranges.shape == (1440,)
    assert ranges[0] == pytest.approx(3.0)
    assert ranges[720] == pytest.approx(1.9)
    mask = build_mask(ranges, config)
    assert (mask.cells[60, 7:] == -1).all()
    assert mask.cells[0].sum() == 0


def test_scan_is_heading_relative(open_scene):
    config = LidarConfig()
    facing_wall = scan2d(open_scene, Pose(2.0, 4.0, 180.0), config)
    assert facing_wall[0] == pytest.approx(1.9)


def test_scan_from_obstacle_raises(open_scene):
    with pytest.raises(ContractViolation):
        scan2d(open_scene, Pose(0.05, 4.0, 0.0), LidarConfig())


def test_range_noise_is_seeded(open_scene):
    config = LidarConfig(range_noise_sigma=0.05)
    a = scan2d(open_scene, open_scene.start, config, seed=4)
    b = scan2d(open_scene, open_scene.start, config, seed=4)
    np.testing.assert_array_equal(a, b)
    assert a.max() <= config.max_range


def test_vertical_fan_includes_horizontal_ray():
    slopes = vertical_slopes(LidarConfig())
    assert slopes.shape == (17,)
    assert slopes[-1] == 0.0
    assert slopes[0] == pytest.approx(-np.tan(np.radians(11.25)))


def test_scan3d_never_exceeds_scan2d(low_box_scene):
    config = LidarConfig(sensor_height=1.0)
    for heading in (0.0, 45.0, 180.0):
        pose = Pose(2.0, 4.0, heading)
        assert (scan3d(low_box_scene, pose, config) <= scan2d(low_box_scene, pose, config) + 1e-9).all()


def test_fused_mask_sees_low_furniture(low_box_scene):
    pose = low_box_scene.start
    flat = sense_mask(low_box_scene, pose, with_mode(LidarConfig(), "2d", 1.5))
    fused = sense_mask(low_box_scene, pose, with_mode(LidarConfig(), "fused", 1.5, 1.0))
    assert flat.cells[0].sum() == 0
    assert fused.cells[0].sum() < 0
    assert occupied_proportion([fused]) > occupied_proportion([flat])
    assert (fused.cells <= flat.cells).all()


def test_fuse_masks_contracts():
    a = RadialOccupancyMask(np.zeros((120, 12), dtype=np.int8), Pose(0, 0))
    b = RadialOccupancyMask(np.zeros((120, 12), dtype=np.int8), Pose(1, 0))
    with pytest.raises(ContractViolation):
        fuse_masks(a, b)
    with pytest.raises(ContractViolation):
        fuse_masks(a, RadialOccupancyMask(np.zeros((4, 4), dtype=np.int8)))
    with pytest.raises(ContractViolation):
        occupied_proportion([])


def test_occupied_proportion():
    cells = np.zeros((120, 12), dtype=np.int8)
    cells[:60] = -1
    full = RadialOccupancyMask(cells)
    empty = RadialOccupancyMask(np.zeros((120, 12), dtype=np.int8))
    assert occupied_proportion([full, empty]) == pytest.approx(0.25)
