import json
import math

import numpy as np
import pytest

from conftest import make_scene, room
from geometry import Point2D, Pose
from lidar import LidarConfig, occupied_proportion, sense_mask, with_mode
from nav_config import GenerationError, ScenarioIOError
from scenarios import (
    FULL_HEIGHT,
    FURNITURE,
    OPEN,
    TRAPS,
    Recipe,
    decode_row,
    encode_row,
    generate_scenes,
    load_scene,
    load_scenes,
    path_hits_pocket,
    recipe_to_dict,
    save_scene,
    save_scenes,
    scene_from_dict,
    scene_to_dict,
)
from scene import geodesic


def small(recipe, count=3):
    return Recipe(**{**recipe_to_dict(recipe), "count": count})


def test_generation_is_deterministic():
    a = generate_scenes(small(OPEN), seed=5)
    b = generate_scenes(small(OPEN), seed=5)
    assert [s.id for s in a] == ["open-0000", "open-0001", "open-0002"]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.occupancy, y.occupancy)
        assert (x.start, x.goal) == (y.start, y.goal)
    c = generate_scenes(small(OPEN), seed=6)
    assert any(not np.array_equal(x.occupancy, y.occupancy) for x, y in zip(a, c))


def test_open_scenes_are_feasible():
    for scene in generate_scenes(small(OPEN), seed=1):
        assert scene.is_navigable(scene.start.point)
        assert scene.is_navigable(scene.goal)
        d = geodesic(scene, scene.start.point)
        assert math.isfinite(d) and d >= OPEN.min_distance
        assert scene.meta["geodesic"] == pytest.approx(d, abs=1e-6)
        assert scene.start.heading % 15 == 0
        assert scene.occupancy[:2].all() and scene.occupancy[:, -2:].all()


def test_trap_scenes_put_a_pocket_in_the_way():
    for scene in generate_scenes(small(TRAPS), seed=3):
        assert path_hits_pocket(scene)
        assert scene.start.x <= TRAPS.width_m * 0.25
        assert scene.goal.x >= TRAPS.width_m * 0.75
        assert geodesic(scene, scene.start.point) >= TRAPS.min_distance
        assert "door" not in scene.meta


def test_furniture_is_seen_by_the_fused_lidar_only():
    scenes = generate_scenes(small(FURNITURE, 4), seed=2)
    flat, fused = [], []
    for scene in scenes:
        assert scene.heightfield is not None
        assert "low_box" in scene.meta
        low = scene.occupancy & (scene.heightfield < FULL_HEIGHT)
        assert low.any()
        flat.append(sense_mask(scene, scene.start, with_mode(LidarConfig(), "2d", 1.5)))
        fused.append(sense_mask(scene, scene.start, with_mode(LidarConfig(), "fused", 1.5, 1.0)))
    for a, b in zip(flat, fused):
        assert occupied_proportion([b]) >= occupied_proportion([a])
    assert occupied_proportion(fused) > occupied_proportion(flat)


def test_infeasible_recipe_raises():
    with pytest.raises(GenerationError):
        generate_scenes(Recipe("tiny", count=1, min_distance=50.0), seed=0)
    with pytest.raises(GenerationError):
        generate_scenes(Recipe("none", count=0), seed=0)
    with pytest.raises(GenerationError):
        Recipe("dense", density=0.9).validate()


def test_row_encoding():
    row = np.array([False, False, True, True, True, False])
    assert encode_row(row) == "2.3#1."
    np.testing.assert_array_equal(decode_row("2.3#1.", 6), row)
    with pytest.raises(ScenarioIOError):
        decode_row("2.x3#", 5)
    with pytest.raises(ScenarioIOError):
        decode_row("2.3#", 6)


def test_scene_file_round_trip(tmp_path):
    scenes = generate_scenes(small(FURNITURE, 2), seed=9)
    save_scenes(scenes, tmp_path / "suite")
    loaded = load_scenes(tmp_path / "suite")
    assert [s.id for s in loaded] == [s.id for s in scenes]
    for original, copy in zip(scenes, loaded):
        np.testing.assert_array_equal(original.occupancy, copy.occupancy)
        np.testing.assert_allclose(
            np.where(original.occupancy, original.heightfield, 0.0),
            np.where(copy.occupancy, copy.heightfield, 0.0),
        )
        assert copy.start == original.start
        assert copy.goal == original.goal
    single = load_scenes(tmp_path / "suite" / f"{scenes[1].id}.json")
    assert [s.id for s in single] == [scenes[1].id]


def test_scene_without_heights(tmp_path, open_scene):
    path = tmp_path / "open.json"
    save_scene(open_scene, path)
    doc = json.loads(path.read_text())
    assert "heights" not in doc
    assert doc["rows"][0] == "160#"
    assert load_scene(path).heightfield is None


def test_bad_scene_files(tmp_path):
    with pytest.raises(ScenarioIOError):
        load_scenes(tmp_path / "missing")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(ScenarioIOError):
        load_scenes(empty)
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    with pytest.raises(ScenarioIOError):
        load_scene(broken)

    doc = scene_to_dict(make_scene(room(), Pose(2.0, 4.0), Point2D(4.0, 4.0)))
    doc["start"] = {"x": 0.05, "y": 4.0}
    with pytest.raises(ScenarioIOError):
        scene_from_dict(doc)
    doc = scene_to_dict(make_scene(room(), Pose(2.0, 4.0), Point2D(4.0, 4.0)))
    del doc["rows"][0]
    with pytest.raises(ScenarioIOError):
        scene_from_dict(doc)
