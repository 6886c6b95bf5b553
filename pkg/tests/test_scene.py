import heapq
import math

import numpy as np
import pytest

from conftest import make_scene, room
from geometry import Action, Point2D, Pose
from nav_config import ContractViolation
from scene import cast_rays, disk_footprint, geodesic, raycast, step


def test_disk_footprint_for_default_agent():
    fp = disk_footprint(0.18 / 0.05)
    assert fp.shape == (7, 7)
    assert fp[3].sum() == 7
    assert fp[0].sum() == 3


def test_forward_and_turns(open_scene):
    pose, hit = step(open_scene, open_scene.start, Action.FORWARD)
    assert not hit
    assert (pose.x, pose.y, pose.heading) == (2.25, 4.0, 0.0)
    pose, _ = step(open_scene, pose, Action.TURN_LEFT)
    assert pose.heading == 15.0
    pose, _ = step(open_scene, pose, Action.TURN_RIGHT)
    pose, _ = step(open_scene, pose, Action.TURN_RIGHT)
    assert pose.heading == 345.0
    assert step(open_scene, pose, Action.STOP) == (pose, False)


def test_blocked_forward_does_not_move(walled_scene):
    pose = Pose(2.75, 4.0, 0.0)
    after, hit = step(walled_scene, pose, Action.FORWARD)
    assert hit
    assert after == pose


def test_forward_along_axis_keeps_exact_coordinates(open_scene):
    pose = Pose(2.0, 2.0, 90.0)
    for _ in range(4):
        pose, _ = step(open_scene, pose, Action.FORWARD)
    assert pose.x == 2.0
    assert pose.y == 3.0


def test_step_outside_scene_raises(open_scene):
    with pytest.raises(ContractViolation):
        step(open_scene, Pose(-1.0, 4.0, 0.0), Action.FORWARD)


def test_raycast_hits_boundary(open_scene):
    assert raycast(open_scene, Point2D(2.0, 4.0), 0.0, 10.0, 1.0) == pytest.approx(5.9)
    assert raycast(open_scene, Point2D(2.0, 4.0), 180.0, 10.0, 1.0) == pytest.approx(1.9)
    assert raycast(open_scene, Point2D(2.0, 4.0), 0.0, 3.0, 1.0) == 3.0


def test_low_obstacle_only_blocks_low_rays():
    occ = room()
    occ[70:90, 60:70] = True
    heights = np.where(occ, 3.0, 0.0)
    heights[70:90, 60:70] = 0.5
    scene = make_scene(occ, Pose(2.0, 4.0, 0.0), Point2D(6.0, 4.0), heightfield=heights)
    assert raycast(scene, Point2D(2.0, 4.0), 0.0, 10.0, 1.0) == pytest.approx(5.9)
    assert raycast(scene, Point2D(2.0, 4.0), 0.0, 10.0, 0.3) == pytest.approx(1.0)
    # a ray descending from 1 m reaches 0.5 m one meter out and enters the box top
    sloped = cast_rays(scene, Point2D(2.0, 4.0), np.array([0.0]), 10.0, 1.0, slopes=-0.5)[0]
    assert sloped == pytest.approx(1.0, abs=0.06)


def _brute_geodesic(free, goal, res):
    h, w = free.shape
    dist = np.full(free.shape, np.inf)
    dist[goal] = 0.0
    heap = [(0.0, goal)]
    while heap:
        d, (r, c) = heapq.heappop(heap)
        if d > dist[r, c]:
            continue
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                nr, nc = r + dr, c + dc
                if (dr or dc) and 0 <= nr < h and 0 <= nc < w and free[nr, nc]:
                    nd = d + res * (math.sqrt(2) if dr and dc else 1.0)
                    if nd < dist[nr, nc]:
                        dist[nr, nc] = nd
                        heapq.heappush(heap, (nd, (nr, nc)))
    return dist


def test_geodesic_field_matches_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(20):
        h, w = (int(n) for n in rng.integers(8, 65, size=2))
        occ = rng.random((h, w)) < rng.uniform(0.1, 0.4)
        goal = int(rng.integers(h)), int(rng.integers(w))
        occ[goal] = False
        scene = make_scene(
            occ,
            Pose(0.025, 0.025, 0.0),
            Point2D(goal[1] * 0.05 + 0.025, goal[0] * 0.05 + 0.025),
            agent_radius=0.01,
        )
        expected = _brute_geodesic(scene.navigable, goal, 0.05)
        np.testing.assert_allclose(scene.geodesic_field, expected, atol=1e-9)


def test_geodesic_around_wall(walled_scene):
    d = geodesic(walled_scene, walled_scene.start.point)
    assert d > walled_scene.start.point.distance_to(walled_scene.goal)
    assert math.isfinite(d)
    assert geodesic(walled_scene, Point2D(3.05, 4.0)) == math.inf
    assert geodesic(walled_scene, Point2D(-1.0, 4.0)) == math.inf


def test_navigable_respects_agent_radius(open_scene):
    assert not open_scene.is_navigable(Point2D(0.2, 4.0))
    assert open_scene.is_navigable(Point2D(0.3, 4.0))
    assert open_scene.is_occupied(Point2D(0.05, 4.0))
    assert not open_scene.is_occupied(Point2D(0.2, 4.0))


def test_invalid_scene_rejected():
    with pytest.raises(ContractViolation):
        make_scene(np.zeros((0, 0)), Pose(0, 0), Point2D(0, 0))
    with pytest.raises(ContractViolation):
        make_scene(room(), Pose(1, 1), Point2D(1, 1), heightfield=np.zeros((3, 3)))
