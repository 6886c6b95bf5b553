import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from geometry import Point2D, Pose  # noqa: E402
from scene import Scene  # noqa: E402

RES = 0.05


def room(width_m=8.0, height_m=8.0, res=RES, wall_cells=2):
    """Empty rectangular room with a solid boundary wall"""
    occ = np.zeros((int(round(height_m / res)), int(round(width_m / res))), dtype=bool)
    occ[:wall_cells, :] = True
    occ[-wall_cells:, :] = True
    occ[:, :wall_cells] = True
    occ[:, -wall_cells:] = True
    return occ


def make_scene(occ, start, goal, res=RES, heightfield=None, sid="test", agent_radius=0.18):
    return Scene(
        id=sid,
        resolution=res,
        occupancy=occ,
        start=start,
        goal=goal,
        heightfield=heightfield,
        agent_radius=agent_radius,
    )


@pytest.fixture
def open_scene():
    """8 x 8 m empty room, start facing the goal 2 m ahead"""
    return make_scene(room(), Pose(2.0, 4.0, 0.0), Point2D(4.0, 4.0), sid="open-room")


@pytest.fixture
def walled_scene():
    """Room with a 2 m wall segment between start and goal"""
    occ = room()
    occ[60:100, 60:62] = True  # x 3.0..3.1, y 3.0..5.0
    return make_scene(occ, Pose(2.0, 4.0, 0.0), Point2D(6.0, 4.0), sid="walled-room")
