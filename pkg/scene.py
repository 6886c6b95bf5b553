"""
World model: occupancy raster, agent kinematics, ray casting and geodesic
distances to the goal.

Cell (row, col) covers x in [col*res, (col+1)*res) and y in [row*res, (row+1)*res).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import binary_dilation
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from geometry import FORWARD_STEP, TURN_STEP, Action, Point2D, Pose
from nav_config import ContractViolation

DEFAULT_RESOLUTION = 0.05
DEFAULT_AGENT_RADIUS = 0.18
# position rounding after a Forward, keeps cos(90deg) residue out of poses
POSE_DECIMALS = 9


def disk_footprint(radius_cells: float) -> np.ndarray:
    r = int(math.floor(radius_cells))
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return (xx * xx + yy * yy) <= radius_cells * radius_cells


@dataclass(eq=False)
class Scene:
    id: str
    resolution: float
    occupancy: np.ndarray
    start: Pose
    goal: Point2D
    heightfield: Optional[np.ndarray] = None
    agent_radius: float = DEFAULT_AGENT_RADIUS
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.resolution <= 0:
            raise ContractViolation(f"scene {self.id}: resolution must be > 0")
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        if self.occupancy.ndim != 2 or self.occupancy.size == 0:
            raise ContractViolation(f"scene {self.id}: occupancy must be a non-empty 2D raster")
        if self.heightfield is not None:
            self.heightfield = np.asarray(self.heightfield, dtype=float)
            if self.heightfield.shape != self.occupancy.shape:
                raise ContractViolation(f"scene {self.id}: heightfield shape mismatch")

    @property
    def height(self) -> int:
        return self.occupancy.shape[0]

    @property
    def width(self) -> int:
        return self.occupancy.shape[1]

    def cell_of(self, x: float, y: float) -> Tuple[int, int]:
        return int(math.floor(y / self.resolution)), int(math.floor(x / self.resolution))

    def cell_center(self, row: int, col: int) -> Point2D:
        return Point2D((col + 0.5) * self.resolution, (row + 0.5) * self.resolution)

    def in_bounds(self, x: float, y: float) -> bool:
        row, col = self.cell_of(x, y)
        return 0 <= row < self.height and 0 <= col < self.width

    def is_occupied(self, point: Point2D) -> bool:
        if not self.in_bounds(point.x, point.y):
            return True
        return bool(self.occupancy[self.cell_of(point.x, point.y)])

    @cached_property
    def navigable(self) -> np.ndarray:
        """Cells the agent's center may occupy (occupancy dilated by the agent disc)"""
        footprint = disk_footprint(self.agent_radius / self.resolution)
        return ~binary_dilation(self.occupancy, structure=footprint)

    def is_navigable(self, point: Point2D) -> bool:
        if not self.in_bounds(point.x, point.y):
            return False
        return bool(self.navigable[self.cell_of(point.x, point.y)])

    def navigable_at(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Vectorized is_navigable; out-of-bounds points are not navigable"""
        rows = np.floor(np.asarray(ys) / self.resolution).astype(int)
        cols = np.floor(np.asarray(xs) / self.resolution).astype(int)
        inside = (rows >= 0) & (rows < self.height) & (cols >= 0) & (cols < self.width)
        result = np.zeros(rows.shape, dtype=bool)
        result[inside] = self.navigable[rows[inside], cols[inside]]
        return result

    def segments_free(self, origin: Point2D, ends_x: np.ndarray, ends_y: np.ndarray) -> np.ndarray:
        """For each end point, whether the straight segment from origin stays navigable"""
        ends_x = np.asarray(ends_x, dtype=float)
        ends_y = np.asarray(ends_y, dtype=float)
        lengths = np.hypot(ends_x - origin.x, ends_y - origin.y)
        n = int(math.ceil(float(lengths.max(initial=0.0)) / (self.resolution / 4))) + 1
        t = np.linspace(0.0, 1.0, max(n, 2))
        xs = origin.x + (ends_x[..., None] - origin.x) * t
        ys = origin.y + (ends_y[..., None] - origin.y) * t
        return self.navigable_at(xs, ys).all(axis=-1)

    def segment_free(self, a: Point2D, b: Point2D) -> bool:
        return bool(self.segments_free(a, np.array([b.x]), np.array([b.y]))[0])

    @cached_property
    def geodesic_field(self) -> np.ndarray:
        """Shortest 8-connected path length (meters) from every cell to the goal"""
        field_ = np.full(self.occupancy.shape, np.inf)
        free = self.navigable
        if not self.in_bounds(self.goal.x, self.goal.y):
            return field_
        goal_cell = self.cell_of(self.goal.x, self.goal.y)
        if not free[goal_cell]:
            return field_

        h, w = free.shape
        index = np.arange(h * w).reshape(h, w)
        rows, cols, weights = [], [], []
        res = self.resolution
        for dr, dc, cost in ((0, 1, res), (1, 0, res), (1, 1, res * math.sqrt(2)), (1, -1, res * math.sqrt(2))):
            r0, r1 = max(0, -dr), h - max(0, dr)
            c0, c1 = max(0, -dc), w - max(0, dc)
            a = free[r0:r1, c0:c1]
            b = free[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
            both = a & b
            rows.append(index[r0:r1, c0:c1][both])
            cols.append(index[r0 + dr:r1 + dr, c0 + dc:c1 + dc][both])
            weights.append(np.full(int(both.sum()), cost))
        graph = coo_matrix(
            (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))),
            shape=(h * w, h * w),
        ).tocsr()
        dist = dijkstra(graph, directed=False, indices=int(index[goal_cell]))
        field_ = dist.reshape(h, w)
        field_[~free] = np.inf
        return field_


def _check_pose(scene: Scene, pose: Pose):
    if not scene.in_bounds(pose.x, pose.y):
        raise ContractViolation(f"pose ({pose.x:.3f}, {pose.y:.3f}) outside scene {scene.id}")


def step(scene: Scene, pose: Pose, action: Action) -> Tuple[Pose, bool]:
    """Apply one action; returns (new pose, collided). Blocked Forwards do not slide."""
    _check_pose(scene, pose)
    if action is Action.TURN_LEFT:
        return Pose(pose.x, pose.y, pose.heading + TURN_STEP), False
    if action is Action.TURN_RIGHT:
        return Pose(pose.x, pose.y, pose.heading - TURN_STEP), False
    if action is Action.STOP:
        return pose, False

    end = pose.offset(0.0, FORWARD_STEP)
    end = Point2D(round(end.x, POSE_DECIMALS), round(end.y, POSE_DECIMALS))
    if not scene.segment_free(pose.point, end):
        return pose, True
    return Pose(end.x, end.y, pose.heading), False


def cast_rays(
    scene: Scene,
    origin: Point2D,
    angles: np.ndarray,
    max_range: float,
    ray_height: float,
    slopes=0.0,
) -> np.ndarray:
    """
    Vectorized grid traversal (Amanatides-Woo DDA) of many rays from one origin.

    Each ray's height is ray_height + slope * horizontal_distance. A ray hits an
    occupied cell when it passes at or below the cell's heightfield top (cells
    without a heightfield are full height). Leaving the raster counts as a hit.
    Rays that drop below the floor return max_range. Returned distances are
    horizontal and lie in (0, max_range].
    """
    if max_range <= 0:
        raise ContractViolation("max_range must be > 0")
    res = scene.resolution
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    n = angles.shape[0]
    slopes = np.broadcast_to(np.asarray(slopes, dtype=float), (n,))
    rad = np.radians(angles)
    dx = np.cos(rad)
    dy = np.sin(rad)
    dx[np.abs(dx) < 1e-12] = 0.0
    dy[np.abs(dy) < 1e-12] = 0.0

    ix = np.full(n, int(math.floor(origin.x / res)))
    iy = np.full(n, int(math.floor(origin.y / res)))
    step_x = np.where(dx > 0, 1, -1)
    step_y = np.where(dy > 0, 1, -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        tmax_x = np.where(dx != 0, ((ix + (dx > 0)) * res - origin.x) / dx, np.inf)
        tmax_y = np.where(dy != 0, ((iy + (dy > 0)) * res - origin.y) / dy, np.inf)
        tdelta_x = np.where(dx != 0, res / np.abs(dx), np.inf)
        tdelta_y = np.where(dy != 0, res / np.abs(dy), np.inf)

    result = np.full(n, float(max_range))
    active = np.ones(n, dtype=bool)
    height, width = scene.occupancy.shape
    hf = scene.heightfield
    max_iter = 2 * (int(math.ceil(max_range / res)) + 2)

    for _ in range(max_iter):
        if not active.any():
            break
        use_x = tmax_x < tmax_y
        t_enter = np.where(use_x, tmax_x, tmax_y)
        ix = np.where(use_x, ix + step_x, ix)
        iy = np.where(use_x, iy, iy + step_y)
        tmax_x = np.where(use_x, tmax_x + tdelta_x, tmax_x)
        tmax_y = np.where(use_x, tmax_y, tmax_y + tdelta_y)

        z_in = ray_height + slopes * t_enter
        done = active & ((t_enter >= max_range) | (z_in < 0.0))
        active &= ~done

        outside = active & ((ix < 0) | (ix >= width) | (iy < 0) | (iy >= height))
        result[outside] = t_enter[outside]
        active &= ~outside
        if not active.any():
            break

        occupied = np.zeros(n, dtype=bool)
        occupied[active] = scene.occupancy[iy[active], ix[active]]
        cand = active & occupied
        if not cand.any():
            continue
        if hf is None:
            result[cand] = t_enter[cand]
            active &= ~cand
            continue

        top = np.full(n, np.inf)
        top[cand] = hf[iy[cand], ix[cand]]
        t_exit = np.minimum(np.minimum(tmax_x, tmax_y), max_range)
        z_out = ray_height + slopes * t_exit
        hit = cand & (np.minimum(z_in, z_out) <= top) & (np.maximum(z_in, z_out) >= 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            # descending ray entering above the top: hit where it crosses the top
            t_cross = np.where(slopes != 0, (top - ray_height) / slopes, t_enter)
        t_hit = np.where(z_in <= top, t_enter, t_cross)
        result[hit] = t_hit[hit]
        active &= ~hit

    return np.clip(result, 1e-6, max_range)


def raycast(scene: Scene, origin: Point2D, angle: float, max_range: float, ray_height: float) -> float:
    """Distance to the first occupied cell at least ray_height tall along angle (degrees)"""
    return float(cast_rays(scene, origin, np.array([angle]), max_range, ray_height)[0])


def geodesic(scene: Scene, point: Point2D) -> float:
    """Geodesic distance to the goal from the cell containing point (inf if blocked or cut off)"""
    if not scene.in_bounds(point.x, point.y):
        return math.inf
    return float(scene.geodesic_field[scene.cell_of(point.x, point.y)])
