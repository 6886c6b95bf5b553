"""
Jump Point Search on an egocentric occupancy grid.

The grid is GRID_SIZE x GRID_SIZE cells centered on the agent, with the agent
heading along +col and its left along +row. Diagonal moves need both adjacent
axial cells free, so no path cuts an obstacle corner.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.ndimage import binary_dilation

from geometry import Point2D, Pose
from nav_config import ContractViolation

GRID_SIZE = 50
CENTER = (GRID_SIZE // 2, GRID_SIZE // 2)
DEFAULT_CELL_SIZE = 0.12
SQRT2 = math.sqrt(2.0)

Cell = Tuple[int, int]  # (row, col)


@dataclass
class EgoGrid:
    cells: np.ndarray  # bool, True = occupied
    cell_size: float = DEFAULT_CELL_SIZE
    pose: Optional[Pose] = None

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=bool)
        if self.cells.ndim != 2:
            raise ContractViolation("ego grid must be two dimensional")

    @classmethod
    def empty(cls, size: int = GRID_SIZE, cell_size: float = DEFAULT_CELL_SIZE, pose: Optional[Pose] = None) -> "EgoGrid":
        return cls(np.zeros((size, size), dtype=bool), cell_size, pose)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.cells.shape

    @property
    def center(self) -> Cell:
        return self.cells.shape[0] // 2, self.cells.shape[1] // 2

    def inside(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.cells.shape[0] and 0 <= cell[1] < self.cells.shape[1]

    def walkable(self, row: int, col: int) -> bool:
        return 0 <= row < self.cells.shape[0] and 0 <= col < self.cells.shape[1] and not self.cells[row, col]

    def cell_of(self, point: Point2D) -> Cell:
        """Ego cell of a world point (may lie outside the grid)"""
        pose = self.pose or Pose(0.0, 0.0, 0.0)
        a = math.radians(pose.heading)
        dx, dy = point.x - pose.x, point.y - pose.y
        forward = dx * math.cos(a) + dy * math.sin(a)
        left = -dx * math.sin(a) + dy * math.cos(a)
        r0, c0 = self.center
        return r0 + int(round(left / self.cell_size)), c0 + int(round(forward / self.cell_size))

    def world_of(self, cell: Cell) -> Point2D:
        pose = self.pose or Pose(0.0, 0.0, 0.0)
        r0, c0 = self.center
        forward = (cell[1] - c0) * self.cell_size
        left = (cell[0] - r0) * self.cell_size
        a = math.radians(pose.heading)
        return Point2D(
            pose.x + forward * math.cos(a) - left * math.sin(a),
            pose.y + forward * math.sin(a) + left * math.cos(a),
        )

    def clamp(self, cell: Cell) -> Cell:
        """Nearest grid cell on the segment from the center toward cell"""
        if self.inside(cell):
            return cell
        r0, c0 = self.center
        dr, dc = cell[0] - r0, cell[1] - c0
        limit_r, limit_c = self.cells.shape[0] - 1 - r0, self.cells.shape[1] - 1 - c0
        scale = 1.0
        if dr:
            scale = min(scale, (limit_r if dr > 0 else r0) / abs(dr))
        if dc:
            scale = min(scale, (limit_c if dc > 0 else c0) / abs(dc))
        row = min(max(r0 + int(round(dr * scale)), 0), self.cells.shape[0] - 1)
        col = min(max(c0 + int(round(dc * scale)), 0), self.cells.shape[1] - 1)
        return row, col


class PlanStatus(Enum):
    OK = "ok"
    GOAL_UNREACHABLE = "goal_unreachable"
    START_INVALID = "start_invalid"


@dataclass
class GridPath:
    cells: List[Cell]
    axial: int = 0
    diagonal: int = 0
    cell_size: float = 1.0

    @property
    def cost_cells(self) -> float:
        return self.axial + self.diagonal * SQRT2

    @property
    def cost(self) -> float:
        return self.cost_cells * self.cell_size


@dataclass
class PlanResult:
    status: PlanStatus
    path: Optional[GridPath] = None
    expanded: int = 0


def project_to_grid(
    scan: np.ndarray,
    pose: Optional[Pose] = None,
    cell_size: float = DEFAULT_CELL_SIZE,
    max_range: float = 3.0,
    noise: bool = False,
    seed: int = 0,
    size: int = GRID_SIZE,
) -> EgoGrid:
    """Mark the cell of every LiDAR return, then dilate by one cell"""
    scan = np.asarray(scan, dtype=float)
    grid = EgoGrid.empty(size, cell_size, pose)
    hits = scan < max_range
    if not hits.any():
        return grid
    angles = np.radians(np.arange(scan.shape[0]) * (360.0 / scan.shape[0]))[hits]
    r = scan[hits]
    r0, c0 = grid.center
    rows = r0 + np.rint(r * np.sin(angles) / cell_size).astype(int)
    cols = c0 + np.rint(r * np.cos(angles) / cell_size).astype(int)
    if noise:
        rng = np.random.default_rng(seed)
        rows = rows + rng.integers(-1, 2, size=rows.shape)
        cols = cols + rng.integers(-1, 2, size=cols.shape)
    inside = (rows >= 0) & (rows < size) & (cols >= 0) & (cols < size)
    raw = np.zeros((size, size), dtype=bool)
    raw[rows[inside], cols[inside]] = True
    grid.cells = binary_dilation(raw, structure=np.ones((3, 3), dtype=bool))
    return grid


def _octile(a: Cell, b: Cell) -> float:
    dr, dc = abs(a[0] - b[0]), abs(a[1] - b[1])
    return (SQRT2 - 1.0) * min(dr, dc) + max(dr, dc)


def _sign(v: int) -> int:
    return (v > 0) - (v < 0)


class _JumpPointSearch:
    # x = col, y = row throughout

    def __init__(self, grid: EgoGrid, goal: Cell):
        self.grid = grid
        self.goal = goal

    def ok(self, x: int, y: int) -> bool:
        return self.grid.walkable(y, x)

    def jump(self, x: int, y: int, px: int, py: int) -> Optional[Tuple[int, int]]:
        while True:
            dx, dy = x - px, y - py
            if not self.ok(x, y):
                return None
            if (y, x) == self.goal:
                return x, y
            if dx and dy:
                if self.jump(x + dx, y, x, y) or self.jump(x, y + dy, x, y):
                    return x, y
                if not (self.ok(x + dx, y) and self.ok(x, y + dy)):
                    return None
            elif dx:
                if (self.ok(x, y - 1) and not self.ok(x - dx, y - 1)) or (self.ok(x, y + 1) and not self.ok(x - dx, y + 1)):
                    return x, y
            else:
                if (self.ok(x - 1, y) and not self.ok(x - 1, y - dy)) or (self.ok(x + 1, y) and not self.ok(x + 1, y - dy)):
                    return x, y
            px, py = x, y
            x, y = x + dx, y + dy

    def neighbors(self, x: int, y: int, parent: Optional[Tuple[int, int]]) -> List[Tuple[int, int]]:
        ok = self.ok
        if parent is None:
            out = []
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    if not (dx or dy) or not ok(x + dx, y + dy):
                        continue
                    if dx and dy and not (ok(x + dx, y) and ok(x, y + dy)):
                        continue
                    out.append((x + dx, y + dy))
            return out

        dx, dy = _sign(x - parent[0]), _sign(y - parent[1])
        out = []
        if dx and dy:
            if ok(x, y + dy):
                out.append((x, y + dy))
            if ok(x + dx, y):
                out.append((x + dx, y))
            if ok(x, y + dy) and ok(x + dx, y):
                out.append((x + dx, y + dy))
        elif dx:
            up, down = ok(x, y + 1), ok(x, y - 1)
            if ok(x + dx, y):
                out.append((x + dx, y))
                if up:
                    out.append((x + dx, y + 1))
                if down:
                    out.append((x + dx, y - 1))
            if up:
                out.append((x, y + 1))
            if down:
                out.append((x, y - 1))
        else:
            right, left = ok(x + 1, y), ok(x - 1, y)
            if ok(x, y + dy):
                out.append((x, y + dy))
                if right:
                    out.append((x + 1, y + dy))
                if left:
                    out.append((x - 1, y + dy))
            if right:
                out.append((x + 1, y))
            if left:
                out.append((x - 1, y))
        return out


def _check_endpoints(grid: EgoGrid, start: Cell, goal: Cell) -> Optional[PlanStatus]:
    if not grid.inside(start) or not grid.inside(goal):
        raise ContractViolation(f"start {start} or goal {goal} outside the {grid.shape} grid")
    if grid.cells[start]:
        return PlanStatus.START_INVALID
    if grid.cells[goal]:
        return PlanStatus.GOAL_UNREACHABLE
    return None


def _line(a: Cell, b: Cell) -> List[Cell]:
    """Cells from a (exclusive) to b along a straight or diagonal run"""
    dr, dc = _sign(b[0] - a[0]), _sign(b[1] - a[1])
    n = max(abs(b[0] - a[0]), abs(b[1] - a[1]))
    return [(a[0] + dr * i, a[1] + dc * i) for i in range(1, n + 1)]


def _build_path(points: List[Cell], cell_size: float) -> GridPath:
    cells = [points[0]]
    axial = diagonal = 0
    for a, b in zip(points, points[1:]):
        run = _line(a, b)
        if a[0] != b[0] and a[1] != b[1]:
            diagonal += len(run)
        else:
            axial += len(run)
        cells.extend(run)
    return GridPath(cells, axial, diagonal, cell_size)


def plan(grid: EgoGrid, start: Cell, goal: Cell) -> PlanResult:
    """A* over jump points with the octile heuristic"""
    start, goal = tuple(start), tuple(goal)
    status = _check_endpoints(grid, start, goal)
    if status is not None:
        return PlanResult(status)
    search = _JumpPointSearch(grid, goal)

    g: Dict[Cell, float] = {start: 0.0}
    parent: Dict[Cell, Optional[Cell]] = {start: None}
    closed = set()
    counter = 0
    heap = [(_octile(start, goal), counter, start)]
    expanded = 0
    while heap:
        _, _, node = heapq.heappop(heap)
        if node in closed:
            continue
        closed.add(node)
        expanded += 1
        if node == goal:
            points = []
            cur: Optional[Cell] = node
            while cur is not None:
                points.append(cur)
                cur = parent[cur]
            return PlanResult(PlanStatus.OK, _build_path(points[::-1], grid.cell_size), expanded)
        y, x = node
        par = parent[node]
        par_xy = None if par is None else (par[1], par[0])
        for nx, ny in search.neighbors(x, y, par_xy):
            jp = search.jump(nx, ny, x, y)
            if jp is None:
                continue
            jcell = (jp[1], jp[0])
            if jcell in closed:
                continue
            cost = g[node] + _octile(node, jcell)
            if cost < g.get(jcell, math.inf):
                g[jcell] = cost
                parent[jcell] = node
                counter += 1
                heapq.heappush(heap, (cost + _octile(jcell, goal), counter, jcell))
    return PlanResult(PlanStatus.GOAL_UNREACHABLE, expanded=expanded)


def grid_dijkstra(grid: EgoGrid, start: Cell, goal: Cell) -> PlanResult:
    """Plain 8-connected Dijkstra with the same corner rule, used as a reference"""
    start, goal = tuple(start), tuple(goal)
    status = _check_endpoints(grid, start, goal)
    if status is not None:
        return PlanResult(status)
    dist: Dict[Cell, float] = {start: 0.0}
    parent: Dict[Cell, Optional[Cell]] = {start: None}
    closed = set()
    heap = [(0.0, start)]
    expanded = 0
    while heap:
        d, node = heapq.heappop(heap)
        if node in closed:
            continue
        closed.add(node)
        expanded += 1
        if node == goal:
            points = []
            cur: Optional[Cell] = node
            while cur is not None:
                points.append(cur)
                cur = parent[cur]
            return PlanResult(PlanStatus.OK, _build_path(points[::-1], grid.cell_size), expanded)
        r, c = node
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if not (dr or dc) or not grid.walkable(r + dr, c + dc):
                    continue
                if dr and dc and not (grid.walkable(r + dr, c) and grid.walkable(r, c + dc)):
                    continue
                nd = d + (SQRT2 if dr and dc else 1.0)
                nxt = (r + dr, c + dc)
                if nd < dist.get(nxt, math.inf):
                    dist[nxt] = nd
                    parent[nxt] = node
                    heapq.heappush(heap, (nd, nxt))
    return PlanResult(PlanStatus.GOAL_UNREACHABLE, expanded=expanded)


def dump_grid(grid: EgoGrid, path: Optional[GridPath] = None) -> str:
    """One line per row, '.' free, '#' occupied, '*' path, 'A' agent cell"""
    chars = np.where(grid.cells, "#", ".").astype("<U1")
    if path is not None:
        for cell in path.cells:
            chars[cell] = "*"
    chars[grid.center] = "A"
    return "\n".join("".join(row) for row in chars) + "\n"
