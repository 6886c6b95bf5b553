"""
Synthetic scene suites and scenario file IO.

Scenario files are JSON documents, one scene per file:

    {
      "id": "traps-0003", "resolution": 0.05, "width": 160, "height": 160,
      "agent_radius": 0.18,
      "rows": ["160#", "2#156.2#", ...],
      "heights": [[row, col, meters], ...],       # optional
      "start": {"x": 1.2, "y": 3.4, "heading": 90.0},
      "goal": {"x": 6.5, "y": 3.1},
      "meta": {...}
    }

Each entry of "rows" run-length encodes one raster row (row 0 first) with the
grammar  row := (count char)+ ,  count := [0-9]+ ,  char := "." | "#"
where "#" is an obstacle. "heights" lists obstacle cells whose top is lower
than FULL_HEIGHT; when present, every other obstacle is FULL_HEIGHT tall.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from tqdm import tqdm

from geometry import TURN_STEP, Point2D, Pose
from nav_config import ContractViolation, GenerationError, ScenarioIOError
from rng import derive_seed
from scene import DEFAULT_AGENT_RADIUS, DEFAULT_RESOLUTION, Scene, geodesic, raycast

logger = logging.getLogger(__name__)

FULL_HEIGHT = 3.0
WALL_CELLS = 2
MAX_ATTEMPTS = 50
RUN_PATTERN = re.compile(r"(\d+)([.#])")


@dataclass(frozen=True)
class Recipe:
    name: str
    count: int = 50
    width_m: float = 8.0
    height_m: float = 8.0
    density: float = 0.05
    traps: bool = False
    furniture: bool = False
    door_width: float = 1.0
    min_distance: float = 4.0
    resolution: float = DEFAULT_RESOLUTION
    agent_radius: float = DEFAULT_AGENT_RADIUS

    def validate(self):
        if self.count < 1:
            raise GenerationError(f"recipe {self.name}: count must be >= 1")
        if not 0.0 <= self.density < 0.5:
            raise GenerationError(f"recipe {self.name}: density {self.density} outside [0, 0.5)")
        if min(self.width_m, self.height_m) < 3.0:
            raise GenerationError(f"recipe {self.name}: rooms smaller than 3 m are not supported")


OPEN = Recipe("open", density=0.05, door_width=1.0)
TRAPS = Recipe("traps", density=0.02, traps=True, door_width=0.0, min_distance=4.5)
FURNITURE = Recipe("furniture", density=0.03, furniture=True, door_width=1.2)
SUITES: Dict[str, Recipe] = {r.name: r for r in (OPEN, TRAPS, FURNITURE)}


# Generation


class _Builder:
    def __init__(self, recipe: Recipe, rng: np.random.Generator):
        self.recipe = recipe
        self.rng = rng
        self.res = recipe.resolution
        self.h = int(round(recipe.height_m / self.res))
        self.w = int(round(recipe.width_m / self.res))
        self.occ = np.zeros((self.h, self.w), dtype=bool)
        self.heights = np.zeros((self.h, self.w)) if recipe.furniture else None
        self.meta: dict = {"suite": recipe.name}

    def box(self, x0: float, y0: float, x1: float, y1: float, top: float = FULL_HEIGHT):
        c0, c1 = int(math.floor(x0 / self.res)), int(math.ceil(x1 / self.res))
        r0, r1 = int(math.floor(y0 / self.res)), int(math.ceil(y1 / self.res))
        c0, r0 = max(c0, 0), max(r0, 0)
        self.occ[r0:r1, c0:c1] = True
        if self.heights is not None:
            self.heights[r0:r1, c0:c1] = np.maximum(self.heights[r0:r1, c0:c1], top)

    def boundary(self):
        t = WALL_CELLS
        for sl in (np.s_[:t, :], np.s_[-t:, :], np.s_[:, :t], np.s_[:, -t:]):
            self.occ[sl] = True
            if self.heights is not None:
                self.heights[sl] = FULL_HEIGHT

    def partition(self):
        if self.recipe.door_width <= 0:
            return
        x = self.rng.uniform(0.4, 0.6) * self.recipe.width_m
        door = self.recipe.door_width
        y = self.rng.uniform(1.0, self.recipe.height_m - 1.0 - door)
        thick = WALL_CELLS * self.res
        self.box(x, 0.0, x + thick, y)
        self.box(x, y + door, x + thick, self.recipe.height_m)
        self.meta["door"] = [round(x, 4), round(y, 4), door]

    def clutter(self, low: bool = False):
        target = self.recipe.density * self.occ.size
        base = int(self.occ.sum())
        tries = 0
        while self.occ.sum() - base < target and tries < 500:
            tries += 1
            sw, sh = self.rng.uniform(0.3, 1.2, size=2)
            x = self.rng.uniform(0.0, self.recipe.width_m - sw)
            y = self.rng.uniform(0.0, self.recipe.height_m - sh)
            top = self.rng.uniform(0.6, 0.95) if low and self.rng.random() < 0.5 else FULL_HEIGHT
            self.box(x, y, x + sw, y + sh, top)

    def pocket(self, start: Point2D, goal: Point2D, width: float = 1.2, depth: float = 1.0):
        """U-shaped pocket on the start-goal segment, open toward the start"""
        theta = math.atan2(goal.y - start.y, goal.x - start.x)
        mid = Point2D((start.x + goal.x) / 2, (start.y + goal.y) / 2)
        mouth = Point2D(mid.x - math.cos(theta) * depth / 2, mid.y - math.sin(theta) * depth / 2)
        params = {"x": mouth.x, "y": mouth.y, "theta": theta, "width": width, "depth": depth, "thickness": WALL_CELLS * self.res}
        wall = pocket_raster(self.occ.shape, self.res, params)
        self.occ |= wall
        if self.heights is not None:
            self.heights[wall] = FULL_HEIGHT
        self.meta["pocket"] = {k: round(v, 6) for k, v in params.items()}

    def free_point(self, scene: Scene, region=None) -> Point2D:
        rows, cols = np.nonzero(scene.navigable)
        if region is not None:
            xs = (cols + 0.5) * self.res
            keep = (xs >= region[0]) & (xs <= region[1])
            rows, cols = rows[keep], cols[keep]
        if rows.size == 0:
            raise GenerationError(f"recipe {self.recipe.name}: no free cells")
        i = int(self.rng.integers(rows.size))
        return scene.cell_center(int(rows[i]), int(cols[i]))

    def scene(self, sid: str, start: Pose, goal: Point2D) -> Scene:
        return Scene(
            id=sid,
            resolution=self.res,
            occupancy=self.occ.copy(),
            start=start,
            goal=goal,
            heightfield=None if self.heights is None else self.heights.copy(),
            agent_radius=self.recipe.agent_radius,
            meta=dict(self.meta),
        )


def pocket_raster(shape, resolution: float, params: dict) -> np.ndarray:
    """Occupied cells of a pocket described by its mouth center, axis, width, depth and wall thickness"""
    h, w = shape
    ys, xs = (np.mgrid[0:h, 0:w] + 0.5) * resolution
    dx, dy = xs - params["x"], ys - params["y"]
    c, s = math.cos(params["theta"]), math.sin(params["theta"])
    u = dx * c + dy * s
    v = np.abs(-dx * s + dy * c)
    half, depth, t = params["width"] / 2, params["depth"], params["thickness"]
    back = (u >= depth) & (u <= depth + t) & (v <= half + t)
    sides = (u >= 0) & (u <= depth + t) & (v >= half) & (v <= half + t)
    return back | sides


def path_hits_pocket(scene: Scene, samples: int = 400) -> bool:
    """Whether the straight start-goal segment crosses the recorded pocket walls"""
    params = scene.meta.get("pocket")
    if not params:
        return False
    wall = pocket_raster(scene.occupancy.shape, scene.resolution, params)
    t = np.linspace(0.0, 1.0, samples)
    xs = scene.start.x + (scene.goal.x - scene.start.x) * t
    ys = scene.start.y + (scene.goal.y - scene.start.y) * t
    rows = np.clip(np.floor(ys / scene.resolution).astype(int), 0, scene.height - 1)
    cols = np.clip(np.floor(xs / scene.resolution).astype(int), 0, scene.width - 1)
    return bool(wall[rows, cols].any())


def _random_heading(rng: np.random.Generator) -> float:
    return float(rng.integers(0, int(360 / TURN_STEP))) * TURN_STEP


def _attempt(recipe: Recipe, sid: str, rng: np.random.Generator) -> Optional[Scene]:
    b = _Builder(recipe, rng)
    b.boundary()
    b.partition()

    if recipe.traps:
        margin = 1.0
        start = Point2D(rng.uniform(margin, recipe.width_m * 0.25), rng.uniform(margin, recipe.height_m - margin))
        goal = Point2D(rng.uniform(recipe.width_m * 0.75, recipe.width_m - margin), rng.uniform(margin, recipe.height_m - margin))
        if start.distance_to(goal) < recipe.min_distance:
            return None
        b.pocket(start, goal)
        b.clutter()
        heading = round(start.bearing_to(goal) / TURN_STEP) * TURN_STEP
        scene = b.scene(sid, Pose(start.x, start.y, heading), goal)
        if not path_hits_pocket(scene):
            return None
    else:
        b.clutter(low=recipe.furniture)
        draft = b.scene(sid, Pose(1.0, 1.0, 0.0), Point2D(1.0, 1.0))
        start = b.free_point(draft)
        goal = b.free_point(draft)
        heading = _random_heading(rng)
        if recipe.furniture:
            # one low box just ahead of the start, below the 2D sensor plane
            distance = rng.uniform(1.2, 1.5)
            if raycast(draft, start, heading, 3.0, FULL_HEIGHT / 2) < distance + 0.5:
                return None
            ahead = Pose(start.x, start.y, heading).offset(0.0, distance)
            size = 0.4
            b.box(ahead.x - size / 2, ahead.y - size / 2, ahead.x + size / 2, ahead.y + size / 2, rng.uniform(0.8, 0.95))
            b.meta["low_box"] = [round(ahead.x, 4), round(ahead.y, 4)]
        scene = b.scene(sid, Pose(start.x, start.y, heading), goal)

    if not (scene.is_navigable(scene.start.point) and scene.is_navigable(scene.goal)):
        return None
    distance = geodesic(scene, scene.start.point)
    if not math.isfinite(distance) or distance < recipe.min_distance:
        return None
    scene.meta["geodesic"] = round(distance, 6)
    return scene


def generate_scenes(recipe: Recipe, seed: int, progress: bool = False) -> List[Scene]:
    """Deterministic scene set for a recipe and seed"""
    recipe.validate()
    scenes = []
    for index in tqdm(range(recipe.count), desc=f"Generating {recipe.name}", disable=not progress):
        sid = f"{recipe.name}-{index:04d}"
        for attempt in range(MAX_ATTEMPTS):
            rng = np.random.default_rng(derive_seed(seed, index, attempt))
            scene = _attempt(recipe, sid, rng)
            if scene is not None:
                scene.meta["seed"] = seed
                scenes.append(scene)
                break
        else:
            raise GenerationError(f"recipe {recipe.name}: scene {index} infeasible after {MAX_ATTEMPTS} attempts")
    logger.info("generated %d %s scenes (seed %d)", len(scenes), recipe.name, seed)
    return scenes


# File IO


def encode_row(row: np.ndarray) -> str:
    out = []
    n = len(row)
    i = 0
    while i < n:
        j = i
        while j < n and row[j] == row[i]:
            j += 1
        out.append(f"{j - i}{'#' if row[i] else '.'}")
        i = j
    return "".join(out)


def decode_row(text: str, width: int) -> np.ndarray:
    runs = RUN_PATTERN.findall(text)
    if "".join(f"{n}{c}" for n, c in runs) != text:
        raise ScenarioIOError(f"malformed row {text[:40]!r}")
    row = np.concatenate([np.full(int(n), c == "#", dtype=bool) for n, c in runs]) if runs else np.zeros(0, bool)
    if row.shape[0] != width:
        raise ScenarioIOError(f"row decodes to {row.shape[0]} cells, expected {width}")
    return row


def scene_to_dict(scene: Scene) -> dict:
    doc = {
        "id": scene.id,
        "resolution": scene.resolution,
        "width": scene.width,
        "height": scene.height,
        "agent_radius": scene.agent_radius,
        "rows": [encode_row(r) for r in scene.occupancy],
        "start": scene.start.to_dict(),
        "goal": {"x": scene.goal.x, "y": scene.goal.y},
        "meta": scene.meta,
    }
    if scene.heightfield is not None:
        low = scene.occupancy & (scene.heightfield < FULL_HEIGHT)
        rows, cols = np.nonzero(low)
        doc["heights"] = [[int(r), int(c), float(scene.heightfield[r, c])] for r, c in zip(rows, cols)]
    return doc


def scene_from_dict(doc: dict) -> Scene:
    try:
        width, height = int(doc["width"]), int(doc["height"])
        occupancy = np.array([decode_row(r, width) for r in doc["rows"]], dtype=bool)
        if occupancy.shape != (height, width):
            raise ScenarioIOError(f"scene {doc.get('id')}: {occupancy.shape[0]} rows, expected {height}")
        heightfield = None
        if "heights" in doc:
            heightfield = np.where(occupancy, FULL_HEIGHT, 0.0)
            for r, c, top in doc["heights"]:
                heightfield[int(r), int(c)] = float(top)
        scene = Scene(
            id=str(doc["id"]),
            resolution=float(doc["resolution"]),
            occupancy=occupancy,
            start=Pose(float(doc["start"]["x"]), float(doc["start"]["y"]), float(doc["start"].get("heading", 0.0))),
            goal=Point2D(float(doc["goal"]["x"]), float(doc["goal"]["y"])),
            heightfield=heightfield,
            agent_radius=float(doc.get("agent_radius", DEFAULT_AGENT_RADIUS)),
            meta=dict(doc.get("meta", {})),
        )
    except (KeyError, TypeError, ValueError, IndexError, ContractViolation) as e:
        raise ScenarioIOError(f"invalid scene document: {e}")
    if scene.is_occupied(scene.start.point) or scene.is_occupied(scene.goal):
        raise ScenarioIOError(f"scene {scene.id}: start or goal lies on an obstacle")
    return scene


def save_scene(scene: Scene, path) -> None:
    try:
        with open(path, "w") as f:
            json.dump(scene_to_dict(scene), f, indent=1, sort_keys=True)
    except OSError as e:
        raise ScenarioIOError(f"Error writing scene {path}: {e}")


def load_scene(path) -> Scene:
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, ValueError) as e:
        raise ScenarioIOError(f"Error reading scene {path}: {e}")
    return scene_from_dict(doc)


def save_scenes(scenes: List[Scene], directory) -> List[Path]:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ScenarioIOError(f"Error creating {directory}: {e}")
    paths = []
    for scene in scenes:
        path = directory / f"{scene.id}.json"
        save_scene(scene, path)
        paths.append(path)
    return paths


def load_scenes(path) -> List[Scene]:
    """Load one scene file or every *.json in a directory, sorted by scene id"""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.json"))
        if not files:
            raise ScenarioIOError(f"no scene files in {path}")
        scenes = [load_scene(f) for f in files]
    elif path.exists():
        scenes = [load_scene(path)]
    else:
        raise ScenarioIOError(f"scene path {path} does not exist")
    return sorted(scenes, key=lambda s: s.id)


def recipe_to_dict(recipe: Recipe) -> dict:
    return asdict(recipe)
