"""
Waypoint heatmaps over the agent-centered polar grid.

Sources: the oracle (uniform over visible navigable cells), a file loader,
and two perturbations emulating predictor error (confidence jitter and mass
spilled off the support). apply_mask folds the LiDAR occupancy mask into a
heatmap; nms_sample extracts candidate waypoints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np
from scipy.ndimage import correlate

from geometry import Point2D, Pose
from lidar import LidarConfig, RadialOccupancyMask
from nav_config import ContractViolation, ScenarioIOError
from scene import Scene

logger = logging.getLogger(__name__)

MIN_WAYPOINT_RANGE = 0.5
NORM_TOLERANCE = 1e-9


@dataclass
class PolarHeatmap:
    cells: np.ndarray
    center: Optional[Pose] = None
    degenerate: bool = False
    mask_saturated: bool = False


@dataclass(frozen=True)
class Waypoint:
    heading_bin: int
    range_bin: int
    position: Point2D
    score: float


def normalize(cells: np.ndarray) -> np.ndarray:
    total = cells.sum()
    if total <= 0:
        raise ContractViolation("cannot normalize a heatmap with no mass")
    return cells / total


def cell_polar(config: LidarConfig):
    """(relative heading degrees, range meters) of every bin center, shape (H, R)"""
    headings = np.arange(config.n_heading_bins) * config.heading_bin_deg + config.heading_bin_deg / 2
    ranges = np.arange(config.n_range_bins) * config.range_bin_m + config.range_bin_m / 2
    return np.meshgrid(headings, ranges, indexing="ij")


def cell_positions(pose: Pose, config: LidarConfig):
    """World x, y of every bin center around pose"""
    rel, rng = cell_polar(config)
    a = np.radians(pose.heading + rel)
    return pose.x + rng * np.cos(a), pose.y + rng * np.sin(a)


def waypoint_position(pose: Pose, heading_bin: int, range_bin: int, config: LidarConfig) -> Point2D:
    rel = heading_bin * config.heading_bin_deg + config.heading_bin_deg / 2
    return pose.offset(rel, range_bin * config.range_bin_m + config.range_bin_m / 2)


def oracle_heatmap(scene: Scene, pose: Pose, config: Optional[LidarConfig] = None) -> PolarHeatmap:
    """Uniform mass on every navigable, line-of-sight cell at least 0.5 m away"""
    config = config or LidarConfig()
    if not scene.in_bounds(pose.x, pose.y) or scene.is_occupied(pose.point):
        raise ContractViolation(f"heatmap pose ({pose.x:.3f}, {pose.y:.3f}) is not on free space")
    xs, ys = cell_positions(pose, config)
    far_enough = np.broadcast_to(_far_enough(config.n_range_bins, config), xs.shape)
    support = far_enough & scene.navigable_at(xs, ys)
    if support.any():
        visible = np.zeros_like(support)
        visible[support] = scene.segments_free(pose.point, xs[support], ys[support])
        support &= visible
    if not support.any():
        logger.debug("degenerate heatmap at (%.2f, %.2f)", pose.x, pose.y)
        cells = np.full(xs.shape, 1.0 / xs.size)
        return PolarHeatmap(cells=cells, center=pose, degenerate=True)
    return PolarHeatmap(cells=normalize(support.astype(float)), center=pose)


def jitter_heatmap(base: PolarHeatmap, jitter: float, seed: int) -> PolarHeatmap:
    """Multiply support cells by seeded factors in [1 - jitter, 1 + jitter]"""
    if jitter <= 0:
        return base
    if not 0 < jitter < 1:
        raise ContractViolation("jitter must be in [0, 1)")
    rng = np.random.default_rng(seed)
    factors = rng.uniform(1.0 - jitter, 1.0 + jitter, size=base.cells.shape)
    return replace(base, cells=normalize(base.cells * factors))


def _far_enough(n_range_bins: int, config: LidarConfig) -> np.ndarray:
    range_start = np.arange(n_range_bins) * config.range_bin_m
    return range_start >= MIN_WAYPOINT_RANGE - 1e-12


def neighbour_mass(cells: np.ndarray, pad: int) -> np.ndarray:
    """Mass in the (2*pad+1)^2 window around every bin; heading wraps, range does not"""
    wrapped = np.concatenate([cells[-pad:], cells, cells[:pad]])
    summed = correlate(wrapped, np.ones((2 * pad + 1, 2 * pad + 1)), mode="constant", cval=0.0)
    return summed[pad:pad + cells.shape[0]]


def noisy_heatmap(
    base: PolarHeatmap,
    spill: float,
    blur_bins: int,
    seed: int,
    config: Optional[LidarConfig] = None,
) -> PolarHeatmap:
    """
    Spill mass onto the ring of cells next to the support, ignoring occupancy.

    A ring cell gets spill * (support mass in its window) * u with u seeded in
    [0, 2), so it sits at the level of its neighbours and only occasionally
    above them. Cells nearer than MIN_WAYPOINT_RANGE stay empty.
    """
    if not 0.0 <= spill <= 1.0:
        raise ContractViolation(f"spill must be in [0, 1], got {spill}")
    if spill == 0.0:
        return replace(base, cells=base.cells.copy())
    config = config or LidarConfig()
    support = base.cells > 0
    adjacent = neighbour_mass(base.cells, max(int(blur_bins), 1))
    ring = (adjacent > 0) & ~support & _far_enough(base.cells.shape[1], config)[None, :]
    if not ring.any():
        return replace(base, cells=base.cells.copy())
    rng = np.random.default_rng(seed)
    spilled = np.where(ring, spill * adjacent * rng.uniform(0.0, 2.0, base.cells.shape), 0.0)
    return replace(base, cells=normalize(base.cells + spilled))


def masked_distribution(h: np.ndarray, m: np.ndarray, delta: float):
    """norm(clamp(h + delta*m)); returns (cells, saturated)"""
    if h.shape != m.shape:
        raise ContractViolation(f"heatmap {h.shape} and mask {m.shape} dimensions differ")
    if delta < 0:
        raise ContractViolation("delta must be >= 0")
    v = np.clip(h + delta * m, 0.0, None)
    if v.sum() <= 0:
        return normalize(h), True
    return normalize(v), False


def apply_mask(h: PolarHeatmap, m: RadialOccupancyMask, delta: float = 1e-4) -> PolarHeatmap:
    cells, saturated = masked_distribution(h.cells, m.cells.astype(float), delta)
    return replace(h, cells=cells, mask_saturated=saturated)


def nms_sample(
    h: PolarHeatmap,
    k: int = 5,
    suppress_h: int = 2,
    suppress_r: int = 1,
    config: Optional[LidarConfig] = None,
) -> List[Waypoint]:
    """Greedy non-maximum suppression over the polar grid (heading wraps)"""
    if k < 1:
        raise ContractViolation("k must be >= 1")
    config = config or LidarConfig()
    work = np.array(h.cells, dtype=float, copy=True)
    n_h, n_r = work.shape
    center = h.center or Pose(0.0, 0.0, 0.0)
    waypoints: List[Waypoint] = []
    while len(waypoints) < k:
        # argmax returns the first maximum: lowest heading bin, then lowest range bin
        flat = int(np.argmax(work))
        hb, rb = divmod(flat, n_r)
        value = work[hb, rb]
        if value <= 0:
            break
        waypoints.append(
            Waypoint(hb, rb, waypoint_position(center, hb, rb, config), float(h.cells[hb, rb]))
        )
        rows = np.arange(hb - suppress_h, hb + suppress_h + 1) % n_h
        cols = np.arange(max(rb - suppress_r, 0), min(rb + suppress_r, n_r - 1) + 1)
        work[np.ix_(rows, cols)] = 0.0
    return waypoints


def load_heatmap(path, center: Optional[Pose] = None, config: Optional[LidarConfig] = None) -> PolarHeatmap:
    """Read a whitespace-separated grid, one row per heading bin, normalized on load"""
    config = config or LidarConfig()
    try:
        cells = np.loadtxt(path, dtype=float, ndmin=2)
    except (OSError, ValueError) as e:
        raise ScenarioIOError(f"Error reading heatmap {path}: {e}")
    expected = (config.n_heading_bins, config.n_range_bins)
    if cells.shape != expected:
        raise ScenarioIOError(f"heatmap {path} has shape {cells.shape}, expected {expected}")
    if (cells < 0).any() or not np.isfinite(cells).all():
        raise ScenarioIOError(f"heatmap {path} has negative or non-finite cells")
    return PolarHeatmap(cells=normalize(cells), center=center)


def save_heatmap(h: PolarHeatmap, path):
    np.savetxt(path, h.cells, fmt="%.12g")
