"""
Simulated 2D/3D LiDAR and the radial occupancy mask built from it.

Readings are indexed from the agent heading counterclockwise, one every
angular_resolution degrees. The mask has the same polar layout as the
waypoint heatmap: row = heading bin, column = range bin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from geometry import Pose
from nav_config import ConfigError, ContractViolation
from scene import Scene, cast_rays

MODES = ("2d", "3d", "fused")


@dataclass(frozen=True)
class LidarConfig:
    max_range: float = 3.0
    angular_resolution: float = 0.25
    n_heading_bins: int = 120
    n_range_bins: int = 12
    mode: str = "2d"
    sensor_height: float = 1.5
    fused_height: float = 1.0
    vertical_fov: float = 22.5
    n_vertical_rays: int = 16
    range_noise_sigma: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"lidar mode must be one of {MODES}, got {self.mode!r}")
        if self.max_range <= 0 or self.angular_resolution <= 0:
            raise ConfigError("lidar max_range and angular_resolution must be positive")
        if not math.isclose(self.n_heading_bins * self.heading_bin_deg, 360.0):
            raise ConfigError("heading bins must cover 360 degrees")
        bin_deg = self.heading_bin_deg
        per_bin = bin_deg / self.angular_resolution
        if abs(per_bin - round(per_bin)) > 1e-9:
            raise ConfigError(
                f"angular_resolution {self.angular_resolution} must divide the {bin_deg} degree heading bin"
            )
        if self.range_noise_sigma < 0:
            raise ConfigError("range_noise_sigma must be >= 0")
        if self.n_vertical_rays < 1:
            raise ConfigError("n_vertical_rays must be >= 1")

    @property
    def heading_bin_deg(self) -> float:
        return 360.0 / self.n_heading_bins

    @property
    def range_bin_m(self) -> float:
        return self.max_range / self.n_range_bins

    @property
    def n_readings(self) -> int:
        return int(round(360.0 / self.angular_resolution))

    @property
    def readings_per_bin(self) -> int:
        return self.n_readings // self.n_heading_bins

    def reading_angles(self) -> np.ndarray:
        """Angles relative to the agent heading, degrees"""
        return np.arange(self.n_readings) * self.angular_resolution

    def label(self) -> str:
        if self.mode == "fused":
            return f"2D@{self.sensor_height:g}+3D@{self.fused_height:g}"
        return f"{self.mode.upper()}@{self.sensor_height:g}"

    @classmethod
    def from_dict(cls, values: dict) -> "LidarConfig":
        known = {k: values[k] for k in cls.__dataclass_fields__ if k in values}
        return cls(**known)


@dataclass
class RadialOccupancyMask:
    cells: np.ndarray  # int8, -1 occupied / 0 free
    center: Optional[Pose] = None

    @property
    def occupied_count(self) -> int:
        return int(np.count_nonzero(self.cells == -1))


def _add_noise(ranges: np.ndarray, config: LidarConfig, seed: Optional[int]) -> np.ndarray:
    if config.range_noise_sigma <= 0:
        return ranges
    rng = np.random.default_rng(seed)
    noisy = ranges + rng.normal(0.0, config.range_noise_sigma, size=ranges.shape)
    return np.clip(noisy, 1e-6, config.max_range)


def _check_pose(scene: Scene, pose: Pose):
    if not scene.in_bounds(pose.x, pose.y) or scene.is_occupied(pose.point):
        raise ContractViolation(f"lidar pose ({pose.x:.3f}, {pose.y:.3f}) is not on free space")


def scan2d(scene: Scene, pose: Pose, config: LidarConfig, seed: Optional[int] = None) -> np.ndarray:
    """360 degree planar scan at sensor_height"""
    _check_pose(scene, pose)
    angles = pose.heading + config.reading_angles()
    ranges = cast_rays(scene, pose.point, angles, config.max_range, config.sensor_height)
    return _add_noise(ranges, config, seed)


def vertical_slopes(config: LidarConfig) -> np.ndarray:
    """Ray slopes of the vertical fan, centered on the horizontal, plus the horizontal ray"""
    half = config.vertical_fov / 2.0
    if config.n_vertical_rays == 1:
        elevations = np.array([0.0])
    else:
        elevations = np.linspace(-half, half, config.n_vertical_rays)
    return np.tan(np.radians(np.append(elevations, 0.0)))


def scan3d(
    scene: Scene,
    pose: Pose,
    config: LidarConfig,
    seed: Optional[int] = None,
    sensor_height: Optional[float] = None,
) -> np.ndarray:
    """Per horizontal angle, the minimum horizontal hit distance over the vertical fan"""
    _check_pose(scene, pose)
    height = config.sensor_height if sensor_height is None else sensor_height
    base = pose.heading + config.reading_angles()
    slopes = vertical_slopes(config)
    angles = np.tile(base, slopes.shape[0])
    ray_slopes = np.repeat(slopes, base.shape[0])
    ranges = cast_rays(scene, pose.point, angles, config.max_range, height, ray_slopes)
    ranges = ranges.reshape(slopes.shape[0], base.shape[0]).min(axis=0)
    return _add_noise(ranges, config, seed)


def build_mask(ranges: Sequence[float], config: LidarConfig, center: Optional[Pose] = None) -> RadialOccupancyMask:
    """Mark the bin of the nearest return and every bin beyond it as occupied"""
    ranges = np.asarray(ranges, dtype=float)
    if ranges.shape != (config.n_readings,):
        raise ContractViolation(
            f"expected {config.n_readings} range readings, got {ranges.shape[0] if ranges.ndim else 0}"
        )
    per_heading = ranges.reshape(config.n_heading_bins, config.readings_per_bin).min(axis=1)
    hit_bin = np.floor(per_heading / config.range_bin_m).astype(int)
    hit_bin = np.where(per_heading < config.max_range, hit_bin, config.n_range_bins)
    range_index = np.arange(config.n_range_bins)
    cells = np.where(range_index[None, :] >= hit_bin[:, None], -1, 0).astype(np.int8)
    return RadialOccupancyMask(cells=cells, center=center)


def fuse_masks(m2d: RadialOccupancyMask, m3d: RadialOccupancyMask) -> RadialOccupancyMask:
    """Occupied-union of two masks taken from the same pose"""
    if m2d.cells.shape != m3d.cells.shape:
        raise ContractViolation(f"mask shapes differ: {m2d.cells.shape} vs {m3d.cells.shape}")
    if m2d.center is not None and m3d.center is not None and m2d.center != m3d.center:
        raise ContractViolation("masks were taken from different poses")
    cells = np.minimum(m2d.cells, m3d.cells).astype(np.int8)
    return RadialOccupancyMask(cells=cells, center=m2d.center or m3d.center)


def occupied_proportion(masks: Sequence[RadialOccupancyMask]) -> float:
    """Mean fraction of occupied cells over a sequence of masks"""
    if len(masks) == 0:
        raise ContractViolation("occupied_proportion needs at least one mask")
    return float(np.mean([-m.cells.sum() / m.cells.size for m in masks]))


def sense_mask(scene: Scene, pose: Pose, config: LidarConfig, seed: Optional[int] = None) -> RadialOccupancyMask:
    """Scan and build the mask for the configured LiDAR mode"""
    if config.mode == "2d":
        return build_mask(scan2d(scene, pose, config, seed), config, pose)
    if config.mode == "3d":
        return build_mask(scan3d(scene, pose, config, seed), config, pose)
    m2d = build_mask(scan2d(scene, pose, config, seed), config, pose)
    noise_seed = None if seed is None else seed + 1
    m3d = build_mask(scan3d(scene, pose, config, noise_seed, sensor_height=config.fused_height), config, pose)
    return fuse_masks(m2d, m3d)


def with_mode(config: LidarConfig, mode: str, sensor_height: float, fused_height: Optional[float] = None) -> LidarConfig:
    return replace(
        config,
        mode=mode,
        sensor_height=sensor_height,
        fused_height=config.fused_height if fused_height is None else fused_height,
    )
