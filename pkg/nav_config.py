"""
Configuration and error types for the safenav simulator.

Defaults live in DEFAULT_CONFIG; a config.json next to the working directory
overrides them. CLI flags override both.
"""

import copy
import json
import logging
import os

logger = logging.getLogger(__name__)

# Configuration
CONFIG_FILE = "config.json"
DEFAULT_CONFIG = {
    "scene": {
        "resolution": 0.05,
        "agent_radius": 0.18,
    },
    "lidar": {
        "mode": "2d",  # or "3d", "fused"
        "max_range": 3.0,
        "angular_resolution": 0.25,
        "n_heading_bins": 120,
        "n_range_bins": 12,
        "sensor_height": 1.5,
        "fused_height": 1.0,  # 3D sensor height used by the fused mode
        "vertical_fov": 22.5,
        "n_vertical_rays": 16,
        "range_noise_sigma": 0.0,
    },
    "heatmap": {
        "delta": 1e-4,
        "k": 5,
        "suppress_h": 2,
        "suppress_r": 1,
        "noise_spill": 0.0,
        "blur_bins": 1,
        "jitter": 0.5,
    },
    "planner": {
        "merge_radius": 0.5,
        "success_radius": 3.0,
        "stop_progress": 0.25,
        "lambda1": 0.8,
        "lambda2": 0.2,
    },
    "controller": {
        "arrival_radius": 0.25,
        "stuck_threshold": 3,
        "max_steps_per_leg": 100,
        "tryout_enabled": False,
        "tryout_headings": [30, -30, 60, -60, 90, -90, 150, -150, 180],
        "tryout_random_order": False,
    },
    "jps": {
        "cell_size": 0.12,
        "projection_noise": False,
        "lookahead": 1.0,
        "stop_radius": 0.5,
    },
    "harness": {
        "step_budget": 500,
        "dynamic_p": 0.10,
        "workers": 4,
        "stats_interval": 5,
    },
    "training": {
        "iterations": 400,
        "samples_per_scene": 8,
    },
}

WORKERS_ENV = "SAFENAV_WORKERS"


class SafeNavError(Exception):
    """Base class for simulator errors"""


class ConfigError(SafeNavError):
    """Invalid configuration value or flag combination"""


class ContractViolation(SafeNavError):
    """A documented precondition of an operation was not met"""


class ScenarioIOError(SafeNavError):
    """Scenario, report, weight or trace file could not be read or written"""


class GenerationError(SafeNavError):
    """A scene recipe could not be satisfied within the retry budget"""


def _merge(defaults, overrides):
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path=CONFIG_FILE):
    """Load configuration from file or create default"""
    if os.path.exists(path):
        try:
            with open(path, "r") as f:
                return _merge(DEFAULT_CONFIG, json.load(f))
        except (OSError, ValueError) as e:
            logger.warning("Error loading config %s: %s", path, e)
            return copy.deepcopy(DEFAULT_CONFIG)
    else:
        try:
            save_config(DEFAULT_CONFIG, path)
        except OSError as e:
            logger.warning("Could not write default config %s: %s", path, e)
        return copy.deepcopy(DEFAULT_CONFIG)


def save_config(config, path=CONFIG_FILE):
    """Save configuration to file"""
    with open(path, "w") as f:
        json.dump(config, f, indent=4)


def worker_count(config):
    """Worker count from config, overridden by SAFENAV_WORKERS"""
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}")
        if value < 1:
            raise ConfigError(f"{WORKERS_ENV} must be >= 1")
        return value
    return max(1, int(config["harness"]["workers"]))
