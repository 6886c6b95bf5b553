"""
Unified evaluation interface.
One entry point per evaluation mode: a single agent run, the mask x reselect
comparison matrix with the JPS baseline, the mask-weight sweep and the LiDAR
ablation matrix. Every mode returns labelled MetricsReports.
"""

import logging
from dataclasses import replace

from episode_runner import AgentConfig
from metrics import compute_metrics
from nav_config import ConfigError, worker_count
from parallel_runner import run_episodes

logger = logging.getLogger(__name__)

DEFAULT_DELTAS = (0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1)
# (label, mode, sensor height, fused 3D height)
LIDAR_SETUPS = (
    ("2D@1.0", "2d", 1.0, None),
    ("2D@1.5", "2d", 1.5, None),
    ("3D@1.0", "3d", 1.0, None),
    ("3D@1.5", "3d", 1.5, None),
    ("2D@1.0+3D@1.5", "fused", 1.0, 1.5),
    ("2D@1.5+3D@1.0", "fused", 1.5, 1.0),
)


def evaluate(scenes, agent, seed, config, dynamic_p=None, progress=False, traces_dir=None, timing=False, label=""):
    """
    Run one agent over the scene set.

    When dynamic_p > 0 a second, injector-enabled pass over the same seeds
    provides D-C SR.
    """
    workers = worker_count(config)
    interval = config["harness"].get("stats_interval", 5)
    results = run_episodes(scenes, agent, seed, workers, progress=progress,
                           stats_interval=interval, traces_dir=traces_dir, label=label)
    dynamic_results = None
    if dynamic_p:
        dynamic_results = run_episodes(scenes, agent.with_dynamic(dynamic_p), seed, workers,
                                       progress=progress, stats_interval=interval, label=f"{label} D-C".strip())
    run_config = {"agent": agent.to_dict(), "seed": seed, "dynamic_p": dynamic_p or 0.0, "scenes": len(scenes)}
    return compute_metrics(results, dynamic_results, run_config, timing)


def run_single(scenes, config, seed, dynamic_p=None, progress=False, timing=False, traces_dir=None, **overrides):
    agent = AgentConfig.from_config(config, **overrides)
    label = agent.label()
    return {label: evaluate(scenes, agent, seed, config, dynamic_p, progress, traces_dir, timing, label)}


def compare(scenes, config, seed, dynamic_p=None, progress=False, timing=False, **overrides):
    """mask x reselect on/off matrix plus the JPS baseline"""
    reports = {}
    for mask in (False, True):
        for reselect in (False, True):
            agent = AgentConfig.from_config(config, mode="safe", mask=mask, reselect=reselect, **overrides)
            label = f"M-{'on' if mask else 'off'} R-{'on' if reselect else 'off'}"
            reports[label] = evaluate(scenes, agent, seed, config, dynamic_p, progress, timing=timing, label=label)
    jps_overrides = {k: v for k, v in overrides.items() if k not in ("mask", "reselect", "scorer", "weights")}
    agent = AgentConfig.from_config(config, mode="jps", **jps_overrides)
    reports["JPS"] = evaluate(scenes, agent, seed, config, dynamic_p, progress, timing=timing, label="JPS")
    return reports


def sweep(scenes, config, seed, deltas=DEFAULT_DELTAS, progress=False, timing=False, **overrides):
    """Evaluate the masked agent over a list of mask weights"""
    if not deltas:
        raise ConfigError("sweep needs at least one delta")
    base = AgentConfig.from_config(config, mode="safe", **overrides)
    reports = {}
    for delta in deltas:
        agent = replace(base, delta=float(delta))
        label = f"delta={delta:g}"
        reports[label] = evaluate(scenes, agent, seed, config, None, progress, timing=timing, label=label)
    return reports


def lidar_matrix(scenes, config, seed, setups=LIDAR_SETUPS, progress=False, timing=False, **overrides):
    """2D, 3D and fused masks at two sensor heights"""
    reports = {}
    for label, mode, height, fused_height in setups:
        agent = AgentConfig.from_config(
            config, lidar_mode=mode, sensor_height=height, fused_height=fused_height, **overrides
        )
        reports[label] = evaluate(scenes, agent, seed, config, None, progress, timing=timing, label=label)
    return reports


EVALUATION_MODES = {
    "run": run_single,
    "compare": compare,
    "sweep": sweep,
    "lidar": lidar_matrix,
}


def unified_run(scenes, config, seed, eval_mode="run", **kwargs):
    """Dispatch to one of EVALUATION_MODES"""
    try:
        func = EVALUATION_MODES[eval_mode]
    except KeyError:
        raise ConfigError(f"unknown evaluation mode {eval_mode!r}")
    logger.info("%s over %d scenes (seed %d)", eval_mode, len(scenes), seed)
    return func(scenes, config, seed, **kwargs)
