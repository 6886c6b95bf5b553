"""
Single-episode orchestration for the safe, baseline and JPS agents.

A decision cycle is: scan, build the occupancy mask, build the waypoint
heatmap, optionally fold the mask in, extract waypoints, update the graph,
score, select, then drive the leg. Failed legs re-select when enabled, with
the agent first retracing to the node it chose from, and end the episode
otherwise.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional, Tuple

from control import (
    CollisionEvent,
    CollisionKind,
    ControllerConfig,
    NavOutcome,
    classify_waypoint,
    navigate_leg,
    read_trace,
    replay_actions,
    retrace,
)
from geometry import Action, Point2D, Pose
from heatmap import PolarHeatmap, apply_mask, jitter_heatmap, load_heatmap, nms_sample, noisy_heatmap, oracle_heatmap
from jps import EgoGrid, PlanStatus, plan, project_to_grid
from lidar import LidarConfig, build_mask, scan2d, sense_mask
from nav_config import DEFAULT_CONFIG, ConfigError
from nav_graph import STOP_ID, LinearScorer, NavGraph, ScoreVector, reselect, score_linear, score_oracle, select_node, update_graph
from rng import DynamicInjector, derive_seed
from scene import Scene, geodesic

logger = logging.getLogger(__name__)

AGENT_MODES = ("safe", "baseline", "jps")
SCORERS = ("oracle", "linear", "jps")

# derive_seed stream keys
_INJECT, _LIDAR, _JITTER, _SPILL, _TRYOUT, _GRID = range(1, 7)

HeatmapFn = Callable[[Scene, Pose, int], PolarHeatmap]
DecisionHook = Callable[[NavGraph, ScoreVector, Scene], None]


@dataclass(frozen=True)
class AgentConfig:
    mode: str = "safe"
    mask: bool = True
    reselect: bool = True
    scorer: str = "oracle"
    delta: float = 1e-4
    k: int = 5
    suppress_h: int = 2
    suppress_r: int = 1
    noise_spill: float = 0.0
    blur_bins: int = 1
    jitter: float = 0.5
    merge_radius: float = 0.5
    success_radius: float = 3.0
    stop_progress: float = 0.25
    step_budget: int = 500
    dynamic_p: float = 0.0
    lidar: LidarConfig = field(default_factory=LidarConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    weights: Optional[Tuple[float, ...]] = None
    jps_cell_size: float = 0.12
    jps_projection_noise: bool = False
    jps_lookahead: float = 1.0
    jps_stop_radius: float = 0.5
    # recorded heatmaps, <scene id>-<decision>.txt, override the oracle source
    heatmap_dir: Optional[str] = None

    def __post_init__(self):
        if self.mode not in AGENT_MODES:
            raise ConfigError(f"agent must be one of {AGENT_MODES}, got {self.mode!r}")
        if self.scorer not in SCORERS:
            raise ConfigError(f"scorer must be one of {SCORERS}, got {self.scorer!r}")
        if (self.mode == "jps") != (self.scorer == "jps"):
            raise ConfigError("the jps scorer goes with the jps agent and only with it")
        if self.scorer == "linear" and self.weights is None:
            raise ConfigError("the linear scorer needs weights (--weights PATH)")
        if self.delta < 0:
            raise ConfigError("delta must be >= 0")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not 0.0 <= self.noise_spill <= 1.0:
            raise ConfigError("noise spill must be in [0, 1]")
        if not 0.0 <= self.jitter < 1.0:
            raise ConfigError("jitter must be in [0, 1)")
        if not 0.0 <= self.dynamic_p <= 1.0:
            raise ConfigError("dynamic p must be in [0, 1]")
        if self.step_budget < 1:
            raise ConfigError("step budget must be >= 1")

    @classmethod
    def from_config(cls, config: Optional[dict] = None, **overrides) -> "AgentConfig":
        """Build from a nav_config dict; keyword overrides win over the file"""
        config = config or DEFAULT_CONFIG
        heat, planner, harness, jps = config["heatmap"], config["planner"], config["harness"], config["jps"]
        mode = overrides.pop("mode", "safe")
        lidar = dict(config["lidar"])
        for key, name in (("lidar_mode", "mode"), ("sensor_height", "sensor_height"),
                          ("fused_height", "fused_height"), ("range_noise", "range_noise_sigma")):
            value = overrides.pop(key, None)
            if value is not None:
                lidar[name] = value
        controller = dict(config["controller"])
        tryout = overrides.pop("tryout", None)
        if tryout is not None:
            controller["tryout_enabled"] = tryout
        values = dict(
            mode=mode,
            mask=mode == "safe",
            reselect=mode == "safe",
            scorer="jps" if mode == "jps" else "oracle",
            delta=heat["delta"],
            k=heat["k"],
            suppress_h=heat["suppress_h"],
            suppress_r=heat["suppress_r"],
            noise_spill=heat["noise_spill"],
            blur_bins=heat["blur_bins"],
            jitter=heat["jitter"],
            merge_radius=planner["merge_radius"],
            success_radius=planner["success_radius"],
            stop_progress=planner["stop_progress"],
            step_budget=harness["step_budget"],
            dynamic_p=0.0,
            jps_cell_size=jps["cell_size"],
            jps_projection_noise=jps["projection_noise"],
            jps_lookahead=jps["lookahead"],
            jps_stop_radius=jps["stop_radius"],
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        if values.get("weights") is not None:
            values["weights"] = tuple(float(w) for w in values["weights"])
        try:
            return cls(
                lidar=LidarConfig.from_dict(lidar),
                controller=ControllerConfig.from_dict(controller),
                **values,
            )
        except TypeError as e:
            raise ConfigError(f"invalid agent setting: {e}")

    def with_dynamic(self, p: float) -> "AgentConfig":
        return replace(self, dynamic_p=p)

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]

    def label(self) -> str:
        if self.mode == "jps":
            return "jps"
        return f"mask={'on' if self.mask else 'off'} reselect={'on' if self.reselect else 'off'}"


@dataclass
class EpisodeResult:
    scene_id: str
    seed: int
    success: bool
    trajectory: List[Pose]
    actions: List[Action]
    events: List[CollisionEvent]
    ne: float
    ne_euclid: float
    oracle_hit: bool
    shortest: float
    mask_counts: List[int] = field(default_factory=list)
    occupied_props: List[float] = field(default_factory=list)
    waypoint_terms: List[float] = field(default_factory=list)
    termination: str = "stop"
    fingerprint: str = ""
    dynamic: bool = False
    plan_ms: float = 0.0

    @property
    def outcome(self) -> str:
        return "Success" if self.success else "Fail"

    @property
    def steps(self) -> int:
        return len(self.trajectory) - 1

    @property
    def tl(self) -> float:
        return sum(a.point.distance_to(b.point) for a, b in zip(self.trajectory, self.trajectory[1:]))

    @property
    def nav_collisions(self) -> int:
        return sum(1 for e in self.events if e.kind is CollisionKind.NAVIGATION)

    @property
    def waypoint_collisions(self) -> int:
        return sum(1 for e in self.events if e.kind is CollisionKind.WAYPOINT)

    @property
    def dynamic_collisions(self) -> int:
        return sum(1 for e in self.events if e.kind is CollisionKind.DYNAMIC)

    @property
    def final_pose(self) -> Pose:
        return self.trajectory[-1]


class _Episode:
    """Mutable per-episode state shared by the safe and JPS loops"""

    def __init__(self, scene: Scene, agent: AgentConfig, seed: int):
        self.scene = scene
        self.agent = agent
        self.seed = seed
        self.pose = scene.start
        self.trajectory = [scene.start]
        self.actions: List[Action] = []
        self.events: List[CollisionEvent] = []
        self.mask_counts: List[int] = []
        self.props: List[float] = []
        self.wc_terms: List[float] = []
        self.plan_seconds = 0.0
        self.decisions = 0
        # trajectory index where the agent last stood on its current graph node
        self.anchor = 0
        self.injector = DynamicInjector(agent.dynamic_p, derive_seed(seed, _INJECT)) if agent.dynamic_p > 0 else None

    @property
    def budget_left(self) -> int:
        return self.agent.step_budget - len(self.actions)

    def record_mask(self, mask):
        self.mask_counts.append(mask.occupied_count)
        self.props.append(mask.occupied_count / mask.cells.size)

    def _take(self, leg):
        self.actions.extend(leg.actions)
        self.trajectory.extend(leg.poses)
        self.events.extend(leg.events)
        self.pose = leg.pose
        return leg

    def drive(self, target: Point2D, node_id: Optional[int]):
        return self._take(navigate_leg(
            self.scene,
            self.pose,
            target,
            self.agent.controller,
            self.injector,
            node_id=node_id,
            step_offset=len(self.actions),
            max_steps=self.budget_left,
            seed=derive_seed(self.seed, _TRYOUT, self.decisions),
        ))

    def return_to_node(self, node_id: Optional[int]):
        """Retrace the failed leg back to where the selection was made"""
        path: List[Point2D] = []
        for p in self.trajectory[self.anchor:-1]:
            if not path or p.point != path[-1]:
                path.append(p.point)
        if path and path[-1] == self.pose.point:
            path.pop()
        leg = self._take(retrace(
            self.scene,
            self.pose,
            path,
            self.agent.controller,
            node_id=node_id,
            step_offset=len(self.actions),
            max_steps=self.budget_left,
        ))
        self.anchor = len(self.trajectory) - 1
        return leg

    def stop(self):
        self.actions.append(Action.STOP)
        self.trajectory.append(self.pose)

    def finish(self, stopped: bool, termination: str) -> EpisodeResult:
        scene, agent = self.scene, self.agent
        final = self.pose.point
        ne_euclid = final.distance_to(scene.goal)
        ne = geodesic(scene, final)
        if not math.isfinite(ne):
            ne = ne_euclid
        hits = [geodesic(scene, p.point) <= agent.success_radius for p in self.trajectory]
        return EpisodeResult(
            scene_id=scene.id,
            seed=self.seed,
            success=stopped and ne <= agent.success_radius,
            trajectory=self.trajectory,
            actions=self.actions,
            events=self.events,
            ne=ne,
            ne_euclid=ne_euclid,
            oracle_hit=any(hits),
            shortest=geodesic(scene, scene.start.point),
            mask_counts=self.mask_counts,
            occupied_props=self.props,
            waypoint_terms=self.wc_terms,
            termination=termination,
            fingerprint=agent.fingerprint(),
            dynamic=agent.dynamic_p > 0,
            plan_ms=1000.0 * self.plan_seconds / max(self.decisions, 1),
        )


def recorded_heatmap_path(directory, scene_id: str, decision: int) -> Path:
    return Path(directory) / f"{scene_id}-{decision:03d}.txt"


def default_heatmap(agent: AgentConfig, seed: int) -> HeatmapFn:
    """
    Oracle heatmap with seeded confidence jitter and optional off-support spill.
    With agent.heatmap_dir set, a recorded heatmap for the scene and decision is
    used as-is when one exists; other decisions fall back to the oracle.
    """

    def build(scene: Scene, pose: Pose, decision: int) -> PolarHeatmap:
        if agent.heatmap_dir is not None:
            path = recorded_heatmap_path(agent.heatmap_dir, scene.id, decision)
            if path.is_file():
                logger.debug("%s: decision %d heatmap from %s", scene.id, decision, path)
                return load_heatmap(path, pose, agent.lidar)
        heat = oracle_heatmap(scene, pose, agent.lidar)
        heat = jitter_heatmap(heat, agent.jitter, derive_seed(seed, _JITTER, decision))
        return noisy_heatmap(heat, agent.noise_spill, agent.blur_bins, derive_seed(seed, _SPILL, decision), agent.lidar)

    return build


def _score(graph: NavGraph, scene: Scene, agent: AgentConfig) -> ScoreVector:
    if agent.scorer == "linear":
        return score_linear(graph, LinearScorer(agent.weights), scene)
    return score_oracle(graph, scene, agent.success_radius, agent.stop_progress)


def run_episode(
    scene: Scene,
    agent: AgentConfig,
    seed: int,
    heatmap_fn: Optional[HeatmapFn] = None,
    on_decision: Optional[DecisionHook] = None,
) -> EpisodeResult:
    """Run one episode; failures are outcomes, never exceptions"""
    if agent.mode == "jps":
        return run_jps_episode(scene, agent, seed)
    ep = _Episode(scene, agent, seed)
    heatmap_fn = heatmap_fn or default_heatmap(agent, seed)
    graph = NavGraph()

    while True:
        if ep.budget_left <= 0 or ep.decisions >= agent.step_budget:
            return ep.finish(False, NavOutcome.STEP_BUDGET.value)
        ep.decisions += 1
        t0 = time.perf_counter()
        mask = sense_mask(scene, ep.pose, agent.lidar, derive_seed(seed, _LIDAR, ep.decisions))
        ep.record_mask(mask)
        heat = heatmap_fn(scene, ep.pose, ep.decisions)
        if agent.mask:
            heat = apply_mask(heat, mask, agent.delta)
        waypoints = nms_sample(heat, agent.k, agent.suppress_h, agent.suppress_r, agent.lidar)
        step_index = len(ep.actions)
        collided = [e for e in (classify_waypoint(scene, w, step_index) for w in waypoints) if e is not None]
        ep.events.extend(collided)
        ep.wc_terms.append(len(collided) / len(waypoints) if waypoints else 0.0)

        update_graph(graph, ep.pose, waypoints, agent.merge_radius, step=step_index)
        scores = _score(graph, scene, agent)
        if on_decision is not None:
            on_decision(graph, scores, scene)
        choice = select_node(scores)
        ep.plan_seconds += time.perf_counter() - t0
        ep.anchor = len(ep.trajectory) - 1

        while True:
            if choice == STOP_ID:
                ep.stop()
                return ep.finish(True, "stop")
            leg = ep.drive(graph.nodes[choice].position, choice)
            if leg.outcome is NavOutcome.ARRIVED:
                break
            if ep.budget_left <= 0:
                return ep.finish(False, NavOutcome.STEP_BUDGET.value)
            logger.debug("%s: leg to node %d ended %s", scene.id, choice, leg.outcome.value)
            if not agent.reselect:
                return ep.finish(False, leg.outcome.value)
            failed = choice
            choice = reselect(scores, failed, graph)
            if choice != STOP_ID:
                ep.return_to_node(failed)
                if ep.budget_left <= 0:
                    return ep.finish(False, NavOutcome.STEP_BUDGET.value)


def _goal_cell(grid: EgoGrid, goal: Point2D):
    """Goal cell, pulled inside the grid (and off obstacles on the way in) when it lies outside"""
    cell = grid.cell_of(goal)
    if grid.inside(cell):
        return cell
    r0, c0 = grid.center
    clamped = grid.clamp(cell)
    n = max(abs(clamped[0] - r0), abs(clamped[1] - c0))
    for i in range(n, 0, -1):
        candidate = (r0 + round((clamped[0] - r0) * i / n), c0 + round((clamped[1] - c0) * i / n))
        if not grid.cells[candidate]:
            return candidate
    return clamped


def run_jps_episode(scene: Scene, agent: AgentConfig, seed: int) -> EpisodeResult:
    """Replan on a fresh egocentric grid every leg and follow the path with the controller"""
    ep = _Episode(scene, agent, seed)
    lidar = replace(agent.lidar, mode="2d")

    while True:
        if ep.budget_left <= 0 or ep.decisions >= agent.step_budget:
            return ep.finish(False, NavOutcome.STEP_BUDGET.value)
        if ep.pose.point.distance_to(scene.goal) <= agent.jps_stop_radius:
            ep.stop()
            return ep.finish(True, "stop")
        ep.decisions += 1
        t0 = time.perf_counter()
        scan = scan2d(scene, ep.pose, lidar, derive_seed(seed, _LIDAR, ep.decisions))
        ep.record_mask(build_mask(scan, lidar, ep.pose))
        grid = project_to_grid(
            scan,
            ep.pose,
            agent.jps_cell_size,
            lidar.max_range,
            agent.jps_projection_noise,
            derive_seed(seed, _GRID, ep.decisions),
        )
        result = plan(grid, grid.center, _goal_cell(grid, scene.goal))
        ep.plan_seconds += time.perf_counter() - t0
        if result.status is not PlanStatus.OK:
            logger.debug("%s: jps %s at step %d", scene.id, result.status.value, len(ep.actions))
            ep.stop()
            return ep.finish(True, result.status.value)

        ahead = max(1, int(round(agent.jps_lookahead / agent.jps_cell_size)))
        cells = result.path.cells
        target = grid.world_of(cells[min(ahead, len(cells) - 1)])
        leg = ep.drive(target, None)
        if leg.outcome is NavOutcome.ARRIVED and leg.actions:
            continue
        if leg.outcome is NavOutcome.ARRIVED:
            # already within arrival radius of the lookahead point: nothing left to plan toward
            ep.stop()
            return ep.finish(True, "stop")
        if ep.budget_left <= 0:
            return ep.finish(False, NavOutcome.STEP_BUDGET.value)
        return ep.finish(False, leg.outcome.value)


def replay_trace(scene: Scene, path) -> Tuple[Pose, List[Action]]:
    """Re-execute a saved action trace from the scene start"""
    actions = read_trace(path)
    return replay_actions(scene, scene.start, actions), actions
