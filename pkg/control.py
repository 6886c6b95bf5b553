"""
Point-to-point control toward a selected waypoint.

navigate_leg turns in 15 degree steps until the target bearing is within half
a turn step, then moves forward, and repeats. Blocked forwards are navigation
collisions. After stuck_threshold consecutive blocks the leg either gives up
(Blocked) or, with tryout enabled, tries deflected forwards from a fixed set of
headings before giving up.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from geometry import TURN_STEP, Action, Point2D, Pose, angle_diff
from nav_config import ConfigError, ScenarioIOError
from rng import DynamicInjector
from scene import Scene, step

logger = logging.getLogger(__name__)

ALIGN_TOLERANCE = TURN_STEP / 2
DEFAULT_TRYOUT_HEADINGS = (30.0, -30.0, 60.0, -60.0, 90.0, -90.0, 150.0, -150.0, 180.0)


class NavOutcome(Enum):
    ARRIVED = "arrived"
    BLOCKED = "blocked"
    DYNAMIC = "dynamic"
    STEP_BUDGET = "step_budget"


class CollisionKind(Enum):
    WAYPOINT = "waypoint"
    NAVIGATION = "navigation"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class CollisionEvent:
    kind: CollisionKind
    step: int
    position: Point2D
    node_id: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "step": self.step,
            "x": round(self.position.x, 6),
            "y": round(self.position.y, 6),
            "node": self.node_id,
        }


@dataclass(frozen=True)
class ControllerConfig:
    arrival_radius: float = 0.25
    stuck_threshold: int = 3
    max_steps_per_leg: int = 100
    tryout_enabled: bool = False
    tryout_headings: Tuple[float, ...] = DEFAULT_TRYOUT_HEADINGS
    tryout_random_order: bool = False

    def __post_init__(self):
        if self.arrival_radius <= 0 or self.stuck_threshold < 1 or self.max_steps_per_leg < 1:
            raise ConfigError("controller thresholds must be positive")
        for h in self.tryout_headings:
            if float(h) % TURN_STEP != 0:
                raise ConfigError(f"tryout heading {h} is not a multiple of {TURN_STEP} degrees")
        object.__setattr__(self, "tryout_headings", tuple(float(h) for h in self.tryout_headings))

    @classmethod
    def from_dict(cls, values: dict) -> "ControllerConfig":
        known = {k: values[k] for k in cls.__dataclass_fields__ if k in values}
        return cls(**known)


@dataclass
class LegResult:
    pose: Pose
    actions: List[Action] = field(default_factory=list)
    poses: List[Pose] = field(default_factory=list)
    events: List[CollisionEvent] = field(default_factory=list)
    outcome: NavOutcome = NavOutcome.ARRIVED

    @property
    def navigation_collisions(self) -> int:
        return sum(1 for e in self.events if e.kind is CollisionKind.NAVIGATION)


def _turn_toward(heading: float, desired: float) -> Optional[Action]:
    diff = angle_diff(desired, heading)
    if abs(diff) <= ALIGN_TOLERANCE:
        return None
    return Action.TURN_LEFT if diff > 0 else Action.TURN_RIGHT


def _deflection_order(config: ControllerConfig, seed: int) -> List[float]:
    headings = list(config.tryout_headings)
    if config.tryout_random_order:
        order = np.random.default_rng(seed).permutation(len(headings))
        headings = [headings[i] for i in order]
    return headings


def navigate_leg(
    scene: Scene,
    pose: Pose,
    target: Point2D,
    config: Optional[ControllerConfig] = None,
    injector: Optional[DynamicInjector] = None,
    node_id: Optional[int] = None,
    step_offset: int = 0,
    max_steps: Optional[int] = None,
    seed: int = 0,
) -> LegResult:
    """Drive from pose toward target with the discrete action set"""
    config = config or ControllerConfig()
    result = LegResult(pose=pose)

    if injector is not None and injector.inject(node_id):
        result.events.append(CollisionEvent(CollisionKind.DYNAMIC, step_offset, target, node_id))
        result.outcome = NavOutcome.DYNAMIC
        return result

    limit = config.max_steps_per_leg if max_steps is None else min(config.max_steps_per_leg, max_steps)
    deflections = _deflection_order(config, seed)
    next_deflection = 0
    blocked = 0
    block_heading = pose.heading
    # (heading when blocked, deflection) while a tryout forward is pending
    tryout: Optional[Tuple[float, float]] = None

    while True:
        # strictly inside: a target exactly one forward step away still gets that step
        if tryout is None and pose.point.distance_to(target) < config.arrival_radius:
            result.outcome = NavOutcome.ARRIVED
            break
        if len(result.actions) >= limit:
            result.outcome = NavOutcome.STEP_BUDGET
            break

        desired = pose.point.bearing_to(target) if tryout is None else tryout[0] + tryout[1]
        action = _turn_toward(pose.heading, desired) or Action.FORWARD
        new_pose, collided = step(scene, pose, action)
        result.actions.append(action)
        result.poses.append(new_pose)
        n = step_offset + len(result.actions)

        if not collided:
            if action is Action.FORWARD:
                if tryout is not None:
                    logger.debug("tryout deflection %+.0f succeeded at step %d", tryout[1], n)
                    tryout = None
                blocked = 0
            pose = new_pose
            continue

        result.events.append(CollisionEvent(CollisionKind.NAVIGATION, n, pose.point, node_id))
        if tryout is not None:
            next_deflection += 1
            tryout = None
        else:
            blocked += 1
            if blocked < config.stuck_threshold:
                continue
            block_heading = pose.heading
            if not config.tryout_enabled:
                result.outcome = NavOutcome.BLOCKED
                break
        if next_deflection >= len(deflections):
            result.outcome = NavOutcome.BLOCKED
            break
        tryout = (block_heading, deflections[next_deflection])

    result.pose = pose
    return result


def retrace(
    scene: Scene,
    pose: Pose,
    path: Sequence[Point2D],
    config: Optional[ControllerConfig] = None,
    node_id: Optional[int] = None,
    step_offset: int = 0,
    max_steps: Optional[int] = None,
) -> LegResult:
    """Drive back through the positions of path, last first, one leg per position"""
    result = LegResult(pose=pose)
    for point in reversed(path):
        remaining = None if max_steps is None else max_steps - len(result.actions)
        if remaining is not None and remaining <= 0:
            result.outcome = NavOutcome.STEP_BUDGET
            break
        leg = navigate_leg(scene, pose, point, config, None, node_id, step_offset + len(result.actions), remaining)
        result.actions.extend(leg.actions)
        result.poses.extend(leg.poses)
        result.events.extend(leg.events)
        pose = leg.pose
        if leg.outcome is not NavOutcome.ARRIVED:
            result.outcome = leg.outcome
            break
    result.pose = pose
    return result


def classify_waypoint(scene: Scene, waypoint, step_index: int = 0, node_id: Optional[int] = None) -> Optional[CollisionEvent]:
    """WaypointCollision when the waypoint is outside the agent-radius-dilated free space"""
    if scene.is_navigable(waypoint.position):
        return None
    return CollisionEvent(CollisionKind.WAYPOINT, step_index, waypoint.position, node_id)


def replay_actions(scene: Scene, pose: Pose, actions: Sequence[Action]) -> Pose:
    for action in actions:
        pose, _ = step(scene, pose, action)
    return pose


def write_trace(actions: Sequence[Action], path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            for action in actions:
                f.write(action.mnemonic + "\n")
    except OSError as e:
        raise ScenarioIOError(f"Error writing trace {path}: {e}")


def read_trace(path) -> List[Action]:
    try:
        with open(path) as f:
            lines = [line.strip() for line in f]
    except OSError as e:
        raise ScenarioIOError(f"Error reading trace {path}: {e}")
    actions = []
    for number, line in enumerate(lines, 1):
        if not line:
            continue
        try:
            actions.append(Action.from_mnemonic(line))
        except ValueError:
            raise ScenarioIOError(f"{path}:{number}: unknown action {line!r}")
    return actions
