"""
Topological navigation graph, node scoring, greedy selection with
re-selection, and the weighted optimal/sub-optimal loss.

Node 0 is always the stop node. Scores are maximized; masked nodes are never
selected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from geometry import Point2D, Pose
from nav_config import ContractViolation
from scene import Scene, geodesic

STOP_ID = 0
# stop edges carry no geometry; any positive weight satisfies the graph invariants
STOP_EDGE_WEIGHT = 1.0
MIN_EDGE_WEIGHT = 1e-9
# geodesic feature value for positions cut off from the goal
UNREACHABLE_FEATURE = 50.0
N_FEATURES = 5
FEATURE_NAMES = ("geodesic", "distance", "alignment", "recency", "is_stop")


class NodeKind(Enum):
    STOP = "stop"
    VISITED = "visited"
    CURRENT = "current"
    GHOST = "ghost"


@dataclass
class NavNode:
    id: int
    kind: NodeKind
    position: Optional[Point2D]
    last_visit_step: int = -1
    failed: bool = False


@dataclass
class NavGraph:
    nodes: List[NavNode] = field(default_factory=lambda: [NavNode(STOP_ID, NodeKind.STOP, None)])
    edges: Dict[Tuple[int, int], float] = field(default_factory=dict)
    current: Optional[int] = None
    heading: float = 0.0
    step: int = 0

    def add_edge(self, i: int, j: int, weight: float):
        if i == j:
            return
        key = (min(i, j), max(i, j))
        self.edges[key] = max(weight, MIN_EDGE_WEIGHT)

    def edge(self, i: int, j: int) -> Optional[float]:
        return self.edges.get((min(i, j), max(i, j)))

    def neighbors(self, i: int) -> List[int]:
        return sorted(b if a == i else a for a, b in self.edges if i in (a, b))

    def current_node(self) -> Optional[NavNode]:
        return None if self.current is None else self.nodes[self.current]

    def _nearest(self, point: Point2D, kinds, radius: float) -> Optional[NavNode]:
        best, best_d = None, radius
        for node in self.nodes:
            if node.kind in kinds and node.position is not None:
                d = node.position.distance_to(point)
                if d <= best_d:
                    best, best_d = node, d
        return best

    def _new_node(self, kind: NodeKind, position: Point2D) -> NavNode:
        node = NavNode(len(self.nodes), kind, position)
        self.nodes.append(node)
        self.add_edge(STOP_ID, node.id, STOP_EDGE_WEIGHT)
        return node


def update_graph(
    g: NavGraph,
    pose: Pose,
    waypoints: Sequence,
    merge_radius: float = 0.5,
    step: Optional[int] = None,
) -> NavGraph:
    """Localize the agent in the graph and merge newly observed waypoints"""
    here = pose.point
    if step is not None:
        g.step = step
    g.heading = pose.heading
    previous = g.current_node()

    if previous is not None and previous.position.distance_to(here) <= merge_radius:
        current = previous
        current.position = here
    else:
        if previous is not None:
            previous.kind = NodeKind.VISITED
        current = g._nearest(here, (NodeKind.VISITED, NodeKind.GHOST), merge_radius)
        if current is None:
            current = g._new_node(NodeKind.CURRENT, here)
        current.kind = NodeKind.CURRENT
        current.position = here
        if previous is not None:
            g.add_edge(previous.id, current.id, previous.position.distance_to(here))
    current.last_visit_step = g.step
    g.current = current.id

    for wp in waypoints:
        position = wp.position
        if g._nearest(position, (NodeKind.VISITED, NodeKind.CURRENT), merge_radius) is not None:
            continue
        ghost = g._nearest(position, (NodeKind.GHOST,), merge_radius)
        if ghost is None:
            ghost = g._new_node(NodeKind.GHOST, position)
        else:
            ghost.position = position
        g.add_edge(current.id, ghost.id, here.distance_to(position))

    for node in g.nodes[1:]:
        if g.edge(STOP_ID, node.id) is None:
            g.add_edge(STOP_ID, node.id, STOP_EDGE_WEIGHT)
    return g


@dataclass
class ScoreVector:
    scores: np.ndarray
    masked: np.ndarray


def base_mask(g: NavGraph) -> np.ndarray:
    return np.array(
        [n.kind in (NodeKind.VISITED, NodeKind.CURRENT) or n.failed for n in g.nodes],
        dtype=bool,
    )


def score_oracle(
    g: NavGraph,
    scene: Scene,
    success_radius: float = 3.0,
    stop_progress: float = 0.25,
) -> ScoreVector:
    """
    Ghosts score -(geodesic to goal + distance from the current node). Stop scores
    +inf once the current node is within the success radius and no unmasked ghost
    is at least stop_progress closer to the goal; -inf otherwise.

    The progress condition goes beyond the plain "within the success radius"
    rule: inside the radius the agent keeps moving while some ghost still
    gains stop_progress on the current node. stop_progress=0 gives back a
    rule that stops only when no ghost is any closer.
    """
    masked = base_mask(g)
    scores = np.full(len(g.nodes), -math.inf)
    current = g.current_node()
    here_geo = geodesic(scene, current.position) if current else math.inf
    best_ghost_geo = math.inf
    for node in g.nodes:
        if node.kind is NodeKind.GHOST and not masked[node.id]:
            geo = geodesic(scene, node.position)
            best_ghost_geo = min(best_ghost_geo, geo)
            if math.isfinite(geo):
                scores[node.id] = -(geo + current.position.distance_to(node.position))
    if here_geo <= success_radius and not best_ghost_geo <= here_geo - stop_progress:
        scores[STOP_ID] = math.inf
    return ScoreVector(scores, masked)


def node_features(g: NavGraph, scene: Scene) -> np.ndarray:
    """Feature rows (geodesic, distance, alignment, recency, is_stop) per node"""
    current = g.current_node()
    if current is None:
        raise ContractViolation("graph has no current node")
    feats = np.zeros((len(g.nodes), N_FEATURES))
    heading = math.radians(g.heading)
    for node in g.nodes:
        position = current.position if node.kind is NodeKind.STOP else node.position
        geo = geodesic(scene, position)
        dist = current.position.distance_to(position)
        if dist > 1e-9:
            bearing = math.atan2(position.y - current.position.y, position.x - current.position.x)
            align = math.cos(bearing - heading)
        else:
            align = 0.0
        recency = 1.0 / (1.0 + g.step - node.last_visit_step) if node.last_visit_step >= 0 else 0.0
        feats[node.id] = (
            geo if math.isfinite(geo) else UNREACHABLE_FEATURE,
            dist,
            align,
            recency,
            1.0 if node.kind is NodeKind.STOP else 0.0,
        )
    return feats


@dataclass
class LinearScorer:
    weights: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(N_FEATURES)

    def logits(self, features: np.ndarray) -> np.ndarray:
        if not np.isfinite(features).all():
            raise ContractViolation("non-finite node feature")
        return features @ self.weights


def score_linear(g: NavGraph, scorer: LinearScorer, scene: Scene) -> ScoreVector:
    return ScoreVector(scorer.logits(node_features(g, scene)), base_mask(g))


def select_node(s: ScoreVector) -> int:
    """Highest unmasked score, ties to the lowest id; Stop when nothing is selectable"""
    best_id, best = STOP_ID, -math.inf
    for i, (score, masked) in enumerate(zip(s.scores, s.masked)):
        if masked or score == -math.inf or math.isnan(score):
            continue
        if score > best:
            best_id, best = i, score
    return best_id


def reselect(s: ScoreVector, failed: int, g: Optional[NavGraph] = None) -> int:
    """Mask the failed node for the rest of the episode and select again"""
    if failed != STOP_ID:
        s.masked[failed] = True
        if g is not None:
            g.nodes[failed].failed = True
    return select_node(s)


def weighted_two_target_loss(
    logits: np.ndarray,
    unmasked: np.ndarray,
    a1: int,
    a2: int,
    lambda1: float = 0.8,
    lambda2: float = 0.2,
):
    """
    L = -(lambda1 log p(a1) + lambda2 log p(a2)) with p the softmax over unmasked
    logits. Returns (L, dL/dlogits).
    """
    if a1 == a2:
        raise ContractViolation("optimal and sub-optimal targets must differ")
    if not (unmasked[a1] and unmasked[a2]):
        raise ContractViolation("loss targets must be unmasked nodes")
    z = np.where(unmasked, logits, -np.inf)
    z_max = z[unmasked].max()
    shifted = z - z_max
    log_norm = np.log(np.exp(shifted[unmasked]).sum())
    log_p = shifted - log_norm
    loss = -(lambda1 * log_p[a1] + lambda2 * log_p[a2])
    p = np.where(unmasked, np.exp(log_p), 0.0)
    grad = (lambda1 + lambda2) * p
    grad[a1] -= lambda1
    grad[a2] -= lambda2
    return float(loss), grad


def loss_and_grad(
    scorer: LinearScorer,
    g: NavGraph,
    scene: Scene,
    a1: int,
    a2: int,
    lambda1: float = 0.8,
    lambda2: float = 0.2,
    unmasked: Optional[np.ndarray] = None,
):
    """Loss and its exact gradient with respect to the scorer weights"""
    feats = node_features(g, scene)
    if unmasked is None:
        unmasked = ~base_mask(g)
    loss, dlogits = weighted_two_target_loss(scorer.logits(feats), unmasked, a1, a2, lambda1, lambda2)
    return loss, feats.T @ dlogits


def ranked_ghosts(s: ScoreVector) -> List[int]:
    """Unmasked, finite-scored non-stop nodes, best first (ties to lower id)"""
    ids = [i for i in range(1, len(s.scores)) if not s.masked[i] and np.isfinite(s.scores[i])]
    return sorted(ids, key=lambda i: (-s.scores[i], i))
