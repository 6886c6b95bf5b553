"""
Training the linear node scorer with the weighted optimal/sub-optimal loss.

Samples come from oracle rollouts: at every planning step with at least two
selectable ghosts, the oracle's best and second-best ghosts become the
targets. The stop node is excluded from training distributions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from tqdm import tqdm

from episode_runner import AgentConfig, run_episode
from nav_config import ContractViolation, ScenarioIOError
from nav_graph import N_FEATURES, STOP_ID, LinearScorer, node_features, ranked_ghosts, weighted_two_target_loss
from rng import derive_seed

logger = logging.getLogger(__name__)

WEIGHTS_HEADER = "safenav-linear-scorer v1"
# keeps weights bounded on separable sets
L2_PENALTY = 1e-4


@dataclass
class TrainingSample:
    features: np.ndarray
    unmasked: np.ndarray
    a1: int
    a2: int


def collect_samples(scenes, agent: AgentConfig, seed: int, max_per_scene: int = 8, progress: bool = False) -> List[TrainingSample]:
    """Roll out the oracle agent and record (features, best, second best) at each decision"""
    oracle = replace(agent, mode="safe", scorer="oracle", weights=None, mask=True, reselect=True, dynamic_p=0.0)
    samples: List[TrainingSample] = []
    for index, scene in enumerate(tqdm(scenes, desc="Collecting samples", disable=not progress)):
        taken: List[TrainingSample] = []

        def record(graph, scores, scene_):
            if len(taken) >= max_per_scene:
                return
            ranked = ranked_ghosts(scores)
            if len(ranked) < 2:
                return
            unmasked = ~scores.masked.copy()
            unmasked[STOP_ID] = False
            unmasked &= np.isfinite(scores.scores)
            taken.append(TrainingSample(node_features(graph, scene_), unmasked, ranked[0], ranked[1]))

        run_episode(scene, oracle, derive_seed(seed, index), on_decision=record)
        samples.extend(taken)
    logger.info("collected %d training samples from %d scenes", len(samples), len(scenes))
    return samples


def mean_loss(weights: np.ndarray, samples: Sequence[TrainingSample], lambda1: float, lambda2: float):
    """Mean loss and gradient over samples, plus the L2 penalty"""
    total = 0.0
    grad = np.zeros(N_FEATURES)
    for s in samples:
        loss, dlogits = weighted_two_target_loss(s.features @ weights, s.unmasked, s.a1, s.a2, lambda1, lambda2)
        total += loss
        grad += s.features.T @ dlogits
    n = len(samples)
    return total / n + L2_PENALTY * float(weights @ weights), grad / n + 2 * L2_PENALTY * weights


def train_scorer(
    samples: Sequence[TrainingSample],
    iterations: int = 400,
    lambda1: float = 0.8,
    lambda2: float = 0.2,
    initial: Optional[LinearScorer] = None,
) -> LinearScorer:
    """Deterministic quasi-Newton descent (L-BFGS) on the mean weighted loss"""
    if not samples:
        raise ContractViolation("training set is empty")
    initial = initial or LinearScorer()
    if iterations <= 0:
        return initial
    result = minimize(
        mean_loss,
        initial.weights.copy(),
        args=(samples, lambda1, lambda2),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": int(iterations)},
    )
    logger.info("scorer training: loss %.4f after %d iterations (%s)", result.fun, result.nit, result.message)
    return LinearScorer(result.x)


def _probabilities(scorer: LinearScorer, s: TrainingSample) -> np.ndarray:
    z = np.where(s.unmasked, s.features @ scorer.weights, -np.inf)
    z = z - z[s.unmasked].max()
    p = np.where(s.unmasked, np.exp(z), 0.0)
    return p / p.sum()


def top1_agreement(scorer: LinearScorer, samples: Sequence[TrainingSample]) -> float:
    """Fraction of samples where the scorer's best unmasked node is the oracle's best"""
    if not samples:
        raise ContractViolation("no samples to evaluate")
    hits = 0
    for s in samples:
        logits = np.where(s.unmasked, s.features @ scorer.weights, -np.inf)
        hits += int(np.argmax(logits) == s.a1)
    return hits / len(samples)


def mean_target_probability(scorer: LinearScorer, samples: Sequence[TrainingSample], target: str = "a2") -> float:
    if not samples:
        raise ContractViolation("no samples to evaluate")
    return float(np.mean([_probabilities(scorer, s)[getattr(s, target)] for s in samples]))


def save_weights(scorer: LinearScorer, path) -> None:
    try:
        with open(path, "w") as f:
            f.write(WEIGHTS_HEADER + "\n")
            for w in scorer.weights:
                f.write(f"{float(w)!r}\n")
    except OSError as e:
        raise ScenarioIOError(f"Error writing weights {path}: {e}")


def load_weights(path) -> LinearScorer:
    try:
        lines = [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
    except OSError as e:
        raise ScenarioIOError(f"Error reading weights {path}: {e}")
    if not lines or lines[0] != WEIGHTS_HEADER:
        raise ScenarioIOError(f"{path}: missing '{WEIGHTS_HEADER}' header")
    try:
        values = [float(v) for v in lines[1:]]
    except ValueError as e:
        raise ScenarioIOError(f"{path}: {e}")
    if len(values) != N_FEATURES or not np.isfinite(values).all():
        raise ScenarioIOError(f"{path}: expected {N_FEATURES} finite weights, got {len(values)}")
    return LinearScorer(np.array(values))
