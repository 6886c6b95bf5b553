import numpy as np
import pytest

from episode_runner import AgentConfig, run_episode
from nav_config import DEFAULT_CONFIG, ContractViolation, ScenarioIOError
from nav_graph import STOP_ID, LinearScorer
from scorer_training import (
    WEIGHTS_HEADER,
    TrainingSample,
    collect_samples,
    load_weights,
    mean_loss,
    mean_target_probability,
    save_weights,
    top1_agreement,
    train_scorer,
)

TRUE_WEIGHTS = np.array([-1.0, -0.5, 0.8, 0.2, -3.0])


def synthetic_samples(n=80, nodes=7, seed=0):
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n):
        features = rng.normal(size=(nodes, 5))
        unmasked = np.ones(nodes, dtype=bool)
        unmasked[STOP_ID] = False
        logits = np.where(unmasked, features @ TRUE_WEIGHTS, -np.inf)
        order = np.argsort(-logits, kind="stable")
        samples.append(TrainingSample(features, unmasked, int(order[0]), int(order[1])))
    return samples


def test_training_recovers_the_ranking():
    samples = synthetic_samples()
    scorer = train_scorer(samples, iterations=200)
    zeros = np.zeros(5)
    assert mean_loss(scorer.weights, samples, 0.8, 0.2)[0] < mean_loss(zeros, samples, 0.8, 0.2)[0]
    assert top1_agreement(scorer, samples) >= 0.8
    assert mean_target_probability(scorer, samples, "a1") > mean_target_probability(LinearScorer(), samples, "a1")
    assert np.dot(scorer.weights, TRUE_WEIGHTS) > 0


def test_training_is_deterministic():
    samples = synthetic_samples(n=30)
    a = train_scorer(samples, iterations=50)
    b = train_scorer(samples, iterations=50)
    np.testing.assert_array_equal(a.weights, b.weights)


def test_mean_loss_gradient():
    rng = np.random.default_rng(4)
    eps = 1e-6
    for seed in range(20):
        samples = synthetic_samples(n=10, seed=seed)
        w = rng.normal(size=5) * 0.5
        _, grad = mean_loss(w, samples, 0.8, 0.2)
        numeric = np.zeros(5)
        for i in range(5):
            step = np.zeros(5)
            step[i] = eps
            numeric[i] = (mean_loss(w + step, samples, 0.8, 0.2)[0] - mean_loss(w - step, samples, 0.8, 0.2)[0]) / (2 * eps)
        assert np.linalg.norm(grad - numeric) / max(np.linalg.norm(grad), np.linalg.norm(numeric)) < 1e-5


def test_second_target_weight_keeps_runner_up_probability():
    train, held_out = synthetic_samples(n=120, seed=1), synthetic_samples(n=60, seed=2)
    weighted = train_scorer(train, 200, lambda1=0.8, lambda2=0.2)
    best_only = train_scorer(train, 200, lambda1=1.0, lambda2=0.0)
    assert mean_target_probability(weighted, held_out, "a2") > mean_target_probability(best_only, held_out, "a2")


def test_training_edge_cases():
    initial = LinearScorer(np.ones(5))
    assert train_scorer(synthetic_samples(n=3), iterations=0, initial=initial) is initial
    with pytest.raises(ContractViolation):
        train_scorer([])
    with pytest.raises(ContractViolation):
        top1_agreement(LinearScorer(), [])


def test_collect_samples_from_rollouts(open_scene, walled_scene):
    agent = AgentConfig.from_config(DEFAULT_CONFIG, step_budget=80)
    samples = collect_samples([walled_scene, open_scene], agent, seed=4, max_per_scene=3)
    assert 0 < len(samples) <= 6
    for s in samples:
        assert s.a1 != s.a2
        assert not s.unmasked[STOP_ID]
        assert s.unmasked[s.a1] and s.unmasked[s.a2]
        assert s.features.shape == (s.unmasked.shape[0], 5)
        assert np.isfinite(s.features).all()


def test_weights_file(tmp_path):
    scorer = LinearScorer(np.array([0.1, -2.5, 1e-8, 3.0, -0.333333333333]))
    path = tmp_path / "w.txt"
    save_weights(scorer, path)
    assert path.read_text().splitlines()[0] == WEIGHTS_HEADER
    np.testing.assert_array_equal(load_weights(path).weights, scorer.weights)

    path.write_text("weights\n1\n2\n3\n4\n5\n")
    with pytest.raises(ScenarioIOError):
        load_weights(path)
    path.write_text(WEIGHTS_HEADER + "\n1\n2\n")
    with pytest.raises(ScenarioIOError):
        load_weights(path)
    path.write_text(WEIGHTS_HEADER + "\n1\n2\nx\n4\n5\n")
    with pytest.raises(ScenarioIOError):
        load_weights(path)
    with pytest.raises(ScenarioIOError):
        load_weights(tmp_path / "missing.txt")


def test_linear_agent_runs_with_trained_weights(open_scene):
    scorer = train_scorer(synthetic_samples(n=20), iterations=30)
    agent = AgentConfig.from_config(DEFAULT_CONFIG, scorer="linear", weights=scorer.weights, step_budget=40)
    result = run_episode(open_scene, agent, seed=0)
    assert len(result.actions) <= 40
