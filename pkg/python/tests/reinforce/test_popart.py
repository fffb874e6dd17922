"""Tests for return standardization and the single-task baseline learner."""

import math
from typing import Any, Dict, Optional

import numpy as np
import pytest

from skillembed.envs import Environment, StepResult
from skillembed.errors import ConfigurationError, UsageError
from skillembed.reinforce import EpisodicReinforce, EpisodicReinforceConfig, PopArtState, popart_normalize
from skillembed.seeding import SeedSequencer


class TestPopArt:
    """Test the per-task moment recurrence."""

    def test_single_target_update(self) -> None:
        """mu 0, nu 1, target 2 and beta 0.5 give mu 1, nu 2.5."""
        pop = PopArtState(beta=0.5)
        normalized = popart_normalize(pop, np.array([2.0]), "task")
        assert pop.moments["task"] == (pytest.approx(1.0), pytest.approx(2.5))
        assert normalized[0] == pytest.approx(1.0 / math.sqrt(1.5))

    def test_each_target_updates_in_order(self) -> None:
        """Targets 2 then 4 with beta 0.5 give mu 2.5 and nu 9.25."""
        pop = PopArtState(beta=0.5)
        normalized = popart_normalize(pop, np.array([2.0, 4.0]), "t")
        assert pop.moments["t"] == (pytest.approx(2.5), pytest.approx(9.25))
        sigma = math.sqrt(3.0)
        np.testing.assert_allclose(normalized, [-0.5 / sigma, 1.5 / sigma])

    def test_batch_matches_one_at_a_time(self) -> None:
        """A batch leaves the same moments as feeding its returns singly."""
        returns = np.random.default_rng(4).normal(1.0, 2.0, size=7)
        batched, single = PopArtState(beta=0.3), PopArtState(beta=0.3)
        popart_normalize(batched, returns, (1, 2))
        for y in returns:
            popart_normalize(single, np.array([y]), (1, 2))
        assert batched.moments[(1, 2)] == (pytest.approx(single.moments[(1, 2)][0]),
                                           pytest.approx(single.moments[(1, 2)][1]))

    def test_order_matters(self) -> None:
        """Reversing a batch changes the first moment."""
        forward, backward = PopArtState(beta=0.5), PopArtState(beta=0.5)
        popart_normalize(forward, np.array([2.0, 4.0]), "t")
        popart_normalize(backward, np.array([4.0, 2.0]), "t")
        assert forward.moments["t"][0] != pytest.approx(backward.moments["t"][0])

    def test_zero_step_size_freezes(self) -> None:
        """beta 0 keeps the initial statistics."""
        pop = PopArtState(beta=0.0)
        returns = np.array([3.0, -1.0, 0.5])
        np.testing.assert_allclose(popart_normalize(pop, returns, (0, 0)), returns)
        assert pop.statistics((0, 0)) == (0.0, 1.0)

    def test_scale_equivariance(self) -> None:
        """Scaling the returns and the initial spread by c leaves the output unchanged."""
        returns = np.random.default_rng(0).normal(2.0, 3.0, size=50)
        first = popart_normalize(PopArtState(beta=0.1), returns, "a")
        second = popart_normalize(PopArtState(beta=0.1, initial_second=7.5 ** 2), 7.5 * returns, "a")
        np.testing.assert_allclose(first, second)

    def test_tasks_are_independent(self) -> None:
        """Each task keeps its own moments."""
        pop = PopArtState(beta=0.5)
        popart_normalize(pop, np.array([10.0]), (0, 0))
        popart_normalize(pop, np.array([-4.0]), (1, 1))
        assert pop.moments[(0, 0)][0] == pytest.approx(5.0)
        assert pop.moments[(1, 1)][0] == pytest.approx(-2.0)

    def test_long_run_standardizes(self) -> None:
        """After many batches of i.i.d. returns the statistics standardize fresh draws."""
        rng = np.random.default_rng(1)
        pop = PopArtState(beta=0.002)
        for _ in range(2000):
            popart_normalize(pop, rng.normal(40.0, 5.0, size=32), "t")
        mu, sigma = pop.statistics("t")
        batch = (rng.normal(40.0, 5.0, size=100000) - mu) / sigma
        assert abs(batch.mean()) < 0.1
        assert batch.std() == pytest.approx(1.0, abs=0.1)

    def test_sigma_floor(self) -> None:
        """Constant returns never divide by less than the floor."""
        pop = PopArtState(beta=1.0)
        normalized = popart_normalize(pop, np.full(4, 3.0), "t")
        assert pop.statistics("t")[1] == pytest.approx(1e-4)
        np.testing.assert_allclose(normalized, 0.0, atol=1e-6)

    def test_empty_returns(self) -> None:
        """An empty batch is a usage error."""
        with pytest.raises(UsageError):
            popart_normalize(PopArtState(), np.array([]), "t")

    def test_step_size_range(self) -> None:
        """beta outside [0, 1] is rejected."""
        with pytest.raises(ConfigurationError):
            PopArtState(beta=1.5)

    def test_round_trip(self) -> None:
        """Moments survive to_dict and from_dict."""
        pop = PopArtState(beta=0.3)
        popart_normalize(pop, np.array([1.0, 2.0]), (2, 1))
        assert PopArtState.from_dict(pop.to_dict()).moments == pop.moments


class ArmEnv(Environment):
    """One-step two-armed bandit."""

    observation_dim = 1
    n_actions = 2
    max_steps = 1

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        return np.ones(1)

    def step(self, action) -> StepResult:
        return StepResult(np.ones(1), [0.0, 1.0][int(action)], True, False, {})

    def snapshot(self) -> Dict[str, Any]:
        return {}

    def restore(self, snapshot: Dict[str, Any], rng: Optional[np.random.Generator] = None) -> None:
        pass


class TestEpisodicReinforce:
    """Test the baseline-equipped single-task learner."""

    def test_learns_better_arm(self) -> None:
        """The value baseline learner settles on the paying arm."""
        cfg = EpisodicReinforceConfig(learning_rate=0.05, value_learning_rate=0.05, hidden_width=4)
        learner = EpisodicReinforce(cfg, [ArmEnv() for _ in range(10)], SeedSequencer(2))
        for _ in range(200):
            learner.train_batch()
        probs = np.exp(learner.policy.log_prob_value(np.ones((2, 1)), np.zeros((2, 0)), np.array([0, 1])))
        assert probs[1] > 0.9
        assert learner.episodes == 2000

    def test_environment_count_checked(self) -> None:
        """One environment per episode in the batch."""
        with pytest.raises(ConfigurationError):
            EpisodicReinforce(EpisodicReinforceConfig(), [ArmEnv()], SeedSequencer(0))
