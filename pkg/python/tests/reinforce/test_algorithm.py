"""Tests for on-policy multi-task training."""

import logging
import math
from typing import Any, Dict, Optional

import numpy as np
import pytest

from skillembed.embeddings import EmbeddingMode, TaskLatents
from skillembed.envs import Environment, StepResult, Trajectory, build_task_grid
from skillembed.errors import ConfigurationError, UsageError
from skillembed.numeric import Activation, Tape
from skillembed.numeric import autodiff as ad
from skillembed.numeric.gradcheck import gradient_check
from skillembed.policy import LatentPolicy, PolicyInput, policy_input_dim
from skillembed.reinforce import (ReinforceConfig, build_reinforce_state, kl_horizon_weight, regularized_returns,
                                  reinforce_loss, single_embedding_mode, train_iteration)
from skillembed.reinforce.algorithm import StepBatch, build_step_batch, score_surrogate, usable_steps
from skillembed.seeding import SeedSequencer


class BanditEnv(Environment):
    """One-step episodes paying a fixed reward per arm."""

    observation_dim = 1
    max_steps = 1

    def __init__(self, payouts):
        self.payouts = list(payouts)
        self.n_actions = len(self.payouts)

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        return np.ones(1)

    def step(self, action) -> StepResult:
        return StepResult(np.ones(1), self.payouts[int(action)], True, False, {})

    def snapshot(self) -> Dict[str, Any]:
        return {}

    def restore(self, snapshot: Dict[str, Any], rng: Optional[np.random.Generator] = None) -> None:
        pass


def _trajectory(rewards, cell=(0, 0), terminated=False, dims=(2, 2), seed=0) -> Trajectory:
    rng = np.random.default_rng(seed)
    steps = len(rewards)
    traj = Trajectory(*cell, terminated=terminated)
    traj.rewards = list(rewards)
    traj.states = list(rng.normal(size=(steps, 4)))
    traj.actions = [np.asarray(a) for a in rng.integers(0, 2, size=steps)]
    traj.z_noise = list(rng.standard_normal((steps, dims[0])))
    traj.g_noise = list(rng.standard_normal((steps, dims[1])))
    return traj


@pytest.fixture
def small_setup():
    rng = np.random.default_rng(7)
    latents = TaskLatents.create(EmbeddingMode.DISENTANGLED, (2, 2), 2, 2, rng)
    policy = LatentPolicy.build(4, 4, 1, 2, 3, 1, Activation.TANH, PolicyInput.CONCAT_OUTER, rng)
    return policy, latents


class TestRegularizedReturns:
    """Test the backward return recursion."""

    def test_geometric_sum(self, small_setup) -> None:
        """Reward 1 for 3 steps with gamma 0.5 gives [1.75, 1.5, 1]."""
        policy, latents = small_setup
        cfg = ReinforceConfig(gamma=0.5)
        returns = regularized_returns(_trajectory([1.0, 1.0, 1.0]), policy, latents, cfg)
        np.testing.assert_allclose(returns, [1.75, 1.5, 1.0])

    def test_zero_discount(self, small_setup) -> None:
        """gamma 0 returns the rewards themselves."""
        policy, latents = small_setup
        rewards = [0.3, -1.0, 2.0]
        returns = regularized_returns(_trajectory(rewards), policy, latents, ReinforceConfig(gamma=0.0))
        np.testing.assert_allclose(returns, rewards)

    def test_matches_direct_double_sum(self, small_setup) -> None:
        """With an entropy term the recursion equals the direct sum."""
        policy, latents = small_setup
        cfg = ReinforceConfig(gamma=0.9, alpha_pi=2.0)
        traj = _trajectory(list(np.random.default_rng(3).normal(size=12)))
        steps = len(traj)
        latent = latents.latent_values(np.zeros(steps, dtype=int), np.zeros(steps, dtype=int),
                                       np.array(traj.z_noise), np.array(traj.g_noise))
        log_probs = policy.log_prob_value(np.array(traj.states), latent, np.array(traj.actions))
        shaped = np.array(traj.rewards) - log_probs / 2.0
        expected = [sum(0.9 ** (h - t) * shaped[h] for h in range(t, steps)) for t in range(steps)]
        np.testing.assert_allclose(regularized_returns(traj, policy, latents, cfg), expected, rtol=1e-9)


class TestHorizon:
    """Test the KL weight and the horizon cutoff."""

    def test_kl_weight_for_cartpole(self) -> None:
        """gamma 0.99 over 300 steps weights the KLs by about 95.05."""
        assert kl_horizon_weight(0.99, 300) == pytest.approx(95.05, abs=0.02)

    def test_default_cutoff(self) -> None:
        """The cutoff defaults to 1 / (1 - gamma)."""
        assert ReinforceConfig(gamma=0.99).effective_cutoff == 100
        assert ReinforceConfig(gamma=0.99, horizon_cutoff=5).effective_cutoff == 5

    def test_truncated_episode_is_cut(self) -> None:
        """A 300-step time-limited episode keeps t = 0..200."""
        assert usable_steps(_trajectory([0.0] * 300), ReinforceConfig()) == 201

    def test_terminated_episode_is_cut(self) -> None:
        """Failures are cut at T - H like time limits."""
        assert usable_steps(_trajectory([0.0] * 150, terminated=True), ReinforceConfig()) == 51
        assert usable_steps(_trajectory([0.0] * 30, terminated=True), ReinforceConfig()) == 0

    def test_terminated_exemption_is_opt_in(self) -> None:
        """Switching cutoff_terminated off keeps every step of a failure."""
        traj = _trajectory([0.0] * 30, terminated=True)
        assert usable_steps(traj, ReinforceConfig(cutoff_terminated=False)) == 30
        assert usable_steps(_trajectory([0.0] * 30), ReinforceConfig(cutoff_terminated=False)) == 0

    def test_short_truncated_episode_warns(self, caplog) -> None:
        """Trajectories shorter than the cutoff are skipped with a warning."""
        with caplog.at_level(logging.WARNING):
            assert usable_steps(_trajectory([0.0] * 50), ReinforceConfig()) == 0
        assert "skipping" in caplog.text


class TestReinforceLoss:
    """Test the factored policy and embedding loss."""

    def test_empty_batch_rejected(self, small_setup) -> None:
        """No trajectories is a usage error."""
        policy, latents = small_setup
        with pytest.raises(UsageError):
            reinforce_loss(Tape(), [], [], policy, latents, ReinforceConfig(), 10)

    def test_terminated_steps_cut_in_batch(self, small_setup) -> None:
        """A failed episode contributes only t = 0..T - H to the step batch."""
        _, latents = small_setup
        cfg = ReinforceConfig(horizon_cutoff=3)
        failed = _trajectory([1.0] * 6, cell=(1, 1), terminated=True)
        batch = build_step_batch([failed], [np.arange(6.0)], latents, cfg)
        assert len(batch) == 4
        np.testing.assert_allclose(batch.weights, [0.0, 1.0, 2.0, 3.0])

    def test_infinite_alphas_leave_plain_reinforce(self, small_setup) -> None:
        """Without KL weights the loss is the score surrogate alone."""
        policy, latents = small_setup
        cfg = ReinforceConfig(alpha_d=math.inf, alpha_r=math.inf, horizon_cutoff=1)
        trajs = [_trajectory([1.0, 0.5], cell=(0, 1)), _trajectory([0.2, 0.1], cell=(1, 0), seed=1)]
        advantages = [np.array([1.0, -1.0]), np.array([0.5, 0.5])]
        loss = reinforce_loss(Tape(), trajs, advantages, policy, latents, cfg, 2)
        expected = 0.0
        for traj, advantage in zip(trajs, advantages):
            latent = latents.latent_values(np.full(2, traj.i), np.full(2, traj.j), np.array(traj.z_noise),
                                           np.array(traj.g_noise))
            log_probs = policy.log_prob_value(np.array(traj.states), latent, np.array(traj.actions))
            expected -= float(np.sum(advantage * log_probs)) / 2
        assert loss.item() == pytest.approx(expected)

    def test_kl_gradient_matches_finite_differences(self, small_setup) -> None:
        """The embedding gradient of the KL portion passes a finite-difference check."""
        _, latents = small_setup

        def loss(tape: Tape):
            kl_z, kl_g = latents.kl_terms(tape, [(0, 0), (1, 1), (0, 1)])
            return kl_z * (95.0 / 50.0) + kl_g * (95.0 / 10.0)

        assert gradient_check(loss, latents.parameter_vectors()) < 1e-4

    def test_full_loss_gradient(self, small_setup) -> None:
        """Policy and embedding gradients of the whole loss pass a finite-difference check."""
        policy, latents = small_setup
        cfg = ReinforceConfig(alpha_d=3.0, alpha_r=2.0, horizon_cutoff=1)
        trajs = [_trajectory([1.0, 0.5, 0.2], cell=(1, 0)), _trajectory([0.3, 0.0, 1.0], cell=(0, 1), seed=2)]
        advantages = [np.array([1.0, -0.5, 0.2]), np.array([-1.0, 0.3, 0.4])]

        def loss(tape: Tape):
            return reinforce_loss(tape, trajs, advantages, policy, latents, cfg, 3)

        assert gradient_check(loss, [policy.params] + latents.parameter_vectors()) < 1e-4


class TestScoreFunction:
    """Test the score-function estimator on a two-armed bandit."""

    def test_unbiased(self) -> None:
        """The averaged score gradient matches the exact policy gradient within 4 standard errors."""
        rng = np.random.default_rng(11)
        latents = TaskLatents.create(EmbeddingMode.NONE, (1, 1), 0, 0, rng)
        policy = LatentPolicy.build(1, 0, 1, 2, 2, 1, Activation.TANH, PolicyInput.CONCAT, rng)
        payouts = np.array([1.0, 0.3])
        params = policy.params

        def score(action: int) -> np.ndarray:
            params.zero_grad()
            tape = Tape(trainable=[params])
            tape.backward(policy.log_prob(tape, np.ones((1, 1)), np.zeros((1, 0)), np.array([action]))[0])
            grad = params.grads.copy()
            params.zero_grad()
            return grad

        tape = Tape(trainable=[params])
        log_probs = policy.log_prob(tape, np.ones((2, 1)), np.zeros((2, 0)), np.array([0, 1]))
        tape.backward(ad.sum(ad.exp(log_probs) * payouts))
        exact = params.grads.copy()
        params.zero_grad()

        count = 100000
        probs = np.exp(policy.log_prob_value(np.ones((2, 1)), np.zeros((2, 0)), np.array([0, 1])))
        actions = (rng.random(count) < probs[1]).astype(np.int64)
        batch = StepBatch(np.zeros(count, dtype=int), np.zeros(count, dtype=int), np.ones((count, 1)), actions,
                          np.zeros((count, 0)), np.zeros((count, 0)), payouts[actions] / count)
        tape = Tape(trainable=[params])
        tape.backward(score_surrogate(tape, policy, latents, batch))
        estimate = -params.grads.copy()
        params.zero_grad()

        per_arm = np.array([payouts[a] * score(a) for a in (0, 1)])
        samples = per_arm[actions]
        error = samples.std(axis=0) / np.sqrt(count)
        assert np.all(np.abs(estimate - exact) <= 4.0 * error + 1e-10)


class TestTrainIteration:
    """Test full collect-and-update iterations."""

    def test_grid_batch_size_and_metrics(self) -> None:
        """A 3x3 grid with M=4 collects 36 episodes and reports every cell."""
        grid = build_task_grid("cartpole3x3")
        cfg = ReinforceConfig(hidden_width=4, horizon_cutoff=1)
        envs = {cell: grid.make_env(*cell, max_steps=6) for cell in grid.trained_cells()}
        state = build_reinforce_state(cfg, envs, grid.shape, SeedSequencer(0))
        metrics = train_iteration(state)
        assert metrics.episodes == 36
        assert sorted(metrics.returns) == grid.trained_cells()
        assert state.iteration == 1
        assert all(count == 4 for count in state.episode_counts.values())

    def test_deterministic(self) -> None:
        """Same seed, same metrics and parameters."""
        grid = build_task_grid("cartpole3x3", "four-five")
        cfg = ReinforceConfig(hidden_width=4, horizon_cutoff=1, episodes_per_task=2)
        runs = []
        for _ in range(2):
            envs = {cell: grid.make_env(*cell, max_steps=8) for cell in grid.trained_cells()}
            state = build_reinforce_state(cfg, envs, grid.shape, SeedSequencer(5))
            history = [train_iteration(state).returns for _ in range(2)]
            runs.append((history, state.policy.params.values.copy()))
        assert runs[0][0] == runs[1][0]
        np.testing.assert_array_equal(runs[0][1], runs[1][1])

    def test_bandit_converges_to_best_arm(self) -> None:
        """A single-task bandit learns the higher-paying arm."""
        cfg = ReinforceConfig(embedding_mode=EmbeddingMode.NONE, episodes_per_task=16, policy_learning_rate=0.05,
                              hidden_width=4, policy_input=PolicyInput.CONCAT, cutoff_terminated=False)
        state = build_reinforce_state(cfg, {(0, 0): BanditEnv([0.2, 1.0])}, (1, 1), SeedSequencer(3))
        for _ in range(300):
            train_iteration(state)
        probs = np.exp(state.policy.log_prob_value(np.ones((2, 1)), np.zeros((2, 0)), np.array([0, 1])))
        assert probs[1] > 0.9

    def test_out_of_grid_cell_rejected(self) -> None:
        """Cells must lie inside the declared shape."""
        with pytest.raises(ConfigurationError):
            build_reinforce_state(ReinforceConfig(), {(3, 0): BanditEnv([1.0])}, (3, 3), SeedSequencer(0))


class TestSingleEmbedding:
    """Test the joint-latent baseline configuration."""

    def test_cartpole_layout(self) -> None:
        """Nine joint rows of dimension 4 on the cart-pole grid."""
        grid = build_task_grid("cartpole3x3")
        cfg = single_embedding_mode(ReinforceConfig(hidden_width=4))
        envs = {cell: grid.make_env(*cell) for cell in grid.trained_cells()}
        state = build_reinforce_state(cfg, envs, grid.shape, SeedSequencer(0))
        assert state.latents.z.index_count == 9
        assert state.latents.latent_dim == 4
        assert state.latents.g is None

    def test_policy_input_dimension(self) -> None:
        """Concat-outer features have s + L + s L inputs."""
        assert policy_input_dim(4, 4, PolicyInput.CONCAT_OUTER) == 4 + 4 + 16
        assert policy_input_dim(4, 4, PolicyInput.CONCAT) == 8
