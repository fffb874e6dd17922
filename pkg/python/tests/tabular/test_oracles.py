"""Tests for exact tabular evaluation and optimization."""

import math

import numpy as np
import pytest

from skillembed.errors import ConfigurationError
from skillembed.tabular import (TabularTaskMdp, TabularTemperatures, coordinate_ascent, embedding_scores, evaluate,
                                fit_embedding_by_gradient, index_posterior, monte_carlo_objective, objective,
                                optimal_embeddings, optimal_policy, q_values, tilted_embedding, visitation)

INFINITE = TabularTemperatures(math.inf, math.inf, math.inf)


def _single_state(rewards, gamma: float = 0.5, z_count: int = 1, action_prior=None) -> TabularTaskMdp:
    rewards = np.asarray(rewards, dtype=float).reshape(1, 1, -1)
    actions = rewards.shape[-1]
    return TabularTaskMdp(np.ones((1, 1, actions, 1)), rewards, np.ones(1), gamma,
                          np.full(z_count, 1.0 / z_count), np.ones(1), action_prior=action_prior)


def _ring_mdp() -> TabularTaskMdp:
    """Two rotations of a 3-state ring; moves ignore the action so visitation stays uniform."""
    transitions = np.zeros((2, 3, 2, 3))
    for s in range(3):
        transitions[0, s, :, (s + 1) % 3] = 1.0
        transitions[1, s, :, (s - 1) % 3] = 1.0
    rewards = np.random.default_rng(0).normal(size=(2, 3, 2))
    uniform = np.full(3, 1.0 / 3.0)
    return TabularTaskMdp(transitions, rewards, uniform, 0.9, uniform, uniform)


def _random_tables(mdp: TabularTaskMdp, seed: int):
    rng = np.random.default_rng(seed)
    policy = rng.dirichlet(np.ones(mdp.n_actions), size=(mdp.n_states, mdp.z_count, mdp.g_count))
    return (policy, rng.dirichlet(np.ones(mdp.z_count), size=mdp.n_dynamics),
            rng.dirichlet(np.ones(mdp.g_count), size=mdp.n_goals))


class TestTabularTaskMdp:
    """Test construction and validation."""

    def test_random_shapes(self) -> None:
        """The random factory builds a 2x2 grid of 3-state 2-action tasks."""
        mdp = TabularTaskMdp.random(np.random.default_rng(0))
        assert (mdp.n_dynamics, mdp.n_goals, mdp.n_states, mdp.n_actions) == (2, 2, 3, 2)
        assert (mdp.z_count, mdp.g_count) == (3, 3)

    def test_rejects_non_stochastic_transitions(self) -> None:
        """Transition rows must sum to one."""
        with pytest.raises(ConfigurationError):
            TabularTaskMdp(np.full((1, 2, 1, 2), 0.7), np.zeros((1, 2, 1)), np.array([0.5, 0.5]), 0.9,
                           np.ones(1), np.ones(1))

    def test_rejects_undiscounted(self) -> None:
        """gamma must be below one."""
        with pytest.raises(ConfigurationError):
            _single_state([1.0], gamma=1.0)

    def test_rejects_mismatched_rewards(self) -> None:
        """Rewards must cover every state and action."""
        with pytest.raises(ConfigurationError):
            TabularTaskMdp(np.ones((1, 1, 2, 1)), np.zeros((1, 1, 3)), np.ones(1), 0.9, np.ones(1), np.ones(1))

    def test_rejects_bad_policy_table(self) -> None:
        """Policy tables must match the grid and hold distributions."""
        mdp = _ring_mdp()
        _, q_z, q_g = _random_tables(mdp, 0)
        with pytest.raises(ConfigurationError):
            evaluate(mdp, np.full((3, 3, 3, 2), 0.7), q_z, q_g, INFINITE)


class TestEvaluate:
    """Test the value recursion fixed point."""

    def test_geometric_value(self) -> None:
        """Reward 1 forever with gamma 0.5 is worth 2."""
        values = evaluate(_single_state([1.0]), np.ones((1, 1, 1, 1)), np.ones((1, 1)), np.ones((1, 1)), INFINITE)
        assert values[0, 0, 0] == pytest.approx(2.0)

    def test_entropy_bonus(self) -> None:
        """Under the improper prior a uniform two-action policy earns log 2 per step."""
        mdp = _single_state([0.0, 0.0], gamma=0.9)
        policy = np.full((1, 1, 1, 2), 0.5)
        values = evaluate(mdp, policy, np.ones((1, 1)), np.ones((1, 1)), TabularTemperatures(alpha_pi=1.0))
        assert values[0, 0, 0] == pytest.approx(math.log(2.0) / 0.1)

    def test_embedding_penalty(self) -> None:
        """A point-mass embedding against a uniform 2-point prior pays log 2 / alpha_d per step."""
        mdp = _single_state([0.0], gamma=0.9, z_count=2)
        policy = np.ones((1, 2, 1, 1))
        alphas = TabularTemperatures(alpha_d=4.0)
        values = evaluate(mdp, policy, np.array([[1.0, 0.0]]), np.ones((1, 1)), alphas)
        assert values[0, 0, 0] == pytest.approx(-math.log(2.0) / 4.0 / 0.1)

    def test_unregularized_matches_linear_solve(self) -> None:
        """With every temperature infinite V solves (I - gamma P_pi) V = r_pi."""
        mdp = TabularTaskMdp.random(np.random.default_rng(1))
        policy, q_z, q_g = _random_tables(mdp, 2)
        values = evaluate(mdp, policy, q_z, q_g, INFINITE)
        marginal = np.einsum("iz,jg,szga->ijsa", q_z, q_g, policy)
        for i in range(2):
            for j in range(2):
                moves = np.einsum("sa,sat->st", marginal[i, j], mdp.transitions[i])
                reward = np.sum(marginal[i, j] * mdp.rewards[j], axis=-1)
                expected = np.linalg.solve(np.eye(3) - 0.9 * moves, reward)
                np.testing.assert_allclose(values[i, j], expected, atol=1e-9)

    def test_q_values_are_consistent(self) -> None:
        """Averaging Q under the policy recovers V when nothing is regularized."""
        mdp = TabularTaskMdp.random(np.random.default_rng(3))
        policy, q_z, q_g = _random_tables(mdp, 4)
        values = evaluate(mdp, policy, q_z, q_g, INFINITE)
        q_table = q_values(mdp, values)
        marginal = np.einsum("iz,jg,szga->ijsa", q_z, q_g, policy)
        np.testing.assert_allclose(np.sum(marginal * q_table, axis=-1), values, atol=1e-9)

    def test_matches_monte_carlo(self) -> None:
        """The fixed point agrees with sampled regularized returns within 3 standard errors."""
        mdp = TabularTaskMdp.random(np.random.default_rng(5))
        policy, q_z, q_g = _random_tables(mdp, 6)
        alphas = TabularTemperatures(alpha_d=2.0, alpha_r=3.0, alpha_pi=1.5)
        exact = objective(mdp, evaluate(mdp, policy, q_z, q_g, alphas))
        mean, stderr = monte_carlo_objective(mdp, policy, q_z, q_g, alphas, 100_000, np.random.default_rng(7))
        assert abs(mean - exact) < 3.0 * stderr

    def test_monte_carlo_needs_two_episodes(self) -> None:
        """A single episode has no standard error."""
        mdp = _ring_mdp()
        policy, q_z, q_g = _random_tables(mdp, 0)
        with pytest.raises(ConfigurationError):
            monte_carlo_objective(mdp, policy, q_z, q_g, INFINITE, 1, np.random.default_rng(0))


class TestVisitation:
    """Test the discounted state visitation."""

    def test_matches_power_series(self) -> None:
        """The linear solve equals (1 - gamma) sum_t gamma^t rho_t."""
        mdp = TabularTaskMdp.random(np.random.default_rng(8))
        policy, q_z, q_g = _random_tables(mdp, 9)
        dist = visitation(mdp, policy, q_z, q_g)
        marginal = np.einsum("iz,jg,szga->ijsa", q_z, q_g, policy)
        moves = np.einsum("sa,sat->st", marginal[1, 0], mdp.transitions[1])
        rho, total = mdp.initial.copy(), np.zeros(3)
        for t in range(400):
            total += (1.0 - 0.9) * 0.9 ** t * rho
            rho = rho @ moves
        np.testing.assert_allclose(dist[1, 0], total, atol=1e-10)
        np.testing.assert_allclose(dist.sum(axis=-1), 1.0)


class TestOptimalPolicy:
    """Test the posterior-mixed softmax policy."""

    def test_two_action_softmax(self) -> None:
        """Q = [1, 0] with alpha_pi 1 gives [0.731, 0.269]."""
        mdp = _single_state([0.0, 0.0])
        policy = optimal_policy(mdp, np.array([1.0, 0.0]).reshape(1, 1, 1, 2), np.ones((1, 1)), np.ones((1, 1)), 1.0)
        np.testing.assert_allclose(policy[0, 0, 0], [0.7310585786, 0.2689414214], atol=1e-9)

    def test_greedy_limit(self) -> None:
        """An infinite alpha_pi picks the best action."""
        mdp = _single_state([0.0, 0.0])
        policy = optimal_policy(mdp, np.array([0.2, 0.9]).reshape(1, 1, 1, 2), np.ones((1, 1)), np.ones((1, 1)),
                                math.inf)
        np.testing.assert_array_equal(policy[0, 0, 0], [0.0, 1.0])

    def test_index_posterior(self) -> None:
        """A uniform index prior turns columns of q into normalized posteriors."""
        post = index_posterior(np.array([0.5, 0.5]), np.array([[0.5, 0.5], [0.25, 0.75]]))
        np.testing.assert_allclose(post[0], [2.0 / 3.0, 1.0 / 3.0])
        np.testing.assert_allclose(post[1], [0.4, 0.6])

    def test_unreachable_latent_uses_prior(self) -> None:
        """A latent no index emits falls back to the index prior."""
        post = index_posterior(np.array([0.3, 0.7]), np.array([[1.0, 0.0], [1.0, 0.0]]))
        np.testing.assert_allclose(post[1], [0.3, 0.7])

    def test_peaked_posterior_selects_task(self) -> None:
        """When each latent identifies its dynamics index the policy follows that task's Q."""
        mdp = TabularTaskMdp(np.ones((2, 1, 2, 1)), np.zeros((1, 1, 2)), np.ones(1), 0.5,
                             np.array([0.5, 0.5]), np.ones(1))
        q_table = np.array([[[[3.0, 0.0]]], [[[0.0, 3.0]]]])
        policy = optimal_policy(mdp, q_table, np.eye(2), np.ones((1, 1)), 1.0)
        assert policy[0, 0, 0, 0] > 0.9
        assert policy[0, 1, 0, 1] > 0.9


class TestOptimalEmbeddings:
    """Test the tilted-prior embedding updates."""

    def test_constant_scores_give_prior(self) -> None:
        """Scores that do not depend on the latent leave the prior unchanged."""
        prior = np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(tilted_embedding(prior, np.full(3, 1.7), 5.0)[0], prior)

    def test_latent_blind_policy_keeps_prior(self) -> None:
        """A policy that ignores the latents makes every latent equally good."""
        mdp = TabularTaskMdp.random(np.random.default_rng(10))
        _, q_z, q_g = _random_tables(mdp, 11)
        q_z_new, q_g_new = optimal_embeddings(mdp, mdp.uniform_policy(), q_z, q_g, TabularTemperatures(2.0, 2.0, 1.0))
        np.testing.assert_allclose(q_z_new, np.tile(mdp.z_prior, (2, 1)), atol=1e-9)
        np.testing.assert_allclose(q_g_new, np.tile(mdp.g_prior, (2, 1)), atol=1e-9)

    def test_gradient_fit_matches_closed_form(self) -> None:
        """Descending the embedding loss reaches p exp(alpha D) / Z within 1e-3 total variation."""
        mdp = _ring_mdp()
        policy, q_z, q_g = _random_tables(mdp, 12)
        scores_z, scores_g = embedding_scores(mdp, policy, q_z, q_g, TabularTemperatures(1.0, 1.0, 1.5))
        for prior, scores in ((mdp.z_prior, scores_z[0]), (mdp.g_prior, scores_g[1])):
            closed = tilted_embedding(prior, scores, 1.0)[0]
            fitted = fit_embedding_by_gradient(prior, scores, 1.0, steps=5000, learning_rate=1.0)
            assert 0.5 * np.sum(np.abs(fitted - closed)) < 1e-3

    @pytest.mark.parametrize("alpha", [math.inf, -1.0])
    def test_gradient_fit_rejects_alpha(self, alpha: float) -> None:
        """The gradient fit needs a finite non-negative alpha."""
        with pytest.raises(ConfigurationError):
            fit_embedding_by_gradient(np.ones(2) / 2.0, np.zeros(2), alpha)


class TestCoordinateAscent:
    """Test alternating exact updates."""

    def test_objective_never_decreases(self) -> None:
        """Every policy and embedding update keeps or raises the objective."""
        mdp = _ring_mdp()
        policy, q_z, q_g = _random_tables(mdp, 13)
        result = coordinate_ascent(mdp, TabularTemperatures(2.0, 3.0, 1.5), 6, policy, q_z, q_g)
        assert len(result.objectives) == 1 + 3 * 6
        assert np.all(np.diff(result.objectives) >= -1e-9)
        assert result.objectives[-1] > result.objectives[0]

    def test_soft_policy_iteration(self) -> None:
        """On a single task exact policy updates alone never lower the objective."""
        mdp = TabularTaskMdp.random(np.random.default_rng(14), n_dynamics=1, n_goals=1)
        q_z, q_g = mdp.prior_embeddings()
        policy = mdp.uniform_policy()
        alphas = TabularTemperatures(2.0, 2.0, 1.0)
        previous = objective(mdp, evaluate(mdp, policy, q_z, q_g, alphas))
        for _ in range(10):
            policy = optimal_policy(mdp, q_values(mdp, evaluate(mdp, policy, q_z, q_g, alphas)), q_z, q_g, 1.0)
            current = objective(mdp, evaluate(mdp, policy, q_z, q_g, alphas))
            assert current >= previous - 1e-9
            previous = current
