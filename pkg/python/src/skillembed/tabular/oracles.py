"""Exact evaluation and optimization on tabular task grids.

Everything here works on whole tables: ``V[i, j, s]``, ``Q[i, j, s, a]``,
policy tables ``pi[s, z, g, a]`` and embedding tables ``q_z[i, z]`` and
``q_g[j, g]``. These are the reference values the sampled learners are
checked against.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..errors import ConfigurationError, DivergenceError
from ..numeric import autodiff as ad
from ..numeric.autodiff import ParamVector, Tape
from ..numeric.heads import sample_categorical, softmax
from ..numeric.optim import OptimizerKind, OptimizerState, optimizer_step
from .mdp import TabularTaskMdp, TabularTemperatures

logger = logging.getLogger(__name__)


def _weighted_log_ratio(p: np.ndarray, log_q: np.ndarray) -> np.ndarray:
    """``p * (log p - log_q)`` with ``0 log 0 = 0``."""
    safe = np.where(p > 0.0, p, 1.0)
    return np.where(p > 0.0, p * (np.log(safe) - log_q), 0.0)


def embedding_kl(q: np.ndarray, prior: np.ndarray) -> np.ndarray:
    """KL of every row of ``q`` to ``prior``."""
    return np.sum(_weighted_log_ratio(q, np.log(prior)), axis=-1)


def policy_penalty(mdp: TabularTaskMdp, policy: np.ndarray) -> np.ndarray:
    """``sum_a pi log(pi / p)`` for every ``(s, z, g)``."""
    return np.sum(_weighted_log_ratio(policy, mdp.log_action_prior), axis=-1)


def task_policy(policy: np.ndarray, q_z: np.ndarray, q_g: np.ndarray) -> np.ndarray:
    """Action marginals ``pi_ij(a | s)`` after integrating out both latents."""
    return np.einsum("iz,jg,szga->ijsa", q_z, q_g, policy)


def _recursion_terms(mdp: TabularTaskMdp, policy: np.ndarray, q_z: np.ndarray, q_g: np.ndarray,
                     alphas: TabularTemperatures) -> Tuple[np.ndarray, np.ndarray]:
    mdp.check_tables(policy, q_z, q_g)
    marginal = task_policy(policy, q_z, q_g)
    reward = np.einsum("ijsa,jsa->ijs", marginal, mdp.rewards)
    penalty = np.einsum("iz,jg,szg->ijs", q_z, q_g, policy_penalty(mdp, policy))
    kl_z = embedding_kl(q_z, mdp.z_prior)
    kl_g = embedding_kl(q_g, mdp.g_prior)
    immediate = (reward - alphas.inverse_pi * penalty
                 - alphas.inverse_d * kl_z[:, None, None] - alphas.inverse_r * kl_g[None, :, None])
    moves = np.einsum("ijsa,isat->ijst", marginal, mdp.transitions)
    return immediate, moves


def evaluate(mdp: TabularTaskMdp, policy: np.ndarray, q_z: np.ndarray, q_g: np.ndarray, alphas: TabularTemperatures,
             tolerance: float = 1e-12, max_iterations: int = 100_000) -> np.ndarray:
    """Iterates the regularized value recursion to its fixed point ``V[i, j, s]``.

    Args:
        mdp: The task grid.
        policy: ``pi[s, z, g, a]``.
        q_z: ``q_z[i, z]``, one distribution per dynamics index.
        q_g: ``q_g[j, g]``, one distribution per goal index.
        alphas: Regularization temperatures.
        tolerance: Stop once no value moves by more than this.
        max_iterations: Sweep limit.

    Returns:
        ``V[i, j, s]``.

    Raises:
        DivergenceError: If values turn non-finite or the sweep limit is hit.
    """
    immediate, moves = _recursion_terms(mdp, policy, q_z, q_g, alphas)
    values = np.zeros_like(immediate)
    for iteration in range(max_iterations):
        updated = immediate + mdp.gamma * np.einsum("ijst,ijt->ijs", moves, values)
        gap = np.max(np.abs(updated - values))
        values = updated
        if not np.isfinite(gap):
            raise DivergenceError("value recursion produced non-finite values")
        if gap < tolerance:
            logger.debug("value recursion converged after %d sweeps", iteration + 1)
            return values
    raise DivergenceError(f"value recursion did not converge within {max_iterations} sweeps")


def q_values(mdp: TabularTaskMdp, values: np.ndarray) -> np.ndarray:
    """``Q[i, j, s, a] = r_j(s, a) + gamma sum_s' P_i(s' | s, a) V[i, j, s']``."""
    future = np.einsum("isat,ijt->ijsa", mdp.transitions, values)
    return mdp.rewards[None, :, :, :] + mdp.gamma * future


def objective(mdp: TabularTaskMdp, values: np.ndarray) -> float:
    """The regularized objective averaged over task indices and start states."""
    return float(np.einsum("i,j,s,ijs->", mdp.dynamics_prior, mdp.goal_prior, mdp.initial, values))


def monte_carlo_objective(mdp: TabularTaskMdp, policy: np.ndarray, q_z: np.ndarray, q_g: np.ndarray,
                          alphas: TabularTemperatures, episodes: int, rng: np.random.Generator,
                          horizon: int = 0) -> Tuple[float, float]:
    """Mean and standard error of sampled discounted regularized returns.

    Every episode draws ``i``, ``j`` and ``s0`` from their priors and fresh
    latents at every step. ``horizon`` of 0 truncates once ``gamma^t`` drops
    below 1e-10.
    """
    mdp.check_tables(policy, q_z, q_g)
    if episodes < 2:
        raise ConfigurationError(f"need at least two episodes for a standard error, got {episodes}")
    if horizon <= 0:
        horizon = 1 if mdp.gamma == 0.0 else int(math.ceil(math.log(1e-10) / math.log(mdp.gamma)))
    rows = rng.choice(mdp.n_dynamics, size=episodes, p=mdp.dynamics_prior)
    cols = rng.choice(mdp.n_goals, size=episodes, p=mdp.goal_prior)
    states = rng.choice(mdp.n_states, size=episodes, p=mdp.initial)
    log_z_prior, log_g_prior, log_action_prior = np.log(mdp.z_prior), np.log(mdp.g_prior), mdp.log_action_prior
    totals = np.zeros(episodes)
    discount = 1.0
    for _ in range(horizon):
        z = sample_categorical(q_z[rows], rng.random(episodes))
        g = sample_categorical(q_g[cols], rng.random(episodes))
        probs = policy[states, z, g]
        actions = sample_categorical(probs, rng.random(episodes))
        picked = probs[np.arange(episodes), actions]
        step = (mdp.rewards[cols, states, actions]
                - alphas.inverse_d * (np.log(q_z[rows, z]) - log_z_prior[z])
                - alphas.inverse_r * (np.log(q_g[cols, g]) - log_g_prior[g])
                - alphas.inverse_pi * (np.log(picked) - log_action_prior[actions]))
        totals += discount * step
        discount *= mdp.gamma
        states = sample_categorical(mdp.transitions[rows, states, actions], rng.random(episodes))
    return float(np.mean(totals)), float(np.std(totals, ddof=1) / math.sqrt(episodes))


def index_posterior(index_prior: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``post[k, i] = p(i) q(k | i) / sum_i p(i) q(k | i)``; latents no index emits fall back to the prior."""
    joint = index_prior[:, None] * q
    total = joint.sum(axis=0)
    safe = np.where(total > 0.0, total, 1.0)
    return np.where(total[:, None] > 0.0, (joint / safe).T, index_prior[None, :])


def optimal_policy(mdp: TabularTaskMdp, q_table: np.ndarray, q_z: np.ndarray, q_g: np.ndarray,
                   alpha_pi: float) -> np.ndarray:
    """``pi(a | s, z, g) proportional to p(a) exp(alpha_pi Qbar(s, a, z, g))``.

    ``Qbar`` mixes the per-task Q tables with the Bayesian posteriors over
    both indices. An infinite ``alpha_pi`` gives the greedy policy.

    Args:
        mdp: The task grid.
        q_table: ``Q[i, j, s, a]`` from ``q_values``.
        q_z: Dynamics embedding table.
        q_g: Goal embedding table.
        alpha_pi: Policy temperature.

    Returns:
        ``pi[s, z, g, a]``.
    """
    post_i = index_posterior(mdp.dynamics_prior, q_z)
    post_j = index_posterior(mdp.goal_prior, q_g)
    mixed = np.einsum("zi,gj,ijsa->szga", post_i, post_j, q_table)
    if math.isinf(alpha_pi):
        return np.eye(mdp.n_actions)[np.argmax(mixed, axis=-1)]
    return softmax(alpha_pi * mixed + mdp.log_action_prior)


def visitation(mdp: TabularTaskMdp, policy: np.ndarray, q_z: np.ndarray, q_g: np.ndarray) -> np.ndarray:
    """Normalized discounted state visitation ``d[i, j, s]``, summing to 1 over ``s``."""
    mdp.check_tables(policy, q_z, q_g)
    moves = np.einsum("ijsa,isat->ijst", task_policy(policy, q_z, q_g), mdp.transitions)
    eye = np.eye(mdp.n_states)
    out = np.empty(moves.shape[:3])
    for i in range(mdp.n_dynamics):
        for j in range(mdp.n_goals):
            out[i, j] = np.linalg.solve((eye - mdp.gamma * moves[i, j]).T, (1.0 - mdp.gamma) * mdp.initial)
    return out


def embedding_scores(mdp: TabularTaskMdp, policy: np.ndarray, q_z: np.ndarray, q_g: np.ndarray,
                     alphas: TabularTemperatures) -> Tuple[np.ndarray, np.ndarray]:
    """Value of committing to each latent: ``D[i, z]`` and ``G[j, g]``.

    Both average ``Q - log(pi / p) / alpha_pi`` over actions drawn with the
    latent held fixed, states from the task's discounted visitation and the
    partner index and latent from their priors and embeddings.
    """
    q_table = q_values(mdp, evaluate(mdp, policy, q_z, q_g, alphas))
    states = visitation(mdp, policy, q_z, q_g)
    kappa = (np.einsum("szga,ijsa->ijszg", policy, q_table)
             - alphas.inverse_pi * policy_penalty(mdp, policy)[None, None])
    weighted = kappa * states[:, :, :, None, None]
    scores_z = np.einsum("j,jg,ijszg->iz", mdp.goal_prior, q_g, weighted)
    scores_g = np.einsum("i,iz,ijszg->jg", mdp.dynamics_prior, q_z, weighted)
    return scores_z, scores_g


def tilted_embedding(prior: np.ndarray, scores: np.ndarray, alpha: float) -> np.ndarray:
    """``q proportional to p exp(alpha scores)`` row by row; ``alpha = inf`` picks the best latent."""
    scores = np.atleast_2d(scores)
    if math.isinf(alpha):
        return np.eye(prior.size)[np.argmax(scores, axis=-1)]
    return softmax(np.log(prior)[None, :] + alpha * scores)


def optimal_embeddings(mdp: TabularTaskMdp, policy: np.ndarray, q_z: np.ndarray, q_g: np.ndarray,
                       alphas: TabularTemperatures) -> Tuple[np.ndarray, np.ndarray]:
    """Tilted-prior update of ``q_z``, then of ``q_g`` scored against the new ``q_z``."""
    scores_z, _ = embedding_scores(mdp, policy, q_z, q_g, alphas)
    q_z = tilted_embedding(mdp.z_prior, scores_z, alphas.alpha_d)
    _, scores_g = embedding_scores(mdp, policy, q_z, q_g, alphas)
    return q_z, tilted_embedding(mdp.g_prior, scores_g, alphas.alpha_r)


@dataclass
class AscentResult:
    """Final tables of a coordinate ascent and its objective trace."""

    policy: np.ndarray
    q_z: np.ndarray
    q_g: np.ndarray
    objectives: List[float] = field(default_factory=list)


def coordinate_ascent(mdp: TabularTaskMdp, alphas: TabularTemperatures, rounds: int,
                      policy: Optional[np.ndarray] = None, q_z: Optional[np.ndarray] = None,
                      q_g: Optional[np.ndarray] = None) -> AscentResult:
    """Alternates policy, ``q_z`` and ``q_g`` updates with exact re-evaluation.

    ``objectives`` starts with the initial objective and gains one entry after
    every single update.

    Args:
        mdp: The task grid.
        alphas: Regularization temperatures.
        rounds: Number of policy, ``q_z``, ``q_g`` cycles.
        policy: Starting policy; uniform when None.
        q_z: Starting dynamics embedding.
        q_g: Starting goal embedding; both start at the prior unless both are given.

    Returns:
        The final tables and the objective after every update.
    """
    if policy is None:
        policy = mdp.uniform_policy()
    if q_z is None or q_g is None:
        q_z, q_g = mdp.prior_embeddings()

    def score() -> float:
        return objective(mdp, evaluate(mdp, policy, q_z, q_g, alphas))

    result = AscentResult(policy, q_z, q_g, [score()])
    for _ in range(rounds):
        policy = optimal_policy(mdp, q_values(mdp, evaluate(mdp, policy, q_z, q_g, alphas)), q_z, q_g,
                                alphas.alpha_pi)
        result.objectives.append(score())
        scores_z, _ = embedding_scores(mdp, policy, q_z, q_g, alphas)
        q_z = tilted_embedding(mdp.z_prior, scores_z, alphas.alpha_d)
        result.objectives.append(score())
        _, scores_g = embedding_scores(mdp, policy, q_z, q_g, alphas)
        q_g = tilted_embedding(mdp.g_prior, scores_g, alphas.alpha_r)
        result.objectives.append(score())
    result.policy, result.q_z, result.q_g = policy, q_z, q_g
    return result


def fit_embedding_by_gradient(prior: np.ndarray, scores: np.ndarray, alpha: float, steps: int = 2000,
                              learning_rate: float = 0.5, kind: OptimizerKind = OptimizerKind.SGD) -> np.ndarray:
    """Minimizes ``E_q[log q/p - alpha scores]`` over softmax logits and returns ``q``."""
    if not 0.0 <= alpha < math.inf:
        raise ConfigurationError(f"alpha must be finite and non-negative, got {alpha}")
    prior = np.asarray(prior, dtype=np.float64)
    target = np.log(prior) + alpha * np.asarray(scores, dtype=np.float64)
    logits = ParamVector([(1, prior.size)], name="logits")
    optimizer = OptimizerState(kind=kind)
    for _ in range(steps):
        tape = Tape()
        flat = tape.param(logits)
        log_q = flat - ad.logsumexp(flat)
        loss = ad.sum(ad.exp(log_q) * (log_q - target))
        tape.backward(loss)
        optimizer_step(logits, learning_rate, optimizer)
    return softmax(logits.values)
