"""On-policy multi-task training of the shared policy and task embeddings.

Each iteration collects ``episodes_per_task`` trajectories for every trained
cell, standardizes the regularized returns per task and takes one gradient
step on the embedding rows followed by one on the policy, all from the same
batch.
"""

import copy
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..embeddings.latents import EmbeddingMode, TaskLatents
from ..envs.base import Environment
from ..envs.trajectory import Cell, Trajectory
from ..errors import ConfigurationError, DivergenceError, UsageError
from ..numeric import autodiff as ad
from ..numeric.autodiff import Node, Tape
from ..numeric.mlp import Activation
from ..numeric.optim import OptimizerKind, OptimizerState, optimizer_step
from ..policy import LatentPolicy, PolicyInput
from ..rollout import EpisodeJob, collect_episodes
from ..seeding import SeedSequencer
from .popart import PopArtState, popart_normalize

logger = logging.getLogger(__name__)


@dataclass
class ReinforceConfig:
    """Hyperparameters of on-policy multi-task training.

    Attributes:
        gamma: Discount factor.
        alpha_d: Temperature of the dynamics embedding KL; ``inf`` drops it.
        alpha_r: Temperature of the goal embedding KL; ``inf`` drops it.
        alpha_pi: Entropy temperature; ``inf`` leaves plain rewards.
        episodes_per_task: Episodes collected per trained cell and iteration.
        pop_art_beta: Step size of the return moments.
        horizon_cutoff: Steps ``H`` dropped from each trajectory's tail; 0 means ``1 / (1 - gamma)``.
        cutoff_terminated: Apply the cutoff to terminated episodes as well as truncated ones.
        per_episode_latents: Draw latent noise once per episode instead of per step.
        max_episode_steps: Step limit override; 0 keeps the environment default.
    """

    gamma: float = 0.99
    alpha_d: float = 50000.0
    alpha_r: float = 1000.0
    alpha_pi: float = math.inf
    episodes_per_task: int = 4
    policy_learning_rate: float = 0.002
    embedding_learning_rate: float = 0.002
    pop_art_beta: float = 0.02
    dim_z: int = 2
    dim_g: int = 2
    hidden_width: int = 16
    hidden_layers: int = 1
    activation: Activation = Activation.TANH
    policy_input: PolicyInput = PolicyInput.CONCAT_OUTER
    embedding_mode: EmbeddingMode = EmbeddingMode.DISENTANGLED
    horizon_cutoff: int = 0
    cutoff_terminated: bool = True
    per_episode_latents: bool = False
    optimizer: OptimizerKind = OptimizerKind.ADAM
    max_episode_steps: int = 0

    def __post_init__(self):
        if self.episodes_per_task < 1:
            raise ConfigurationError(f"episodes_per_task must be at least 1, got {self.episodes_per_task}")
        for name in ("alpha_d", "alpha_r", "alpha_pi"):
            if not getattr(self, name) > 0.0:
                raise ConfigurationError(f"{name} must be positive or inf, got {getattr(self, name)}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.horizon_cutoff < 0:
            raise ConfigurationError(f"horizon_cutoff must be non-negative, got {self.horizon_cutoff}")

    @property
    def effective_cutoff(self) -> int:
        """``horizon_cutoff`` or, when 0, the effective horizon ``1 / (1 - gamma)``."""
        if self.horizon_cutoff:
            return self.horizon_cutoff
        if self.gamma >= 1.0:
            return 0
        return int(round(1.0 / (1.0 - self.gamma)))


def single_embedding_mode(cfg: ReinforceConfig) -> ReinforceConfig:
    """The same configuration with one joint latent per (i, j) of dim ``dim_z + dim_g``."""
    return dataclasses.replace(cfg, embedding_mode=EmbeddingMode.SINGLE)


def kl_horizon_weight(gamma: float, episode_steps: int) -> float:
    """The geometric sum ``(1 - gamma^(T-1)) / (1 - gamma)`` scaling the KL terms.

    Args:
        gamma: Discount factor.
        episode_steps: Episode length ``T``.

    Returns:
        The weight; ``T - 1`` when ``gamma`` is 1.

    Raises:
        UsageError: If ``episode_steps`` is not positive.
    """
    if episode_steps < 1:
        raise UsageError(f"episode length must be positive, got {episode_steps}")
    if gamma >= 1.0:
        return float(episode_steps - 1)
    return (1.0 - gamma ** (episode_steps - 1)) / (1.0 - gamma)


def discounted_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """Backward recursion ``G_t = r_t + gamma G_{t+1}``."""
    rewards = np.asarray(rewards, dtype=np.float64)
    returns = np.zeros_like(rewards)
    running = 0.0
    for t in range(rewards.size - 1, -1, -1):
        running = rewards[t] + gamma * running
        returns[t] = running
    return returns


def trajectory_latents(latents: TaskLatents, traj: Trajectory) -> np.ndarray:
    steps = len(traj)
    rows, cols = np.full(steps, traj.i), np.full(steps, traj.j)
    dim_z, dim_g = latents.noise_dims
    z_noise = np.array(traj.z_noise).reshape(steps, dim_z)
    g_noise = np.array(traj.g_noise).reshape(steps, dim_g)
    return latents.latent_values(rows, cols, z_noise, g_noise)


def regularized_returns(traj: Trajectory, policy: LatentPolicy, latents: TaskLatents,
                        cfg: ReinforceConfig) -> np.ndarray:
    """``R_t = r'_t + gamma R_{t+1}`` with ``r'_t = r_t - log pi(a_t | s_t, z_t, g_t) / alpha_pi``.

    Args:
        traj: A finished trajectory with its stored latent noise.
        policy: Policy scoring the entropy term, read only.
        latents: Embeddings rebuilding each step's latent.
        cfg: Supplies ``gamma`` and ``alpha_pi``.

    Returns:
        One return per step.
    """
    rewards = np.asarray(traj.rewards, dtype=np.float64)
    if math.isinf(cfg.alpha_pi) or not len(traj):
        return discounted_returns(rewards, cfg.gamma)
    log_probs = policy.log_prob_value(np.array(traj.states), trajectory_latents(latents, traj), np.array(traj.actions))
    return discounted_returns(rewards - log_probs / cfg.alpha_pi, cfg.gamma)


def usable_steps(traj: Trajectory, cfg: ReinforceConfig) -> int:
    """Number of leading steps ``t <= T - H`` that enter the gradient.

    Terminated trajectories are cut too unless ``cutoff_terminated`` is
    switched off, in which case they keep every step.

    Args:
        traj: A finished trajectory.
        cfg: Supplies the cutoff ``H`` and the terminated-episode switch.

    Returns:
        ``T - H + 1``, or 0 (with a warning) when ``T - H <= 0``.
    """
    steps = len(traj)
    if traj.terminated and not cfg.cutoff_terminated:
        return steps
    cutoff = cfg.effective_cutoff
    if cutoff == 0:
        return steps
    if steps - cutoff <= 0:
        logger.warning("skipping %d-step trajectory of cell %s: shorter than the %d-step cutoff",
                       steps, traj.cell, cutoff)
        return 0
    return steps - cutoff + 1


@dataclass
class StepBatch:
    """Flattened steps of several trajectories, with per-step score weights."""

    rows: np.ndarray
    cols: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    z_noise: np.ndarray
    g_noise: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return self.weights.size


def build_step_batch(trajectories: Sequence[Trajectory], advantages: Sequence[np.ndarray],
                     latents: TaskLatents, cfg: ReinforceConfig) -> StepBatch:
    """Keeps each trajectory's usable steps; weights are advantages over the trajectory count.

    Args:
        trajectories: The batch.
        advantages: One standardized return vector per trajectory.
        latents: Supplies the noise sizes.
        cfg: Supplies the cutoff.

    Returns:
        The flattened steps.

    Raises:
        UsageError: If the batch is empty or every trajectory falls under the cutoff.
    """
    if not trajectories:
        raise UsageError("reinforce loss needs at least one trajectory")
    dim_z, dim_g = latents.noise_dims
    parts: Dict[str, List[np.ndarray]] = {key: [] for key in ("rows", "cols", "states", "actions", "z", "g", "w")}
    for traj, advantage in zip(trajectories, advantages):
        keep = usable_steps(traj, cfg)
        if keep == 0:
            continue
        parts["rows"].append(np.full(keep, traj.i))
        parts["cols"].append(np.full(keep, traj.j))
        parts["states"].append(np.array(traj.states[:keep]))
        parts["actions"].append(np.array(traj.actions[:keep]))
        parts["z"].append(np.array(traj.z_noise[:keep]).reshape(keep, dim_z))
        parts["g"].append(np.array(traj.g_noise[:keep]).reshape(keep, dim_g))
        parts["w"].append(np.asarray(advantage, dtype=np.float64)[:keep] / len(trajectories))
    if not parts["w"]:
        raise UsageError("every trajectory in the batch is shorter than the horizon cutoff")
    return StepBatch(
        np.concatenate(parts["rows"]), np.concatenate(parts["cols"]), np.concatenate(parts["states"]),
        np.concatenate(parts["actions"]), np.concatenate(parts["z"]), np.concatenate(parts["g"]),
        np.concatenate(parts["w"]),
    )


def score_surrogate(tape: Tape, policy: LatentPolicy, latents: TaskLatents, batch: StepBatch) -> Node:
    """``-sum_t w_t log pi(a_t | s_t, latent_t)``; the weights are constants."""
    latent = latents.latent_nodes(tape, batch.rows, batch.cols, batch.z_noise, batch.g_noise)
    log_probs = policy.log_prob(tape, batch.states, latent, batch.actions)
    return -ad.sum(batch.weights * log_probs)


def reinforce_loss(tape: Tape, trajectories: Sequence[Trajectory], advantages: Sequence[np.ndarray],
                   policy: LatentPolicy, latents: TaskLatents, cfg: ReinforceConfig,
                   episode_steps: int) -> Node:
    """Score-function policy term plus the horizon-weighted embedding KLs.

    Args:
        tape: Tape holding the trainable policy and embedding rows.
        trajectories: The batch.
        advantages: One standardized return vector per trajectory.
        policy: Shared policy.
        latents: Task embeddings.
        cfg: Supplies temperatures and the cutoff.
        episode_steps: Episode length setting the KL weight.

    Returns:
        The scalar loss to minimize.
    """
    loss = score_surrogate(tape, policy, latents, build_step_batch(trajectories, advantages, latents, cfg))
    weight = kl_horizon_weight(cfg.gamma, episode_steps)
    alpha_z, alpha_g = latents.slot_alphas(cfg.alpha_d, cfg.alpha_r)
    kl_z, kl_g = latents.kl_terms(tape, sorted({traj.cell for traj in trajectories}))
    if kl_z is not None and not math.isinf(alpha_z):
        loss = loss + kl_z * (weight / alpha_z)
    if kl_g is not None and not math.isinf(alpha_g):
        loss = loss + kl_g * (weight / alpha_g)
    return loss


@dataclass
class IterationMetrics:
    """Per-cell mean return and KLs of one iteration."""

    iteration: int
    returns: Dict[Cell, float]
    kl_z: Dict[Cell, float]
    kl_g: Dict[Cell, float]
    loss: float
    episodes: int = 0


@dataclass
class ReinforceState:
    """Everything one on-policy run trains or resumes from.

    Attributes:
        envs: One environment per trained cell.
        policy: Shared latent-conditioned policy.
        latents: Task embeddings.
        popart: Per-cell return moments.
        train_policy: Step the policy; off when retraining embeddings only.
        train_embeddings: Step the embedding rows.
        episode_counts: Episodes collected so far per cell; keys the random streams.
        env_pool: Extra environment copies for concurrent episodes.
    """

    config: ReinforceConfig
    shape: Tuple[int, int]
    envs: Dict[Cell, Environment]
    policy: LatentPolicy
    latents: TaskLatents
    seeds: SeedSequencer
    popart: PopArtState
    policy_optimizer: OptimizerState
    embedding_optimizers: Dict[str, OptimizerState] = field(default_factory=dict)
    train_policy: bool = True
    train_embeddings: bool = True
    iteration: int = 0
    episode_counts: Dict[Cell, int] = field(default_factory=dict)
    stream: str = "reinforce"
    env_pool: Dict[Cell, List[Environment]] = field(default_factory=dict)

    @property
    def cells(self) -> List[Cell]:
        return sorted(self.envs)

    @property
    def episode_steps(self) -> int:
        return max(env.max_steps for env in self.envs.values())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iteration": self.iteration,
            "episode_counts": [[i, j, n] for (i, j), n in sorted(self.episode_counts.items())],
            "policy": self.policy.to_dict(),
            "latents": self.latents.to_dict(),
            "popart": self.popart.to_dict(),
            "policy_optimizer": self.policy_optimizer.to_dict(),
            "embedding_optimizers": {name: opt.to_dict() for name, opt in self.embedding_optimizers.items()},
        }

    def load_dict(self, data: Dict[str, Any]) -> None:
        """Restores training progress into a state built from the same configuration."""
        restored = TaskLatents.from_dict(data["latents"])
        if restored.mode is not self.latents.mode or restored.noise_dims != self.latents.noise_dims:
            raise ConfigurationError("checkpoint embeddings do not match the configured embedding layout")
        self.latents = restored
        self.policy.load_dict(data["policy"])
        self.iteration = int(data["iteration"])
        self.episode_counts = {(int(i), int(j)): int(n) for i, j, n in data["episode_counts"]}
        self.popart = PopArtState.from_dict(data["popart"])
        self.policy_optimizer = OptimizerState.from_dict(data["policy_optimizer"])
        self.embedding_optimizers = {
            name: OptimizerState.from_dict(opt) for name, opt in data["embedding_optimizers"].items()
        }


def build_policy(cfg: ReinforceConfig, env: Environment, latent_dim: int, rng: np.random.Generator) -> LatentPolicy:
    return LatentPolicy.build(env.observation_dim, latent_dim, env.action_dim, env.n_actions or 0,
                              cfg.hidden_width, cfg.hidden_layers, cfg.activation, cfg.policy_input, rng)


def build_reinforce_state(cfg: ReinforceConfig, envs: Mapping[Cell, Environment], shape: Tuple[int, int],
                          seeds: SeedSequencer, latents: Optional[TaskLatents] = None,
                          policy: Optional[LatentPolicy] = None) -> ReinforceState:
    """Fresh parameters unless ``latents`` or ``policy`` are passed in to continue from.

    Args:
        cfg: Hyperparameters.
        envs: One environment per trained cell.
        shape: Grid shape the embeddings are sized for.
        seeds: Seed source.
        latents: Embeddings to continue from.
        policy: Policy to continue from.

    Returns:
        A state at iteration 0.

    Raises:
        ConfigurationError: On no cells, out-of-grid cells or a latent size mismatch.
    """
    if not envs:
        raise ConfigurationError("no trained cells")
    for i, j in envs:
        if not (0 <= i < shape[0] and 0 <= j < shape[1]):
            raise ConfigurationError(f"cell ({i}, {j}) outside the {shape[0]}x{shape[1]} grid")
    first = next(iter(envs.values()))
    init_rng = seeds.rng("init")
    if latents is None:
        latents = TaskLatents.create(cfg.embedding_mode, shape, cfg.dim_z, cfg.dim_g, init_rng)
    if policy is None:
        policy = build_policy(cfg, first, latents.latent_dim, init_rng)
    if policy.latent_dim != latents.latent_dim:
        raise ConfigurationError(
            f"policy latent dim {policy.latent_dim} does not match embeddings {latents.latent_dim}")
    return ReinforceState(cfg, shape, dict(envs), policy, latents, seeds, PopArtState(beta=cfg.pop_art_beta),
                          OptimizerState(kind=cfg.optimizer))


def env_pool(state: ReinforceState, cell: Cell) -> List[Environment]:
    """One environment instance per concurrent episode of ``cell``."""
    pool = state.env_pool.setdefault(cell, [state.envs[cell]])
    while len(pool) < state.config.episodes_per_task:
        pool.append(copy.deepcopy(state.envs[cell]))
    return pool


def collect_iteration(state: ReinforceState) -> List[Trajectory]:
    """``episodes_per_task`` episodes per cell, each on its own (cell, episode) stream."""
    trajectories = []
    for cell in state.cells:
        start = state.episode_counts.get(cell, 0)
        jobs = [EpisodeJob(cell, env, state.seeds.rng(state.stream, cell[0], cell[1], start + m))
                for m, env in enumerate(env_pool(state, cell)[:state.config.episodes_per_task])]
        trajectories += collect_episodes(state.policy, state.latents, jobs, state.config.per_episode_latents)
        state.episode_counts[cell] = start + state.config.episodes_per_task
    return trajectories


def _step_embeddings(state: ReinforceState, cells: Sequence[Cell], lr: float) -> None:
    rows = [i for i, _ in cells]
    cols = [j for _, j in cells]
    z_index, g_index = state.latents.slot_indices(rows, cols)
    for emb, indices in ((state.latents.z, z_index), (state.latents.g, g_index)):
        if emb is None:
            continue
        for k in sorted(set(int(k) for k in indices)):
            row = emb.rows[k]
            opt = state.embedding_optimizers.setdefault(row.name, OptimizerState(kind=state.config.optimizer))
            optimizer_step(row, lr, opt)


def train_iteration(state: ReinforceState) -> IterationMetrics:
    """One collect-standardize-update round over every trained cell.

    Args:
        state: Training state, updated in place.

    Returns:
        The iteration's metrics.

    Raises:
        DivergenceError: If the loss is not finite.
    """
    cfg = state.config
    trajectories = collect_iteration(state)
    advantages = []
    by_cell: Dict[Cell, List[int]] = {}
    for k, traj in enumerate(trajectories):
        by_cell.setdefault(traj.cell, []).append(k)
    raw = [regularized_returns(traj, state.policy, state.latents, cfg) for traj in trajectories]
    advantages = list(raw)
    for cell, members in by_cell.items():
        normalized = popart_normalize(state.popart, np.concatenate([raw[k] for k in members]), cell)
        offsets = np.cumsum([raw[k].size for k in members])[:-1]
        for k, chunk in zip(members, np.split(normalized, offsets)):
            advantages[k] = chunk

    trainable = []
    if state.train_policy:
        trainable.append(state.policy.params)
    if state.train_embeddings:
        trainable += state.latents.parameter_vectors()
    tape = Tape(trainable=trainable)
    loss = reinforce_loss(tape, trajectories, advantages, state.policy, state.latents, cfg, state.episode_steps)
    if not np.isfinite(loss.item()):
        raise DivergenceError(f"non-finite reinforce loss at iteration {state.iteration}")
    if trainable:
        tape.backward(loss)
    if state.train_embeddings:
        _step_embeddings(state, state.cells, cfg.embedding_learning_rate)
    if state.train_policy:
        optimizer_step(state.policy.params, cfg.policy_learning_rate, state.policy_optimizer)

    kl_z, kl_g = state.latents.kl_summary()
    z_index, g_index = state.latents.slot_indices([i for i, _ in state.cells], [j for _, j in state.cells])
    metrics = IterationMetrics(
        iteration=state.iteration,
        returns={cell: float(np.mean([trajectories[k].total_reward for k in members]))
                 for cell, members in sorted(by_cell.items())},
        kl_z={cell: kl_z.get(int(zk), 0.0) for cell, zk in zip(state.cells, z_index)},
        kl_g={cell: kl_g.get(int(gk), 0.0) for cell, gk in zip(state.cells, g_index)},
        loss=loss.item(),
        episodes=len(trajectories),
    )
    logger.info("reinforce iteration %d: mean return %.4f over %d episodes, loss %.4f", state.iteration,
                float(np.mean(list(metrics.returns.values()))), len(trajectories), metrics.loss)
    state.iteration += 1
    return metrics
