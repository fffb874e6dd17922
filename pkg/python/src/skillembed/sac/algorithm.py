"""Off-policy multi-task training with per-task critics.

One iteration steps every trained cell's environment once and, for each cell
past its warm-up, updates that cell's critics and the embedding rows it
indexes. Then the shared policy takes one step on the loss averaged over
cells and every target value network is blended towards its value network.

The entropy and density-ratio terms carry ``1 / alpha`` temperatures
everywhere; ``alpha_pi = 1`` gives the unscaled policy loss.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..embeddings import variational as vi
from ..embeddings.latents import EmbeddingMode, TaskLatents
from ..envs.base import Environment
from ..envs.trajectory import Cell
from ..errors import ConfigurationError, DivergenceError
from ..numeric import autodiff as ad
from ..numeric.autodiff import Node, ParamVector, Tape
from ..numeric.mlp import Activation
from ..numeric.optim import OptimizerKind, OptimizerState, optimizer_step
from ..policy import LatentPolicy, PolicyInput
from ..seeding import SeedSequencer
from .critics import CriticSet, soft_update
from .replay import ReplayBatch, ReplayMemory

logger = logging.getLogger(__name__)


def _inverse(alpha: float) -> float:
    return 0.0 if math.isinf(alpha) else 1.0 / alpha


@dataclass
class SacConfig:
    """Hyperparameters of off-policy multi-task training.

    Attributes:
        gamma: Discount factor.
        alpha_pi: Entropy temperature; ``inf`` drops the entropy term.
        alpha_d: Temperature of the dynamics embedding density ratio.
        alpha_r: Temperature of the goal embedding density ratio.
        tau: Soft target update rate, in (0, 1].
        batch_size: Replay samples per update.
        buffer_size: Capacity of each per-cell replay memory.
        warmup_steps: Uniform-random steps per cell before updates start.
        per_episode_latents: Draw latent noise once per episode instead of per step.
        max_episode_steps: Step limit override; 0 keeps the environment default.
    """

    gamma: float = 0.99
    alpha_pi: float = 250.0
    alpha_d: float = 20.0
    alpha_r: float = 20.0
    tau: float = 0.01
    batch_size: int = 128
    policy_learning_rate: float = 0.003
    embedding_learning_rate: float = 0.0003
    q_learning_rate: float = 0.03
    v_learning_rate: float = 0.03
    buffer_size: int = 3_000_000
    warmup_steps: int = 1000
    dim_z: int = 2
    dim_g: int = 3
    policy_width: int = 50
    policy_layers: int = 2
    critic_width: int = 64
    critic_layers: int = 2
    activation: Activation = Activation.RELU
    policy_input: PolicyInput = PolicyInput.CONCAT
    embedding_mode: EmbeddingMode = EmbeddingMode.DISENTANGLED
    per_episode_latents: bool = False
    optimizer: OptimizerKind = OptimizerKind.ADAM
    max_episode_steps: int = 0

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ConfigurationError(f"tau must lie in (0, 1], got {self.tau}")
        for name in ("alpha_d", "alpha_r", "alpha_pi"):
            if not getattr(self, name) > 0.0:
                raise ConfigurationError(f"{name} must be positive or inf, got {getattr(self, name)}")
        if self.batch_size < 1 or self.buffer_size < 1:
            raise ConfigurationError("batch_size and buffer_size must be positive")
        if self.warmup_steps < 0:
            raise ConfigurationError(f"warmup_steps must be non-negative, got {self.warmup_steps}")


def q_loss(tape: Tape, critics: CriticSet, batch: ReplayBatch, gamma: float) -> Tuple[Node, Node]:
    """Squared error of each twin critic against ``r + gamma V_target(s')``.

    Args:
        tape: Tape holding the twin critics as trainable.
        critics: The cell's critics.
        batch: Replay transitions; terminal steps drop the bootstrap.
        gamma: Discount factor.

    Returns:
        The two mean squared errors, one per twin.
    """
    target = batch.rewards + gamma * np.where(batch.dones, 0.0, critics.target_value(batch.next_states))
    q1, q2 = critics.q_nodes(tape, batch.states, batch.actions)
    return ad.mean(ad.square(q1 - target)), ad.mean(ad.square(q2 - target))


def v_target(states: np.ndarray, cell: Cell, policy: LatentPolicy, latents: TaskLatents, critics: CriticSet,
             cfg: SacConfig, rng: np.random.Generator) -> np.ndarray:
    """Single-sample soft value: ``Q_min - log pi / a_pi - log(q_z/p) / a_z - log(q_g/p) / a_g``.

    Args:
        states: Replay states of ``cell``.
        cell: The ``(i, j)`` whose latents condition the policy.
        policy: Shared policy, read only.
        latents: Task embeddings, read only.
        critics: The cell's critics.
        cfg: Supplies the temperatures.
        rng: Draws latent and action noise.

    Returns:
        One regression target per state.
    """
    count = len(states)
    rows, cols = np.full(count, cell[0]), np.full(count, cell[1])
    z_noise, g_noise = latents.draw_noise(rng, count)
    latent = latents.latent_values(rows, cols, z_noise, g_noise)
    actions, log_probs = policy.act(states, latent, policy.action_noise(rng, count))
    ratio_z, ratio_g = latents.density_ratio_values(rows, cols, z_noise, g_noise)
    alpha_z, alpha_g = latents.slot_alphas(cfg.alpha_d, cfg.alpha_r)
    return (critics.q_min_value(states, actions) - log_probs * _inverse(cfg.alpha_pi)
            - ratio_z * _inverse(alpha_z) - ratio_g * _inverse(alpha_g))


def v_loss(tape: Tape, critics: CriticSet, states: np.ndarray, targets: np.ndarray) -> Node:
    """Mean squared error of the value network against fixed targets."""
    return ad.mean(ad.square(critics.value_node(tape, states) - targets))


def policy_loss(tape: Tape, policy: LatentPolicy, latents: TaskLatents, critics: Mapping[Cell, CriticSet],
                states: Mapping[Cell, np.ndarray], cfg: SacConfig, rng: np.random.Generator) -> Node:
    """Mean over cells of ``E[log pi / a_pi - Q_min]`` with latents and actions reparameterized.

    Args:
        tape: Tape holding the policy parameters as trainable.
        policy: Shared policy.
        latents: Task embeddings; their rows are sampled on the tape.
        critics: Critics by cell.
        states: Replay states by cell.
        cfg: Supplies ``alpha_pi``.
        rng: Draws latent and action noise.

    Returns:
        The scalar loss.

    Raises:
        ConfigurationError: If ``states`` is empty.
    """
    if not states:
        raise ConfigurationError("policy loss needs at least one cell")
    total = None
    for cell in sorted(states):
        batch = states[cell]
        count = len(batch)
        z_noise, g_noise = latents.draw_noise(rng, count)
        latent = latents.latent_nodes(tape, np.full(count, cell[0]), np.full(count, cell[1]), z_noise, g_noise)
        actions, log_probs = policy.rsample(tape, batch, latent, policy.action_noise(rng, count))
        q1, q2 = critics[cell].q_nodes(tape, batch, actions)
        term = ad.mean(log_probs * _inverse(cfg.alpha_pi) - ad.minimum(q1, q2))
        total = term if total is None else total + term
    return total / float(len(states))


def _slot_cells(latents: TaskLatents, slot: str, index: int, cells: Sequence[Cell]) -> List[Cell]:
    """Trained cells whose ``slot`` latent is row ``index``."""
    if latents.mode is EmbeddingMode.SINGLE:
        return [cell for cell in cells if cell[0] * latents.shape[1] + cell[1] == index]
    axis = 0 if slot == "z" else 1
    return [cell for cell in cells if cell[axis] == index]


def embedding_loss(tape: Tape, slot: str, index: int, policy: LatentPolicy, latents: TaskLatents,
                   critics: Mapping[Cell, CriticSet], memories: Mapping[Cell, ReplayMemory], cfg: SacConfig,
                   rng: np.random.Generator, alpha: Optional[float] = None) -> Node:
    """Single-sample ``E_q[log q/p - alpha kappa]`` for one row of the ``slot`` embedding.

    ``kappa = Q_min(s, a) - log pi(a | s, z, g) / alpha_pi`` is evaluated on the
    partner index drawn uniformly over trained cells sharing the row, with
    states from that cell's replay memory.

    Args:
        tape: Tape holding the embedding row as trainable.
        slot: ``z`` or ``g``.
        index: Row of the embedding to score.
        policy: Shared policy.
        latents: Task embeddings.
        critics: Critics by cell.
        memories: Replay memories by cell.
        cfg: Supplies temperatures and the batch size.
        rng: Picks partner cells and draws noise.
        alpha: Temperature override; the slot's temperature when None.

    Returns:
        The scalar loss averaged over the sampled states.

    Raises:
        ConfigurationError: If no trained cell sharing the row has data yet.
    """
    emb = latents.z if slot == "z" else latents.g
    if alpha is None:
        alpha_z, alpha_g = latents.slot_alphas(cfg.alpha_d, cfg.alpha_r)
        alpha = alpha_z if slot == "z" else alpha_g
    candidates = [cell for cell in _slot_cells(latents, slot, index, sorted(critics)) if len(memories[cell])]
    if not candidates:
        raise ConfigurationError(f"no trained cell with data for {slot} row {index}")
    picks = np.bincount(rng.integers(len(candidates), size=cfg.batch_size), minlength=len(candidates))
    total = None
    count = 0
    for cell, wanted in zip(candidates, picks):
        if wanted == 0:
            continue
        batch = memories[cell].sample(int(wanted), rng)
        n = len(batch)
        z_noise, g_noise = latents.draw_noise(rng, n)
        rows, cols = np.full(n, cell[0]), np.full(n, cell[1])
        z_index, g_index = latents.slot_indices(rows, cols)
        parts = [np.zeros((n, 0))]
        own = None
        if latents.z is not None:
            z = vi.sample(latents.z, z_index, z_noise, tape)
            parts.append(z)
            own = z if slot == "z" else own
        if latents.g is not None:
            g = vi.sample(latents.g, g_index, g_noise, tape)
            parts.append(g)
            own = g if slot == "g" else own
        latent = ad.concat(parts, axis=-1)
        actions, log_probs = policy.rsample(tape, batch.states, latent, policy.action_noise(rng, n))
        q1, q2 = critics[cell].q_nodes(tape, batch.states, actions)
        kappa = ad.minimum(q1, q2) - log_probs * _inverse(cfg.alpha_pi)
        slot_index = z_index if slot == "z" else g_index
        ratio = vi.log_density_ratio(emb, slot_index, own, tape)
        term = -ad.sum(kappa) if math.isinf(alpha) else ad.sum(ratio - kappa * alpha)
        total = term if total is None else total + term
        count += n
    return total / float(count)


@dataclass
class Collector:
    """Environment stepping state of one cell."""

    cell: Cell
    env: Environment
    rng: np.random.Generator
    observation: Optional[np.ndarray] = None
    episode_return: float = 0.0
    episode_steps: int = 0
    episodes: int = 0
    steps: int = 0
    z_noise: Optional[np.ndarray] = None
    g_noise: Optional[np.ndarray] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rng": self.rng.bit_generator.state,
            "env": self.env.snapshot(),
            "observation": self.observation,
            "episode_return": self.episode_return,
            "episode_steps": self.episode_steps,
            "episodes": self.episodes,
            "steps": self.steps,
            "z_noise": self.z_noise,
            "g_noise": self.g_noise,
        }

    def load_dict(self, data: Dict[str, Any]) -> None:
        self.rng.bit_generator.state = data["rng"]
        self.env.restore(data["env"], self.rng)
        self.observation = data["observation"]
        self.episode_return = float(data["episode_return"])
        self.episode_steps = int(data["episode_steps"])
        self.episodes = int(data["episodes"])
        self.steps = int(data["steps"])
        self.z_noise = data["z_noise"]
        self.g_noise = data["g_noise"]


@dataclass
class EpisodeSummary:
    """Return and length of one finished episode of a cell."""

    cell: Cell
    episode: int
    total_reward: float
    steps: int
    info: Dict[str, float]


@dataclass
class SacMetrics:
    iteration: int
    episodes: List[EpisodeSummary]
    losses: Dict[str, float]


@dataclass
class SacState:
    """Everything one off-policy run trains or resumes from.

    Attributes:
        policy: Shared latent-conditioned policy.
        latents: Task embeddings.
        critics: Twin Q, value and target value networks per cell.
        memories: Replay memory per cell.
        collectors: Environment stepping state per cell.
        optimizers: Optimizer moments keyed by parameter vector name.
        train_policy: Step the policy; off when retraining embeddings only.
        train_embeddings: Step the embedding rows.
    """

    config: SacConfig
    shape: Tuple[int, int]
    policy: LatentPolicy
    latents: TaskLatents
    critics: Dict[Cell, CriticSet]
    memories: Dict[Cell, ReplayMemory]
    collectors: Dict[Cell, Collector]
    seeds: SeedSequencer
    policy_optimizer: OptimizerState
    optimizers: Dict[str, OptimizerState] = field(default_factory=dict)
    train_policy: bool = True
    train_embeddings: bool = True
    iteration: int = 0
    stream: str = "sac"

    @property
    def cells(self) -> List[Cell]:
        return sorted(self.critics)

    def optimizer(self, params: ParamVector) -> OptimizerState:
        return self.optimizers.setdefault(params.name, OptimizerState(kind=self.config.optimizer))

    def to_dict(self) -> Dict[str, Any]:
        cells = self.cells
        return {
            "iteration": self.iteration,
            "cells": [list(cell) for cell in cells],
            "policy": self.policy.to_dict(),
            "latents": self.latents.to_dict(),
            "critics": [self.critics[cell].to_dict() for cell in cells],
            "memories": [self.memories[cell].to_dict() for cell in cells],
            "collectors": [self.collectors[cell].to_dict() for cell in cells],
            "policy_optimizer": self.policy_optimizer.to_dict(),
            "optimizers": {name: opt.to_dict() for name, opt in self.optimizers.items()},
        }

    def load_dict(self, data: Dict[str, Any]) -> None:
        cells = [tuple(cell) for cell in data["cells"]]
        if cells != self.cells:
            raise ConfigurationError(f"checkpoint cells {cells} do not match configured cells {self.cells}")
        restored = TaskLatents.from_dict(data["latents"])
        if restored.mode is not self.latents.mode or restored.noise_dims != self.latents.noise_dims:
            raise ConfigurationError("checkpoint embeddings do not match the configured embedding layout")
        self.latents = restored
        self.policy.load_dict(data["policy"])
        for k, cell in enumerate(cells):
            self.critics[cell].load_dict(data["critics"][k])
            self.memories[cell] = ReplayMemory.from_dict(data["memories"][k])
            self.collectors[cell].load_dict(data["collectors"][k])
        self.iteration = int(data["iteration"])
        self.policy_optimizer = OptimizerState.from_dict(data["policy_optimizer"])
        self.optimizers = {name: OptimizerState.from_dict(opt) for name, opt in data["optimizers"].items()}


def build_sac_state(cfg: SacConfig, envs: Mapping[Cell, Environment], shape: Tuple[int, int], seeds: SeedSequencer,
                    latents: Optional[TaskLatents] = None, policy: Optional[LatentPolicy] = None,
                    stream: str = "sac") -> SacState:
    """Builds a fresh off-policy state over ``envs``.

    Args:
        cfg: Hyperparameters.
        envs: One continuous-action environment per trained cell.
        shape: Grid shape the embeddings are sized for.
        seeds: Seed source; every random stream hangs off ``stream``.
        latents: Embeddings to continue from; fresh when None.
        policy: Policy to continue from; fresh when None.
        stream: Name prefixing every random stream of this state.

    Returns:
        The state, with empty memories and no steps taken.

    Raises:
        ConfigurationError: On no cells, discrete actions, out-of-grid cells or a latent size mismatch.
    """
    if not envs:
        raise ConfigurationError("no trained cells")
    first = next(iter(envs.values()))
    if any(env.discrete for env in envs.values()):
        raise ConfigurationError("soft actor-critic training needs continuous actions")
    for i, j in envs:
        if not (0 <= i < shape[0] and 0 <= j < shape[1]):
            raise ConfigurationError(f"cell ({i}, {j}) outside the {shape[0]}x{shape[1]} grid")
    init_rng = seeds.rng(stream, "init")
    if latents is None:
        latents = TaskLatents.create(cfg.embedding_mode, shape, cfg.dim_z, cfg.dim_g, init_rng)
    if policy is None:
        policy = LatentPolicy.build(first.observation_dim, latents.latent_dim, first.action_dim, 0, cfg.policy_width,
                                    cfg.policy_layers, cfg.activation, cfg.policy_input, init_rng)
    if policy.latent_dim != latents.latent_dim:
        raise ConfigurationError(
            f"policy latent dim {policy.latent_dim} does not match embeddings {latents.latent_dim}")
    critics, memories, collectors = {}, {}, {}
    for cell in sorted(envs):
        critics[cell] = CriticSet.create(first.observation_dim, first.action_dim, cfg.critic_width, cfg.critic_layers,
                                         cfg.activation, seeds.rng(stream, "critic", *cell), cell)
        memories[cell] = ReplayMemory(cfg.buffer_size, first.observation_dim, first.action_dim)
        collectors[cell] = Collector(cell, envs[cell], seeds.rng(stream, "collect", *cell))
    return SacState(cfg, shape, policy, latents, critics, memories, collectors, seeds,
                    OptimizerState(kind=cfg.optimizer), stream=stream)


def collect_step(state: SacState, cell: Cell) -> Optional[EpisodeSummary]:
    """Advances the cell's environment by one step; returns a summary when an episode ends."""
    cfg = state.config
    col = state.collectors[cell]
    latents = state.latents
    if col.observation is None:
        col.observation = col.env.reset(col.rng)
        col.episode_return, col.episode_steps = 0.0, 0
        if cfg.per_episode_latents:
            col.z_noise, col.g_noise = latents.draw_noise(col.rng)
    if col.steps < cfg.warmup_steps:
        action = col.rng.uniform(-1.0, 1.0, size=state.policy.action_dim)
    else:
        if cfg.per_episode_latents:
            z_noise, g_noise = col.z_noise, col.g_noise
        else:
            z_noise, g_noise = latents.draw_noise(col.rng)
        latent = latents.latent_values(np.array([cell[0]]), np.array([cell[1]]), z_noise.reshape(1, -1),
                                       g_noise.reshape(1, -1))
        actions, _ = state.policy.act(col.observation.reshape(1, -1), latent, state.policy.action_noise(col.rng, 1))
        action = actions[0]
    result = col.env.step(action)
    state.memories[cell].add(col.observation, action, result.reward, result.observation, result.terminated)
    col.steps += 1
    col.episode_steps += 1
    col.episode_return += float(result.reward)
    col.observation = result.observation
    if not result.done:
        return None
    summary = EpisodeSummary(cell, col.episodes, col.episode_return, col.episode_steps, dict(result.info))
    col.episodes += 1
    col.observation = None
    return summary


def _step(state: SacState, params: ParamVector, lr: float) -> None:
    optimizer_step(params, lr, state.optimizer(params))


def _check(name: str, loss: Node, iteration: int) -> float:
    value = loss.item()
    if not np.isfinite(value):
        raise DivergenceError(f"non-finite {name} at iteration {iteration}")
    return value


def update_cell(state: SacState, cell: Cell, rng: np.random.Generator) -> Dict[str, float]:
    """Critic steps for ``cell``, then steps on the embedding rows it indexes."""
    cfg = state.config
    critics = state.critics[cell]
    batch = state.memories[cell].sample(cfg.batch_size, rng)
    tape = Tape(trainable=[critics.q1, critics.q2])
    loss_q1, loss_q2 = q_loss(tape, critics, batch, cfg.gamma)
    tape.backward(loss_q1 + loss_q2)
    losses = {"q1": _check("q1 loss", loss_q1, state.iteration), "q2": _check("q2 loss", loss_q2, state.iteration)}
    _step(state, critics.q1, cfg.q_learning_rate)
    _step(state, critics.q2, cfg.q_learning_rate)

    targets = v_target(batch.states, cell, state.policy, state.latents, critics, cfg, rng)
    tape = Tape(trainable=[critics.v])
    loss_v = v_loss(tape, critics, batch.states, targets)
    tape.backward(loss_v)
    losses["v"] = _check("value loss", loss_v, state.iteration)
    _step(state, critics.v, cfg.v_learning_rate)

    if state.train_embeddings:
        z_index, g_index = state.latents.slot_indices([cell[0]], [cell[1]])
        for slot, emb, index in (("z", state.latents.z, z_index), ("g", state.latents.g, g_index)):
            if emb is None:
                continue
            row = emb.rows[int(index[0])]
            tape = Tape(trainable=[row])
            loss = embedding_loss(tape, slot, int(index[0]), state.policy, state.latents, state.critics,
                                  state.memories, cfg, rng)
            tape.backward(loss)
            losses[f"embedding_{slot}"] = _check(f"{slot} embedding loss", loss, state.iteration)
            _step(state, row, cfg.embedding_learning_rate)
    return losses


def train_iteration_sac(state: SacState) -> SacMetrics:
    """One environment step per cell, then critic, embedding and policy updates.

    Args:
        state: Training state, updated in place.

    Returns:
        Finished episodes and the losses of this iteration.

    Raises:
        DivergenceError: If any loss is not finite.
    """
    cfg = state.config
    rng = state.seeds.rng(state.stream, "update", state.iteration)
    episodes = []
    losses: Dict[str, float] = {}
    ready = []
    for cell in state.cells:
        summary = collect_step(state, cell)
        if summary is not None:
            episodes.append(summary)
            logger.info("sac cell %s episode %d: return %.4f", cell, summary.episode, summary.total_reward)
        if state.collectors[cell].steps < max(cfg.warmup_steps, 1):
            continue
        ready.append(cell)
        for name, value in update_cell(state, cell, rng).items():
            losses[f"{name}[{cell[0]},{cell[1]}]"] = value
    if ready and state.train_policy:
        batches = {cell: state.memories[cell].sample(cfg.batch_size, rng).states for cell in ready}
        tape = Tape(trainable=[state.policy.params])
        loss = policy_loss(tape, state.policy, state.latents, state.critics, batches, cfg, rng)
        tape.backward(loss)
        losses["policy"] = _check("policy loss", loss, state.iteration)
        _step(state, state.policy.params, cfg.policy_learning_rate)
    for cell in ready:
        soft_update(state.critics[cell], cfg.tau)
    state.iteration += 1
    return SacMetrics(state.iteration - 1, episodes, losses)
