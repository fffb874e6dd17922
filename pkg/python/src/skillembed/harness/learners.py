"""Building, stepping, evaluating and checkpointing learners for an experiment config."""

import copy
import dataclasses
import logging
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..checkpoint import CheckpointSigner
from ..embeddings.latents import EmbeddingMode, TaskLatents
from ..envs.base import Environment
from ..envs.grid import TaskGrid, build_task_grid
from ..envs.trajectory import Cell
from ..errors import ConfigurationError
from ..policy import LatentPolicy
from ..reinforce.algorithm import (IterationMetrics, ReinforceConfig, ReinforceState, build_reinforce_state,
                                   train_iteration)
from ..rollout import EpisodeJob, collect_episodes
from ..sac.algorithm import SacConfig, SacMetrics, SacState, build_sac_state, train_iteration_sac
from ..seeding import SeedSequencer
from .config import Algorithm, ExperimentConfig, ExperimentSettings, parse_config, serialize_config
from .metrics import MetricsRow

logger = logging.getLogger(__name__)

Learner = Union[ReinforceState, SacState]
LearnerConfig = Union[ReinforceConfig, SacConfig]

SINGLE_CELL = (0, 0)


def learner_config(cfg: ExperimentConfig) -> LearnerConfig:
    """The algorithm section the configured learner trains with, with its embedding mode applied."""
    exp = cfg.experiment
    base = cfg.sac if exp.algorithm.uses_sac(exp.env_family) else cfg.reinforce
    if exp.algorithm.single_embedding:
        return dataclasses.replace(base, embedding_mode=EmbeddingMode.SINGLE)
    if exp.algorithm is Algorithm.INDEPENDENT:
        return dataclasses.replace(base, embedding_mode=EmbeddingMode.NONE)
    return base


def episode_limit(cfg: ExperimentConfig) -> Optional[int]:
    """Episode step limit, the experiment override first; ``None`` keeps each environment's own."""
    return cfg.experiment.max_episode_steps or learner_config(cfg).max_episode_steps or None


def build_grid(cfg: ExperimentConfig) -> TaskGrid:
    """The configured family's grid with its held-out mask."""
    return build_task_grid(cfg.experiment.env_family, cfg.experiment.grid_mask)


def make_envs(grid: TaskGrid, cells: Sequence[Cell], max_steps: Optional[int]) -> Dict[Cell, Environment]:
    """One environment per cell, keyed by cell."""
    return {tuple(cell): grid.make_env(*cell, max_steps=max_steps) for cell in cells}


def checkpoint_signer(settings: ExperimentSettings) -> Optional[CheckpointSigner]:
    if not settings.checkpoint_passphrase:
        return None
    return CheckpointSigner.from_passphrase(settings.checkpoint_passphrase)


def build_learner(cfg: ExperimentConfig, envs: Mapping[Cell, Environment], shape: Tuple[int, int],
                  seeds: SeedSequencer, latents: Optional[TaskLatents] = None, policy: Optional[LatentPolicy] = None,
                  stream: Optional[str] = None) -> Learner:
    """Builds the configured learner over ``envs``.

    Args:
        cfg: Run configuration; its algorithm picks REINFORCE or SAC.
        envs: Environment per trained cell.
        shape: Grid shape, sizing the embedding tables.
        seeds: Seed streams for initialization and sampling.
        latents: Existing embeddings to train instead of fresh ones.
        policy: Existing policy to train instead of a fresh one.
        stream: Seed stream name for the learner's own sampling.

    Returns:
        A ``ReinforceState`` or ``SacState``.
    """
    algo = learner_config(cfg)
    if isinstance(algo, SacConfig):
        return build_sac_state(algo, envs, shape, seeds, latents, policy, stream=stream or "sac")
    state = build_reinforce_state(algo, envs, shape, seeds, latents, policy)
    if stream:
        state.stream = stream
    return state


def independent_learners(cfg: ExperimentConfig, grid: TaskGrid, cells: Sequence[Cell], seeds: SeedSequencer,
                         max_steps: Optional[int]) -> Dict[Cell, Learner]:
    """One latent-free single-task learner per cell, each on its own seed stream."""
    cfg = dataclasses.replace(cfg, experiment=dataclasses.replace(cfg.experiment, algorithm=Algorithm.INDEPENDENT))
    learners = {}
    for cell in cells:
        cell_seeds = SeedSequencer(seeds.derive("independent", *cell))
        envs = {SINGLE_CELL: grid.make_env(*cell, max_steps=max_steps)}
        learners[tuple(cell)] = build_learner(cfg, envs, (1, 1), cell_seeds)
    return learners


def parameter_count(learner: Learner) -> int:
    """Trainable policy and critic parameters; embedding tables are not counted."""
    count = len(learner.policy.params)
    if isinstance(learner, SacState):
        count += sum(len(params) for critic in learner.critics.values() for params in critic.parameter_vectors())
    return count


def embedding_parameter_count(latents: TaskLatents) -> int:
    return sum(len(params) for params in latents.parameter_vectors())


def _latent_kls(latents: TaskLatents, cell: Cell) -> Tuple[Optional[float], Optional[float]]:
    kl_z, kl_g = latents.kl_summary()
    if latents.mode is EmbeddingMode.SINGLE:
        return kl_z.get(cell[0] * latents.shape[1] + cell[1]), None
    return kl_z.get(cell[0]), kl_g.get(cell[1])


def reinforce_rows(name: str, seed: int, state: ReinforceState, metrics: IterationMetrics,
                   cell_map: Optional[Mapping[Cell, Cell]] = None) -> List[MetricsRow]:
    rows = []
    for cell in sorted(metrics.returns):
        i, j = cell_map[cell] if cell_map else cell
        rows.append(MetricsRow(name, seed, metrics.iteration, i, j, metrics.returns[cell],
                               episodes=state.config.episodes_per_task, kl_z=metrics.kl_z.get(cell),
                               kl_g=metrics.kl_g.get(cell), losses={"loss": metrics.loss}))
    return rows


def _cell_losses(losses: Mapping[str, float], cell: Cell) -> Dict[str, float]:
    suffix = f"[{cell[0]},{cell[1]}]"
    picked = {}
    for key, value in losses.items():
        if key.endswith(suffix):
            picked[key[: -len(suffix)]] = value
        elif "[" not in key:
            picked[key] = value
    return picked


def sac_rows(name: str, seed: int, state: SacState, metrics: SacMetrics,
             cell_map: Optional[Mapping[Cell, Cell]] = None) -> List[MetricsRow]:
    """One row per episode finished during the iteration."""
    rows = []
    for summary in metrics.episodes:
        i, j = cell_map[summary.cell] if cell_map else summary.cell
        kl_z, kl_g = _latent_kls(state.latents, summary.cell)
        info = {"episode": summary.episode, "steps": summary.steps}
        info.update(summary.info)
        rows.append(MetricsRow(name, seed, metrics.iteration, i, j, summary.total_reward, episodes=1, kl_z=kl_z,
                               kl_g=kl_g, losses=_cell_losses(metrics.losses, summary.cell), info=info))
    return rows


def step_learner(learner: Learner, name: str, seed: int,
                 cell_map: Optional[Mapping[Cell, Cell]] = None) -> List[MetricsRow]:
    """One training iteration, reported as metrics rows."""
    if isinstance(learner, SacState):
        return sac_rows(name, seed, learner, train_iteration_sac(learner), cell_map)
    return reinforce_rows(name, seed, learner, train_iteration(learner), cell_map)


def evaluate_cells(policy: LatentPolicy, latents: TaskLatents, envs: Mapping[Cell, Environment], episodes: int,
                   seeds: SeedSequencer, stream: str, per_episode_latents: bool = False) -> Dict[Cell, float]:
    """Mean undiscounted return of fresh episodes per cell, nothing trained.

    Args:
        policy: Policy to act with.
        latents: Embeddings supplying each cell's latents.
        envs: Environment per cell; each job runs on a copy.
        episodes: Episodes per cell.
        seeds: Seed streams for the episode generators.
        stream: Seed stream name.
        per_episode_latents: Sample latents once per episode instead of per step.

    Returns:
        Mean return per cell, sorted by cell.
    """
    jobs = [
        EpisodeJob(cell, copy.deepcopy(envs[cell]), seeds.rng(stream, cell[0], cell[1], m))
        for cell in sorted(envs) for m in range(episodes)
    ]
    returns: Dict[Cell, List[float]] = {cell: [] for cell in envs}
    for traj in collect_episodes(policy, latents, jobs, per_episode_latents):
        returns[traj.cell].append(traj.total_reward)
    return {cell: float(np.mean(values)) for cell, values in sorted(returns.items())}


def random_policy_return(env: Environment, episodes: int, rng: np.random.Generator) -> float:
    """Mean return of uniformly random actions."""
    totals = []
    for _ in range(episodes):
        env.reset(rng)
        total = 0.0
        for _ in range(env.max_steps):
            if env.discrete:
                action = int(rng.integers(env.n_actions))
            else:
                action = rng.uniform(-1.0, 1.0, size=env.action_dim)
            result = env.step(action)
            total += float(result.reward)
            if result.done:
                break
        totals.append(total)
    return float(np.mean(totals))


def checkpoint_payload(cfg: ExperimentConfig, seed: int, learner: Optional[Learner] = None,
                       learners: Optional[Mapping[Cell, Learner]] = None) -> Dict[str, Any]:
    """Everything needed to rebuild the run: its config text without the passphrase, seed and learner state."""
    public = dataclasses.replace(cfg, experiment=dataclasses.replace(cfg.experiment, checkpoint_passphrase=""))
    payload: Dict[str, Any] = {"config": serialize_config(public), "seed": seed}
    if learner is not None:
        payload["state"] = learner.to_dict()
    if learners is not None:
        payload["cells"] = [[i, j, learners[(i, j)].to_dict()] for i, j in sorted(learners)]
    return payload


def restore_learner(payload: Mapping[str, Any]) -> Tuple[ExperimentConfig, TaskGrid, Learner, int]:
    """Rebuilds the multi-task learner of a checkpoint from the config it was trained with.

    Args:
        payload: Decoded checkpoint from ``checkpoint_payload``.

    Returns:
        The config, grid, learner and seed of the run.

    Raises:
        ConfigurationError: If the checkpoint has no config or no shared learner.
    """
    try:
        cfg = parse_config(payload["config"])
        seed = int(payload["seed"])
    except (KeyError, TypeError) as e:
        raise ConfigurationError(f"checkpoint has no run config: {e}") from e
    if "state" not in payload:
        raise ConfigurationError(f"{cfg.experiment.algorithm.value} checkpoints hold no shared policy to restore")
    grid = build_grid(cfg)
    envs = make_envs(grid, grid.trained_cells(), episode_limit(cfg))
    learner = build_learner(cfg, envs, grid.shape, SeedSequencer(seed))
    learner.load_dict(payload["state"])
    logger.info("restored %s learner at iteration %d (seed %d)", cfg.experiment.algorithm.value,
                learner.iteration, seed)
    return cfg, grid, learner, seed
