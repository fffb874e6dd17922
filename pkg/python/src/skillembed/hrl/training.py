"""High-level learners over latent options, each paired with a flat baseline.

The low-level policy and embeddings are never updated here. Both learners of
a pair get the same budget of episodes.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..embeddings.latents import EmbeddingMode, TaskLatents
from ..envs.asteroid import AsteroidCartpoleEnv
from ..envs.grid import EnvFamily, TaskGrid
from ..envs.trajectory import Trajectory
from ..errors import ConfigurationError
from ..policy import LatentPolicy
from ..reinforce.baseline import EpisodicReinforce, EpisodicReinforceConfig
from ..sac.algorithm import SacConfig, SacState, build_sac_state, train_iteration_sac
from ..seeding import SeedSequencer
from .circle import CIRCLE_MAX_STEPS, CircleGoalReacherEnv
from .options import HrlConfig, LatentOptionEnv, frozen_latent, latent_box, option_points

logger = logging.getLogger(__name__)

HIERARCHICAL = "hierarchical"
FLAT = "flat"


@dataclass
class HrlEpisode:
    """One episode of one learner, counted in primitive environment steps."""

    learner: str
    episode: int
    total_reward: float
    env_steps: int
    info: Dict[str, float]


@dataclass
class HrlResult:
    """Episode records of the hierarchical learner and its flat baseline."""

    episodes: List[HrlEpisode] = field(default_factory=list)
    parameter_counts: Dict[str, int] = field(default_factory=dict)

    def for_learner(self, learner: str) -> List[HrlEpisode]:
        return [episode for episode in self.episodes if episode.learner == learner]

    def final_mean(self, learner: str, window: int = 10) -> float:
        """Mean return over the last ``window`` episodes of ``learner``."""
        rewards = [episode.total_reward for episode in self.for_learner(learner)]
        if not rewards:
            raise ConfigurationError(f"no episodes recorded for {learner}")
        return float(np.mean(rewards[-window:]))


def hrl_sac_config() -> SacConfig:
    """Soft actor-critic settings for a single high-level task without embeddings."""
    return SacConfig(batch_size=256, buffer_size=300_000, embedding_mode=EmbeddingMode.NONE,
                     alpha_d=float("inf"), alpha_r=float("inf"), max_episode_steps=CIRCLE_MAX_STEPS)


def _check_low_level(policy: LatentPolicy, latents: TaskLatents) -> None:
    if latents.mode is not EmbeddingMode.DISENTANGLED:
        raise ConfigurationError(f"hierarchical control needs disentangled embeddings, got {latents.mode.value}")
    if policy.latent_dim != latents.latent_dim:
        raise ConfigurationError(
            f"policy latent dim {policy.latent_dim} does not match embeddings {latents.latent_dim}")


def _trajectory_episode(learner: str, episode: int, traj: Trajectory, hierarchical: bool) -> HrlEpisode:
    info = dict(traj.final_info())
    env_steps = int(info.get("env_steps", len(traj))) if hierarchical else len(traj)
    return HrlEpisode(learner, episode, traj.total_reward, env_steps, info)


def train_hrl_reinforce(cfg: HrlConfig, policy: LatentPolicy, latents: TaskLatents, seeds: SeedSequencer,
                        reinforce_cfg: Optional[EpisodicReinforceConfig] = None) -> HrlResult:
    """REINFORCE over discrete latent options on asteroid cart-pole, against REINFORCE on primitive actions.

    Args:
        cfg: Hierarchical settings.
        policy: Frozen low-level cart-pole policy.
        latents: Disentangled embeddings it was trained with.
        seeds: Seed source.
        reinforce_cfg: Settings shared by both learners.

    Returns:
        Episodes of ``hierarchical`` and ``flat``, with parameter counts.

    Raises:
        ConfigurationError: If the low-level policy is not a disentangled discrete one.
    """
    _check_low_level(policy, latents)
    if not policy.discrete:
        raise ConfigurationError("asteroid cart-pole options need a discrete low-level policy")
    reinforce_cfg = reinforce_cfg or EpisodicReinforceConfig()
    points = option_points(latents, cfg.extra_points)
    z = frozen_latent(latents, cfg.dynamics_index)
    interval = cfg.interval_for(EnvFamily.CARTPOLE_3X3)
    max_steps = cfg.max_episode_steps or None

    high_envs = [
        LatentOptionEnv(AsteroidCartpoleEnv(cfg.asteroid_kinds(), max_steps), policy, z, interval, points=points)
        for _ in range(reinforce_cfg.episodes_per_batch)
    ]
    flat_envs = [AsteroidCartpoleEnv(cfg.asteroid_kinds(), max_steps) for _ in range(reinforce_cfg.episodes_per_batch)]
    learners = {
        HIERARCHICAL: EpisodicReinforce(reinforce_cfg, high_envs, seeds, stream="hrl-high"),
        FLAT: EpisodicReinforce(reinforce_cfg, flat_envs, seeds, stream="hrl-flat"),
    }
    result = HrlResult()
    for name, learner in learners.items():
        result.parameter_counts[name] = len(learner.policy.params) + len(learner.value_params)
        while learner.episodes < cfg.episodes:
            first = learner.episodes
            for offset, traj in enumerate(learner.train_batch()):
                result.episodes.append(_trajectory_episode(name, first + offset, traj, name == HIERARCHICAL))
        logger.info("%s reinforce: %d episodes, final mean return %.3f", name, learner.episodes,
                    result.final_mean(name))
    return result


def _run_sac(name: str, state: SacState, episodes: int, result: HrlResult) -> None:
    collector = state.collectors[(0, 0)]
    while collector.episodes < episodes:
        metrics = train_iteration_sac(state)
        for summary in metrics.episodes:
            env_steps = int(summary.info.get("env_steps", summary.steps))
            result.episodes.append(HrlEpisode(name, summary.episode, summary.total_reward, env_steps,
                                              dict(summary.info)))


def train_hrl_sac(cfg: HrlConfig, policy: LatentPolicy, latents: TaskLatents, grid: TaskGrid, seeds: SeedSequencer,
                  sac_cfg: Optional[SacConfig] = None) -> HrlResult:
    """Soft actor-critic over a continuous latent box on the circle-tracking reacher, against flat SAC.

    Args:
        cfg: Hierarchical settings.
        policy: Frozen low-level reacher policy.
        latents: Disentangled embeddings it was trained with.
        grid: Reacher grid supplying the link lengths.
        seeds: Seed source.
        sac_cfg: Settings shared by both learners.

    Returns:
        Episodes of ``hierarchical`` and ``flat``, with parameter counts.

    Raises:
        ConfigurationError: On a cart-pole grid or an unsuitable low-level policy.
    """
    _check_low_level(policy, latents)
    if grid.family.is_cartpole:
        raise ConfigurationError("circle tracking needs a reacher grid")
    sac_cfg = sac_cfg or hrl_sac_config()
    if sac_cfg.embedding_mode is not EmbeddingMode.NONE:
        raise ConfigurationError("high-level soft actor-critic runs without task embeddings")
    z = frozen_latent(latents, cfg.dynamics_index)
    box = latent_box(latents, cfg.box_sigmas)
    interval = cfg.interval_for(grid.family)
    links = tuple(grid.dynamics_params[cfg.dynamics_index])
    max_steps = cfg.max_episode_steps or sac_cfg.max_episode_steps or None

    def circle_env() -> CircleGoalReacherEnv:
        return CircleGoalReacherEnv(links, cfg.circle_radius, cfg.circle_period, max_steps=max_steps)

    states = {
        HIERARCHICAL: build_sac_state(sac_cfg, {(0, 0): LatentOptionEnv(circle_env(), policy, z, interval, box=box)},
                                      (1, 1), seeds, stream="hrl-high"),
        FLAT: build_sac_state(sac_cfg, {(0, 0): circle_env()}, (1, 1), seeds, stream="hrl-flat"),
    }
    result = HrlResult()
    for name, state in states.items():
        result.parameter_counts[name] = len(state.policy.params) + sum(
            len(params) for params in state.critics[(0, 0)].parameter_vectors())
        _run_sac(name, state, cfg.episodes, result)
        logger.info("%s soft actor-critic: %d episodes, final mean return %.3f",
                    name, state.collectors[(0, 0)].episodes, result.final_mean(name))
    return result
