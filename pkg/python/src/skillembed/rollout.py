"""Episode collection for the shared latent policy.

All jobs are stepped in lockstep so one batched forward pass serves every
live environment. Each job draws its latent noise and action noise from its
own generator, in the same order whatever the batch composition, so results
do not depend on how jobs are grouped.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .embeddings.latents import TaskLatents
from .envs.base import Environment
from .envs.trajectory import Cell, Trajectory
from .policy import LatentPolicy

logger = logging.getLogger(__name__)


@dataclass
class EpisodeJob:
    """One episode to run: the cell, its environment and its private generator."""

    cell: Cell
    env: Environment
    rng: np.random.Generator


def _action_for_env(policy: LatentPolicy, action: np.ndarray):
    return int(action) if policy.discrete else np.asarray(action, dtype=np.float64)


def collect_episodes(policy: LatentPolicy, latents: TaskLatents, jobs: Sequence[EpisodeJob],
                     per_episode_latents: bool = False) -> List[Trajectory]:
    """Runs one episode per job and returns the trajectories in job order.

    Per step, a job draws ``(z noise, g noise)`` and then its action noise.
    With ``per_episode_latents`` the latent noise is drawn once at reset.

    Args:
        policy: Shared policy, read only.
        latents: Task embeddings, read only.
        jobs: Episodes to run in lockstep.
        per_episode_latents: Hold each episode's latent noise fixed.

    Returns:
        One trajectory per job, with the noise it drew stored per step.
    """
    trajectories = [Trajectory(*job.cell) for job in jobs]
    observations = [job.env.reset(job.rng) for job in jobs]
    episode_noise = [latents.draw_noise(job.rng) for job in jobs] if per_episode_latents else None
    live = list(range(len(jobs)))
    while live:
        rows = np.array([jobs[k].cell[0] for k in live])
        cols = np.array([jobs[k].cell[1] for k in live])
        z_noise, g_noise, action_noise = [], [], []
        for k in live:
            zn, gn = episode_noise[k] if episode_noise is not None else latents.draw_noise(jobs[k].rng)
            z_noise.append(zn)
            g_noise.append(gn)
            action_noise.append(policy.action_noise(jobs[k].rng, 1)[0])
        z_noise = np.array(z_noise).reshape(len(live), -1)
        g_noise = np.array(g_noise).reshape(len(live), -1)
        latent = latents.latent_values(rows, cols, z_noise, g_noise)
        states = np.array([observations[k] for k in live])
        actions, _ = policy.act(states, latent, np.array(action_noise))
        still_live = []
        for slot, k in enumerate(live):
            traj = trajectories[k]
            result = jobs[k].env.step(_action_for_env(policy, actions[slot]))
            traj.states.append(observations[k])
            traj.actions.append(np.asarray(actions[slot]))
            traj.rewards.append(float(result.reward))
            traj.z_noise.append(z_noise[slot])
            traj.g_noise.append(g_noise[slot])
            traj.infos.append(dict(result.info))
            observations[k] = result.observation
            if result.done:
                traj.terminated = result.terminated
            else:
                still_live.append(k)
        live = still_live
    for traj in trajectories:
        logger.debug("cell %s: %d steps, return %.4f", traj.cell, len(traj), traj.total_reward)
    return trajectories


def rollout_fixed_latent(policy: LatentPolicy, env: Environment, latent: np.ndarray, rng: np.random.Generator,
                         max_steps: Optional[int] = None) -> Trajectory:
    """One episode with the policy's latent input held at ``latent``.

    Args:
        policy: Shared policy, read only.
        env: Environment to reset and run.
        latent: The latent fed at every step.
        rng: Reset and action draws.
        max_steps: Step limit; the environment's when None.

    Returns:
        The trajectory, with cell ``(-1, -1)`` and no latent noise.
    """
    latent = np.asarray(latent, dtype=np.float64).reshape(1, -1)
    traj = Trajectory(-1, -1)
    observation = env.reset(rng)
    limit = env.max_steps if max_steps is None else max_steps
    for _ in range(limit):
        actions, _ = policy.act(observation.reshape(1, -1), latent, policy.action_noise(rng, 1))
        result = env.step(_action_for_env(policy, actions[0]))
        traj.states.append(observation)
        traj.actions.append(np.asarray(actions[0]))
        traj.rewards.append(float(result.reward))
        traj.infos.append(dict(result.info))
        observation = result.observation
        if result.done:
            traj.terminated = result.terminated
            break
    return traj
