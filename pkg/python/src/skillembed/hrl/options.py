"""Latent options: the frozen low-level policy run for a fixed number of steps.

A high-level action picks a goal latent ``g``; the dynamics latent stays at
the variational mean of the deployment dynamics. Discrete high-level actions
index a list of latent points, continuous ones in ``[-1, 1]^d`` are mapped
affinely onto a box around the learned goal embeddings.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from ..embeddings.latents import EmbeddingMode, TaskLatents
from ..envs.asteroid import AsteroidKind
from ..envs.base import Environment, StepResult
from ..envs.grid import EnvFamily
from ..errors import ConfigurationError, UsageError
from ..policy import LatentPolicy
from .circle import CIRCLE_PERIOD, CIRCLE_RADIUS

CARTPOLE_INTERVAL = 10
REACHER_INTERVAL = 5
EXTRA_POINTS = ((-0.1, -1.30), (0.35, 0.65))
_ASTEROID_ORDER = (AsteroidKind.RANDOM_X, AsteroidKind.ABOVE_CART)


@dataclass
class HrlConfig:
    """Settings of the hierarchical experiments.

    Attributes:
        dynamics_index: Row whose dynamics latent mean is frozen into the low-level policy.
        decision_interval: Low-level steps per option; 0 picks the family default.
        extra_points: Goal latents offered beside the embedding means.
        asteroids: 1 or 2 asteroid types.
        box_sigmas: Half-width of the continuous option box, in embedding spreads.
        episodes: High-level episodes per learner.
        max_episode_steps: Primitive step limit; 0 keeps the environment default.
    """

    dynamics_index: int = 1
    decision_interval: int = 0
    extra_points: Tuple[Tuple[float, ...], ...] = EXTRA_POINTS
    asteroids: int = 1
    box_sigmas: float = 3.0
    episodes: int = 1000
    max_episode_steps: int = 0
    circle_radius: float = CIRCLE_RADIUS
    circle_period: int = CIRCLE_PERIOD

    def __post_init__(self):
        if self.decision_interval < 0:
            raise ConfigurationError(f"decision_interval must be non-negative, got {self.decision_interval}")
        if self.asteroids not in (1, 2):
            raise ConfigurationError(f"asteroids must be 1 or 2, got {self.asteroids}")
        if self.episodes < 1:
            raise ConfigurationError(f"episodes must be positive, got {self.episodes}")
        if not self.box_sigmas > 0.0:
            raise ConfigurationError(f"box_sigmas must be positive, got {self.box_sigmas}")

    def interval_for(self, family: EnvFamily) -> int:
        """The configured interval, or 10 steps for cart-pole and 5 for the reacher."""
        if self.decision_interval:
            return self.decision_interval
        return CARTPOLE_INTERVAL if family.is_cartpole else REACHER_INTERVAL

    def asteroid_kinds(self) -> Tuple[AsteroidKind, ...]:
        return _ASTEROID_ORDER[:self.asteroids]


def _check_latents(latents: TaskLatents) -> None:
    if latents.mode is not EmbeddingMode.DISENTANGLED:
        raise ConfigurationError(f"options need disentangled embeddings, got {latents.mode.value}")


def frozen_latent(latents: TaskLatents, dynamics_index: int) -> np.ndarray:
    """Mean of the dynamics embedding for ``dynamics_index``."""
    _check_latents(latents)
    if not 0 <= dynamics_index < latents.z.index_count:
        raise ConfigurationError(f"dynamics index {dynamics_index} outside 0..{latents.z.index_count - 1}")
    return latents.z.rows[dynamics_index].block(0).reshape(-1).copy()


def option_points(latents: TaskLatents, extra_points: Sequence[Sequence[float]] = EXTRA_POINTS) -> np.ndarray:
    """Goal-embedding means followed by ``extra_points``, one row per discrete option."""
    _check_latents(latents)
    means = [row.block(0).reshape(-1) for row in latents.g.rows]
    extra = [np.asarray(point, dtype=np.float64) for point in extra_points]
    if any(point.size != latents.g.latent_dim for point in extra):
        raise ConfigurationError(f"option points must have {latents.g.latent_dim} coordinates")
    return np.array(means + extra)


def latent_box(latents: TaskLatents, sigmas: float = 3.0) -> Tuple[np.ndarray, np.ndarray]:
    """Envelope of ``mean +- sigmas * std`` over every goal embedding row."""
    _check_latents(latents)
    means = np.array([row.block(0).reshape(-1) for row in latents.g.rows])
    stds = np.exp(np.array([row.block(1).reshape(-1) for row in latents.g.rows]))
    return np.min(means - sigmas * stds, axis=0), np.max(means + sigmas * stds, axis=0)


class LatentOptionEnv(Environment):
    """High-level view of ``base``: each step runs one option of ``interval`` low-level steps.

    ``info["env_steps"]`` counts low-level steps since the last reset.
    """

    def __init__(self, base: Environment, policy: LatentPolicy, frozen_z: np.ndarray, interval: int,
                 points: Optional[np.ndarray] = None, box: Optional[Tuple[np.ndarray, np.ndarray]] = None):
        """Initialize LatentOptionEnv.

        Args:
            base: Primitive environment.
            policy: Frozen low-level policy.
            frozen_z: Dynamics latent held fixed for every option.
            interval: Low-level steps per option.
            points: Discrete goal latents, one per high-level action.
            box: ``(low, high)`` bounds of a continuous goal latent.

        Raises:
            ConfigurationError: Unless exactly one of ``points`` and ``box`` is given,
                or when the latent or observation sizes do not fit the policy.
        """
        if interval < 1:
            raise ConfigurationError(f"decision interval must be positive, got {interval}")
        if (points is None) == (box is None):
            raise ConfigurationError("options take either discrete points or a continuous box")
        self.base = base
        self.policy = policy
        self.frozen_z = np.asarray(frozen_z, dtype=np.float64).reshape(-1)
        self.interval = interval
        self.points = None if points is None else np.asarray(points, dtype=np.float64)
        self.box = None if box is None else (np.asarray(box[0], dtype=np.float64), np.asarray(box[1], dtype=np.float64))
        if self.points is not None:
            self.n_actions = len(self.points)
            g_dim = self.points.shape[1]
        else:
            self.action_dim = self.box[0].size
            g_dim = self.action_dim
        if self.frozen_z.size + g_dim != policy.latent_dim:
            raise ConfigurationError(f"low-level policy takes {policy.latent_dim} latent dims, options give "
                                     f"{self.frozen_z.size} + {g_dim}")
        if base.observation_dim < policy.state_dim:
            raise ConfigurationError(f"low-level policy needs {policy.state_dim} observation dims, "
                                     f"environment has {base.observation_dim}")
        self.observation_dim = base.observation_dim
        self.max_steps = int(math.ceil(base.max_steps / interval))
        self._rng: Optional[np.random.Generator] = None
        self._observation: Optional[np.ndarray] = None
        self._env_steps = 0

    def decode(self, action) -> np.ndarray:
        """The goal latent selected by a high-level action."""
        if self.points is not None:
            index = int(action)
            if not 0 <= index < len(self.points):
                raise UsageError(f"option {index} outside 0..{len(self.points) - 1}")
            return self.points[index]
        low, high = self.box
        unit = np.clip(np.asarray(action, dtype=np.float64).reshape(-1), -1.0, 1.0)
        return low + 0.5 * (unit + 1.0) * (high - low)

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._rng = rng
        self._env_steps = 0
        self._observation = self.base.reset(rng)
        return self._observation

    def hrl_step(self, action) -> StepResult:
        """Runs the low-level policy with the chosen goal latent and sums the rewards.

        Args:
            action: Option index, or a point in the box.

        Returns:
            The summed reward over up to ``interval`` primitive steps; ``info`` carries ``env_steps``.
        """
        if self._observation is None:
            raise UsageError("hrl_step before reset")
        latent = np.concatenate([self.frozen_z, self.decode(action)]).reshape(1, -1)
        width = self.policy.state_dim
        total = 0.0
        for _ in range(self.interval):
            actions, _ = self.policy.act(self._observation[:width].reshape(1, -1), latent,
                                         self.policy.action_noise(self._rng, 1))
            primitive = int(actions[0]) if self.policy.discrete else actions[0]
            result = self.base.step(primitive)
            total += float(result.reward)
            self._env_steps += 1
            self._observation = result.observation
            if result.done:
                break
        info = dict(result.info)
        info["env_steps"] = self._env_steps
        return StepResult(self._observation, total, result.terminated, result.truncated, info)

    def step(self, action) -> StepResult:
        return self.hrl_step(action)

    def snapshot(self) -> Dict[str, Any]:
        return {"base": self.base.snapshot(), "observation": self._observation, "env_steps": self._env_steps}

    def restore(self, snapshot: Dict[str, Any], rng: Optional[np.random.Generator] = None) -> None:
        self.base.restore(snapshot["base"], rng)
        self._rng = rng
        self._observation = snapshot["observation"]
        self._env_steps = int(snapshot["env_steps"])
