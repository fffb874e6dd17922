"""Finite task grids with discrete latents.

Dynamics index ``i`` selects ``transitions[i]`` with shape ``(S, A, S)`` and
goal index ``j`` selects ``rewards[j]`` with shape ``(S, A)``. Latents are
discrete: ``q_z[i]`` and ``q_g[j]`` are distributions over ``z_count`` and
``g_count`` points, and a policy table has shape ``(S, z_count, g_count, A)``.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ConfigurationError

_TOLERANCE = 1e-9


def _inverse(alpha: float) -> float:
    return 0.0 if math.isinf(alpha) else 1.0 / alpha


def _check_distribution(name: str, values: np.ndarray) -> None:
    if np.any(values < 0.0) or not np.allclose(values.sum(axis=-1), 1.0, atol=_TOLERANCE):
        raise ConfigurationError(f"{name} must hold probability distributions along its last axis")


def _uniform(count: int) -> np.ndarray:
    return np.full(count, 1.0 / count)


@dataclass(frozen=True)
class TabularTemperatures:
    """Regularization temperatures; ``inf`` switches a regularizer off."""

    alpha_d: float = 1.0
    alpha_r: float = 1.0
    alpha_pi: float = 1.0

    def __post_init__(self):
        for name in ("alpha_d", "alpha_r", "alpha_pi"):
            if not getattr(self, name) > 0.0:
                raise ConfigurationError(f"{name} must be positive or inf, got {getattr(self, name)}")

    @property
    def inverse_d(self) -> float:
        return _inverse(self.alpha_d)

    @property
    def inverse_r(self) -> float:
        return _inverse(self.alpha_r)

    @property
    def inverse_pi(self) -> float:
        return _inverse(self.alpha_pi)


@dataclass
class TabularTaskMdp:
    """A grid of small MDPs sharing states and actions.

    ``action_prior`` of ``None`` is the improper uniform prior, ``log p(a) = 0``,
    which turns the policy regularizer into an entropy bonus. Index priors
    default to uniform.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    initial: np.ndarray
    gamma: float
    z_prior: np.ndarray
    g_prior: np.ndarray
    action_prior: Optional[np.ndarray] = None
    dynamics_prior: Optional[np.ndarray] = None
    goal_prior: Optional[np.ndarray] = None

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.initial = np.asarray(self.initial, dtype=np.float64)
        self.z_prior = np.asarray(self.z_prior, dtype=np.float64)
        self.g_prior = np.asarray(self.g_prior, dtype=np.float64)
        if self.transitions.ndim != 4 or self.transitions.shape[1] != self.transitions.shape[3]:
            raise ConfigurationError(f"transitions must have shape (I, S, A, S), got {self.transitions.shape}")
        _, states, actions, _ = self.transitions.shape
        if self.rewards.ndim != 3 or self.rewards.shape[1:] != (states, actions):
            raise ConfigurationError(f"rewards must have shape (J, {states}, {actions}), got {self.rewards.shape}")
        if self.initial.shape != (states,):
            raise ConfigurationError(f"initial distribution must have {states} entries, got {self.initial.shape}")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.dynamics_prior is None:
            self.dynamics_prior = _uniform(self.transitions.shape[0])
        if self.goal_prior is None:
            self.goal_prior = _uniform(self.rewards.shape[0])
        self.dynamics_prior = np.asarray(self.dynamics_prior, dtype=np.float64)
        self.goal_prior = np.asarray(self.goal_prior, dtype=np.float64)
        for name in ("transitions", "initial", "z_prior", "g_prior", "dynamics_prior", "goal_prior"):
            _check_distribution(name, getattr(self, name))
        if np.any(self.z_prior <= 0.0) or np.any(self.g_prior <= 0.0):
            raise ConfigurationError("latent priors must put mass on every point")
        if self.action_prior is not None:
            self.action_prior = np.asarray(self.action_prior, dtype=np.float64)
            if self.action_prior.shape != (actions,) or np.any(self.action_prior <= 0.0):
                raise ConfigurationError(f"action prior must be positive with {actions} entries")
            _check_distribution("action_prior", self.action_prior)

    @property
    def n_dynamics(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_goals(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[2]

    @property
    def z_count(self) -> int:
        return self.z_prior.size

    @property
    def g_count(self) -> int:
        return self.g_prior.size

    @property
    def log_action_prior(self) -> np.ndarray:
        if self.action_prior is None:
            return np.zeros(self.n_actions)
        return np.log(self.action_prior)

    def uniform_policy(self) -> np.ndarray:
        return np.full((self.n_states, self.z_count, self.g_count, self.n_actions), 1.0 / self.n_actions)

    def prior_embeddings(self):
        """``(q_z, q_g)`` equal to the latent priors for every index."""
        return (np.tile(self.z_prior, (self.n_dynamics, 1)), np.tile(self.g_prior, (self.n_goals, 1)))

    def check_tables(self, policy: np.ndarray, q_z: np.ndarray, q_g: np.ndarray) -> None:
        expected = (self.n_states, self.z_count, self.g_count, self.n_actions)
        if policy.shape != expected:
            raise ConfigurationError(f"policy table must have shape {expected}, got {policy.shape}")
        if q_z.shape != (self.n_dynamics, self.z_count) or q_g.shape != (self.n_goals, self.g_count):
            raise ConfigurationError(f"embedding tables have shapes {q_z.shape} and {q_g.shape}")
        for name, table in (("policy", policy), ("q_z", q_z), ("q_g", q_g)):
            _check_distribution(name, table)

    @classmethod
    def random(cls, rng: np.random.Generator, n_dynamics: int = 2, n_goals: int = 2, n_states: int = 3,
               n_actions: int = 2, z_count: int = 3, g_count: int = 3, gamma: float = 0.9) -> "TabularTaskMdp":
        transitions = rng.dirichlet(np.ones(n_states), size=(n_dynamics, n_states, n_actions))
        rewards = rng.normal(size=(n_goals, n_states, n_actions))
        return cls(transitions, rewards, _uniform(n_states), gamma, _uniform(z_count), _uniform(g_count))
