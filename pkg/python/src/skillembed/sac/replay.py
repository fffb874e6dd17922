"""Per-task FIFO replay memory."""

from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from ..errors import ConfigurationError, UsageError

INITIAL_ALLOCATION = 1024


@dataclass
class ReplayBatch:
    """Row-aligned arrays of sampled transitions."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return self.rewards.size


class ReplayMemory:
    """Ring buffer of transitions; storage grows on demand up to ``capacity``."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int) -> None:
        if capacity < 1:
            raise ConfigurationError(f"replay capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.state_dim = state_dim
        self.action_dim = action_dim
        self._size = 0
        self._next = 0
        self._allocate(min(capacity, INITIAL_ALLOCATION))

    def _allocate(self, rows: int) -> None:
        old = getattr(self, "_states", None)
        fresh = {
            "_states": np.zeros((rows, self.state_dim)),
            "_actions": np.zeros((rows, self.action_dim)),
            "_rewards": np.zeros(rows),
            "_next_states": np.zeros((rows, self.state_dim)),
            "_dones": np.zeros(rows, dtype=bool),
        }
        if old is not None:
            for name, array in fresh.items():
                array[:self._size] = getattr(self, name)[:self._size]
        for name, array in fresh.items():
            setattr(self, name, array)

    def __len__(self) -> int:
        return self._size

    def add(self, state: np.ndarray, action: np.ndarray, reward: float, next_state: np.ndarray, done: bool) -> None:
        """Stores one transition, overwriting the oldest once full."""
        if self._next >= self._rewards.size and self._rewards.size < self.capacity:
            self._allocate(min(self.capacity, 2 * self._rewards.size))
        k = self._next
        self._states[k] = state
        self._actions[k] = np.asarray(action, dtype=np.float64).reshape(self.action_dim)
        self._rewards[k] = reward
        self._next_states[k] = next_state
        self._dones[k] = done
        self._next = (k + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> ReplayBatch:
        """Uniform draw without replacement of ``min(batch_size, len(self))`` transitions.

        Args:
            batch_size: Transitions wanted.
            rng: Draws the indices.

        Returns:
            The sampled transitions.

        Raises:
            UsageError: If the memory is empty.
        """
        if self._size == 0:
            raise UsageError("cannot sample from an empty replay memory")
        picks = rng.choice(self._size, size=min(batch_size, self._size), replace=False)
        return ReplayBatch(self._states[picks], self._actions[picks], self._rewards[picks],
                           self._next_states[picks], self._dones[picks])

    def to_dict(self) -> Dict[str, Any]:
        n = self._size
        return {
            "capacity": self.capacity,
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "next": self._next,
            "states": self._states[:n].copy(),
            "actions": self._actions[:n].copy(),
            "rewards": self._rewards[:n].copy(),
            "next_states": self._next_states[:n].copy(),
            "dones": self._dones[:n].astype(np.int64),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ReplayMemory":
        memory = cls(int(data["capacity"]), int(data["state_dim"]), int(data["action_dim"]))
        n = len(data["rewards"])
        memory._allocate(max(n, min(memory.capacity, INITIAL_ALLOCATION)))
        memory._states[:n] = data["states"]
        memory._actions[:n] = data["actions"]
        memory._rewards[:n] = data["rewards"]
        memory._next_states[:n] = data["next_states"]
        memory._dones[:n] = np.asarray(data["dones"]).astype(bool)
        memory._size = n
        memory._next = int(data["next"])
        return memory
