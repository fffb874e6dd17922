from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool
    info: Dict[str, float] = field(default_factory=dict)

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated


class Environment(ABC):
    """A resettable episodic task.

    Discrete environments set ``n_actions``; continuous ones set
    ``action_dim`` and accept actions in ``[-1, 1]``.
    """

    observation_dim: int
    action_dim: int = 1
    n_actions: Optional[int] = None
    max_steps: int

    @property
    def discrete(self) -> bool:
        return self.n_actions is not None

    @abstractmethod
    def reset(self, rng: np.random.Generator) -> np.ndarray:
        ...

    @abstractmethod
    def step(self, action) -> StepResult:
        ...

    @abstractmethod
    def snapshot(self) -> Dict[str, Any]:
        """Everything needed to resume this episode exactly."""

    @abstractmethod
    def restore(self, snapshot: Dict[str, Any], rng: Optional[np.random.Generator] = None) -> None:
        ...
