from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

Cell = Tuple[int, int]


@dataclass(frozen=True)
class Transition:
    i: int
    j: int
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass
class Trajectory:
    """One episode of task (i, j).

    Latents are stored as the noise realizations that produced them, one row
    per step, so the taped loss can rebuild them from the current embedding
    parameters. ``terminated`` is false for episodes cut by the step limit.
    """

    i: int
    j: int
    states: List[np.ndarray] = field(default_factory=list)
    actions: List[np.ndarray] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)
    z_noise: List[np.ndarray] = field(default_factory=list)
    g_noise: List[np.ndarray] = field(default_factory=list)
    infos: List[Dict[str, float]] = field(default_factory=list)
    terminated: bool = False

    @property
    def cell(self) -> Cell:
        return (self.i, self.j)

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def total_reward(self) -> float:
        return float(np.sum(self.rewards))

    def final_info(self) -> Dict[str, float]:
        return self.infos[-1] if self.infos else {}
