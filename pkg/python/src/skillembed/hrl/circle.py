"""Reacher whose goal travels around a circle once per episode.

The high-level observation is the arm observation followed by the goal
position and the current fingertip distance to it.
"""

import math
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from ..envs.base import StepResult
from ..envs.reacher import ReacherEnv, reacher_observation, reacher_reward, reacher_step

CIRCLE_RADIUS = 0.12
CIRCLE_PERIOD = 180
CIRCLE_MAX_STEPS = 180


def circle_goal(center: Sequence[float], radius: float, period: int, step: int) -> np.ndarray:
    angle = 2.0 * math.pi * step / period
    return np.array([center[0] + radius * math.cos(angle), center[1] + radius * math.sin(angle)])


class CircleGoalReacherEnv(ReacherEnv):
    """``info["mean_tracking_error"]`` averages the fingertip distance over the episode so far."""

    observation_dim = 11

    def __init__(self, link_lengths: Tuple[float, float], radius: float = CIRCLE_RADIUS,
                 period: int = CIRCLE_PERIOD, center: Tuple[float, float] = (0.0, 0.0),
                 max_steps: Optional[int] = None):
        self.radius = float(radius)
        self.period = int(period)
        self.center = (float(center[0]), float(center[1]))
        self._error_sum = 0.0
        super().__init__(link_lengths, tuple(self._goal(0)), max_steps or CIRCLE_MAX_STEPS)

    def _goal(self, step: int) -> np.ndarray:
        return circle_goal(self.center, self.radius, self.period, step)

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.goal = self._goal(0)
        self._error_sum = 0.0
        return super().reset(rng)

    def observe(self) -> np.ndarray:
        return np.concatenate([reacher_observation(self.state), self.goal, [self.distance()]])

    def step(self, action) -> StepResult:
        self.state, done = reacher_step(self.state, action, self.max_steps)
        self.goal = self._goal(self.state.steps)
        reward = reacher_reward(self.state, self.goal, action)
        tip = self.state.fingertip
        distance = self.distance()
        self._error_sum += distance
        info = {
            "distance": distance,
            "tracking_error": distance,
            "mean_tracking_error": self._error_sum / self.state.steps,
            "tip_x": float(tip[0]),
            "tip_y": float(tip[1]),
        }
        return StepResult(self.observe(), reward, False, done, info)

    def snapshot(self) -> Dict[str, Any]:
        snapshot = super().snapshot()
        snapshot["error_sum"] = self._error_sum
        return snapshot

    def restore(self, snapshot: Dict[str, Any], rng: Optional[np.random.Generator] = None) -> None:
        super().restore(snapshot, rng)
        self._error_sum = float(snapshot["error_sum"])
