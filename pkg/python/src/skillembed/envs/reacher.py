"""Planar two-link arm reaching for a goal hidden from the observation.

Each joint is a damped double integrator driven by a torque in ``[-1, 1]``.
Episodes end only on the step limit.
"""

import math
from dataclasses import astuple, dataclass, replace
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .base import Environment, StepResult

GAIN = 1.0
DAMPING = 1.0
DT = 0.05
MAX_STEPS = 100
TORQUE_COST = 0.01
BONUS_RADIUS = 0.02
BONUS = 1.0
INITIAL_SPREAD = 0.1


def wrap_angle(angle: float) -> float:
    """Maps an angle into (-pi, pi]."""
    return math.pi - (math.pi - angle) % (2.0 * math.pi)


def fingertip(q1: float, q2: float, l1: float, l2: float) -> np.ndarray:
    return np.array([
        l1 * math.cos(q1) + l2 * math.cos(q1 + q2),
        l1 * math.sin(q1) + l2 * math.sin(q1 + q2),
    ])


@dataclass(frozen=True)
class ReacherState:
    q1: float
    q2: float
    q1_dot: float
    q2_dot: float
    l1: float
    l2: float
    steps: int = 0

    @property
    def fingertip(self) -> np.ndarray:
        return fingertip(self.q1, self.q2, self.l1, self.l2)


def reacher_step(state: ReacherState, torque, max_steps: int = MAX_STEPS) -> Tuple[ReacherState, bool]:
    torque = np.clip(np.asarray(torque, dtype=np.float64).reshape(2), -1.0, 1.0)
    q1_acc = GAIN * torque[0] - DAMPING * state.q1_dot
    q2_acc = GAIN * torque[1] - DAMPING * state.q2_dot
    successor = replace(
        state,
        q1=wrap_angle(state.q1 + DT * state.q1_dot),
        q2=wrap_angle(state.q2 + DT * state.q2_dot),
        q1_dot=state.q1_dot + DT * q1_acc,
        q2_dot=state.q2_dot + DT * q2_acc,
        steps=state.steps + 1,
    )
    return successor, successor.steps >= max_steps


def reacher_reward(state: ReacherState, goal, torque) -> float:
    torque = np.clip(np.asarray(torque, dtype=np.float64).reshape(2), -1.0, 1.0)
    distance = float(np.linalg.norm(state.fingertip - np.asarray(goal, dtype=np.float64)))
    bonus = BONUS if distance < BONUS_RADIUS else 0.0
    return -distance - TORQUE_COST * float(np.dot(torque, torque)) + bonus


def reacher_observation(state: ReacherState) -> np.ndarray:
    tip = state.fingertip
    return np.array([
        math.cos(state.q1), math.sin(state.q1), math.cos(state.q2), math.sin(state.q2),
        state.q1_dot, state.q2_dot, tip[0], tip[1],
    ])


class ReacherEnv(Environment):
    observation_dim = 8
    action_dim = 2

    def __init__(self, link_lengths: Tuple[float, float], goal: Tuple[float, float],
                 max_steps: Optional[int] = None):
        self.link_lengths = (float(link_lengths[0]), float(link_lengths[1]))
        self.goal = np.asarray(goal, dtype=np.float64)
        self.max_steps = max_steps or MAX_STEPS
        self.state = ReacherState(0.0, 0.0, 0.0, 0.0, *self.link_lengths)

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        q1, q2 = rng.uniform(-INITIAL_SPREAD, INITIAL_SPREAD, size=2)
        self.state = ReacherState(float(q1), float(q2), 0.0, 0.0, *self.link_lengths)
        return self.observe()

    def observe(self) -> np.ndarray:
        return reacher_observation(self.state)

    def distance(self) -> float:
        return float(np.linalg.norm(self.state.fingertip - self.goal))

    def step(self, action) -> StepResult:
        self.state, done = reacher_step(self.state, action, self.max_steps)
        reward = reacher_reward(self.state, self.goal, action)
        tip = self.state.fingertip
        info = {"distance": self.distance(), "tip_x": float(tip[0]), "tip_y": float(tip[1])}
        return StepResult(self.observe(), reward, False, done, info)

    def snapshot(self) -> Dict[str, Any]:
        return {"state": list(astuple(self.state)), "goal": self.goal.copy()}

    def restore(self, snapshot: Dict[str, Any], rng: Optional[np.random.Generator] = None) -> None:
        self.state = ReacherState(*snapshot["state"])
        self.goal = np.asarray(snapshot["goal"], dtype=np.float64)
