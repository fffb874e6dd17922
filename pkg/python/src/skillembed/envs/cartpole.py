"""Cart-pole with variable cart mass and a goal position for the pole tip.

Physics follow the classic control formulation: explicit Euler at 50 Hz, two
discrete actions pushing the cart left or right with a fixed force.
"""

import math
from dataclasses import astuple, dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..errors import UsageError
from .base import Environment, StepResult

GRAVITY = 9.8
POLE_MASS = 0.1
POLE_HALF_LENGTH = 0.5
POLE_LENGTH = 2.0 * POLE_HALF_LENGTH
FORCE_MAG = 10.0
TAU = 0.02
THETA_LIMIT = 12.0 * 2.0 * math.pi / 360.0
X_LIMIT = 2.4
MAX_STEPS = 300
INITIAL_SPREAD = 0.05


@dataclass(frozen=True)
class CartpoleState:
    x: float
    x_dot: float
    theta: float
    theta_dot: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @property
    def tip_x(self) -> float:
        return self.x + POLE_LENGTH * math.sin(self.theta)

    def out_of_bounds(self) -> bool:
        return abs(self.theta) > THETA_LIMIT or abs(self.x) > X_LIMIT


def cartpole_step(state: CartpoleState, action: int, mass_cart: float) -> Tuple[CartpoleState, bool]:
    """Advances one control step; returns the new state and whether it failed."""
    if action not in (0, 1):
        raise UsageError(f"cart-pole action must be 0 or 1, got {action!r}")
    force = FORCE_MAG if action == 1 else -FORCE_MAG
    total_mass = mass_cart + POLE_MASS
    polemass_length = POLE_MASS * POLE_HALF_LENGTH
    cos_theta = math.cos(state.theta)
    sin_theta = math.sin(state.theta)
    temp = (force + polemass_length * state.theta_dot ** 2 * sin_theta) / total_mass
    theta_acc = (GRAVITY * sin_theta - cos_theta * temp) / (
        POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos_theta ** 2 / total_mass))
    x_acc = temp - polemass_length * theta_acc * cos_theta / total_mass
    successor = CartpoleState(
        x=state.x + TAU * state.x_dot,
        x_dot=state.x_dot + TAU * x_acc,
        theta=state.theta + TAU * state.theta_dot,
        theta_dot=state.theta_dot + TAU * theta_acc,
    )
    return successor, successor.out_of_bounds()


def cartpole_reward(state: CartpoleState, x_goal: float) -> float:
    """Shaped reward for holding the pole tip over ``x_goal``; zero once failed."""
    if state.out_of_bounds():
        return 0.0
    return max(0.0, 1.0 - abs(state.tip_x - x_goal) / X_LIMIT)


class CartpoleEnv(Environment):
    observation_dim = 4
    n_actions = 2

    def __init__(self, mass_cart: float, x_goal: float, max_steps: Optional[int] = None):
        self.mass_cart = float(mass_cart)
        self.x_goal = float(x_goal)
        self.max_steps = max_steps or MAX_STEPS
        self.state = CartpoleState(0.0, 0.0, 0.0, 0.0)
        self.steps = 0

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = CartpoleState(*rng.uniform(-INITIAL_SPREAD, INITIAL_SPREAD, size=4))
        self.steps = 0
        return self.state.as_array()

    def step(self, action) -> StepResult:
        self.state, failed = cartpole_step(self.state, int(action), self.mass_cart)
        self.steps += 1
        reward = cartpole_reward(self.state, self.x_goal)
        info = {"tip_x": self.state.tip_x, "distance": abs(self.state.tip_x - self.x_goal)}
        return StepResult(self.state.as_array(), reward, failed, not failed and self.steps >= self.max_steps, info)

    def snapshot(self) -> Dict[str, Any]:
        return {"state": list(astuple(self.state)), "steps": self.steps}

    def restore(self, snapshot: Dict[str, Any], rng: Optional[np.random.Generator] = None) -> None:
        self.state = CartpoleState(*snapshot["state"])
        self.steps = snapshot["steps"]
