"""Cart-pole that must also dodge falling asteroids.

Every surviving step pays +1. An asteroid that reaches the ground respawns at
the top; random-x asteroids pick a fresh horizontal position from the episode
generator, tracking asteroids respawn straight above the cart.
"""

from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..errors import ConfigurationError
from .base import Environment, StepResult
from .cartpole import INITIAL_SPREAD, TAU, X_LIMIT, CartpoleState, cartpole_step

ARENA_HEIGHT = 2.0
FALL_SPEED = 0.5
COLLISION_HALF_WIDTH = 0.3
COLLISION_HEIGHT = 0.15
MAX_STEPS = 2000
CART_MASS = 1.0
_GROUND_TOLERANCE = 1e-9


class AsteroidKind(IntEnum):
    RANDOM_X = 1
    ABOVE_CART = 2


@dataclass(frozen=True)
class Asteroid:
    x: float
    y: float
    kind: AsteroidKind


@dataclass(frozen=True)
class AsteroidState:
    cartpole: CartpoleState
    asteroids: Tuple[Asteroid, ...]
    steps: int = 0


def _spawn_x(kind: AsteroidKind, cart_x: float, rng: np.random.Generator) -> float:
    if kind is AsteroidKind.RANDOM_X:
        return float(rng.uniform(-X_LIMIT, X_LIMIT))
    return cart_x


def asteroid_step(state: AsteroidState, action: int, rng: np.random.Generator,
                  max_steps: int = MAX_STEPS) -> Tuple[AsteroidState, float, bool, bool]:
    """Returns the successor, the reward, whether the episode failed and whether it timed out."""
    cartpole, failed = cartpole_step(state.cartpole, action, CART_MASS)
    moved = []
    collided = False
    for asteroid in state.asteroids:
        y = asteroid.y - FALL_SPEED * TAU
        if y <= _GROUND_TOLERANCE:
            moved.append(Asteroid(_spawn_x(asteroid.kind, cartpole.x, rng), ARENA_HEIGHT, asteroid.kind))
            continue
        if abs(asteroid.x - cartpole.x) < COLLISION_HALF_WIDTH and y < COLLISION_HEIGHT:
            collided = True
        moved.append(replace(asteroid, y=y))
    steps = state.steps + 1
    terminated = failed or collided
    reward = 0.0 if terminated else 1.0
    return AsteroidState(cartpole, tuple(moved), steps), reward, terminated, not terminated and steps >= max_steps


class AsteroidCartpoleEnv(Environment):
    n_actions = 2

    def __init__(self, kinds: Tuple[AsteroidKind, ...] = (AsteroidKind.RANDOM_X,),
                 max_steps: Optional[int] = None):
        if not kinds:
            raise ConfigurationError("asteroid cart-pole needs at least one asteroid")
        self.kinds = tuple(AsteroidKind(kind) for kind in kinds)
        self.observation_dim = 4 + 2 * len(self.kinds)
        self.max_steps = max_steps or MAX_STEPS
        self.state: Optional[AsteroidState] = None
        self._rng: Optional[np.random.Generator] = None

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._rng = rng
        cartpole = CartpoleState(*rng.uniform(-INITIAL_SPREAD, INITIAL_SPREAD, size=4))
        asteroids = tuple(
            Asteroid(_spawn_x(kind, cartpole.x, rng), ARENA_HEIGHT * (1.0 - k / len(self.kinds)), kind)
            for k, kind in enumerate(self.kinds)
        )
        self.state = AsteroidState(cartpole, asteroids)
        return self.observe()

    def observe(self) -> np.ndarray:
        parts = [self.state.cartpole.as_array()]
        parts += [np.array([a.x, a.y]) for a in self.state.asteroids]
        return np.concatenate(parts)

    def step(self, action) -> StepResult:
        self.state, reward, terminated, truncated = asteroid_step(self.state, int(action), self._rng, self.max_steps)
        info = {"tip_x": self.state.cartpole.tip_x}
        return StepResult(self.observe(), reward, terminated, truncated, info)

    def snapshot(self) -> Dict[str, Any]:
        cp = self.state.cartpole
        return {
            "cartpole": [cp.x, cp.x_dot, cp.theta, cp.theta_dot],
            "asteroids": [[a.x, a.y, int(a.kind)] for a in self.state.asteroids],
            "steps": self.state.steps,
        }

    def restore(self, snapshot: Dict[str, Any], rng: Optional[np.random.Generator] = None) -> None:
        self._rng = rng
        asteroids = tuple(Asteroid(x, y, AsteroidKind(kind)) for x, y, kind in snapshot["asteroids"])
        self.state = AsteroidState(CartpoleState(*snapshot["cartpole"]), asteroids, snapshot["steps"])
