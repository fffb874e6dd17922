"""Task environments and the task grid.

Cart-pole with variable cart mass and goal, the asteroid-dodging cart-pole used
for hierarchical control, and a planar two-link reacher.
"""

from .asteroid import AsteroidCartpoleEnv, AsteroidKind, asteroid_step
from .base import Environment, StepResult
from .cartpole import CartpoleEnv, CartpoleState, cartpole_reward, cartpole_step
from .grid import EnvFamily, GridMask, TaskGrid, build_task_grid, make_env
from .reacher import ReacherEnv, ReacherState, reacher_reward, reacher_step
from .trajectory import Cell, Trajectory, Transition

__all__ = [
    "AsteroidCartpoleEnv",
    "AsteroidKind",
    "CartpoleEnv",
    "CartpoleState",
    "Cell",
    "EnvFamily",
    "Environment",
    "GridMask",
    "ReacherEnv",
    "ReacherState",
    "StepResult",
    "TaskGrid",
    "Trajectory",
    "Transition",
    "asteroid_step",
    "build_task_grid",
    "cartpole_reward",
    "cartpole_step",
    "make_env",
    "reacher_reward",
    "reacher_step",
]
