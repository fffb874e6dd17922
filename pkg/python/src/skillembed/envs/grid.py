"""The I x J task grid: one dynamics parameter per row, one goal per column."""

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

from ..errors import ConfigurationError, UsageError
from .base import Environment
from .cartpole import CartpoleEnv
from .reacher import ReacherEnv
from .trajectory import Cell

CARTPOLE_MASSES = (0.2, 1.0, 2.0)
CARTPOLE_GOALS = (-1.0, 0.0, 1.0)
REACHER_TOTAL_LENGTH = 0.2
REACHER_GOAL_RADIUS = 0.15
REACHER_GOAL_ANGLES = (90.0, 210.0, 330.0)
REACHER_SQUARE_HALF_SIDE = 0.1


class EnvFamily(Enum):
    """Grid families: which environment and which dynamics and goal values."""

    CARTPOLE_3X3 = "cartpole3x3"
    REACHER_3X3 = "reacher3x3"
    REACHER_2X4 = "reacher2x4"

    @property
    def is_cartpole(self) -> bool:
        return self is EnvFamily.CARTPOLE_3X3


class GridMask(Enum):
    """Which cells of a 3 x 3 grid are trained; the rest are held out."""

    FULL = "full"
    SIX_THREE = "six-three"
    FOUR_FIVE = "four-five"


FOUR_FIVE_TRAINED = ((0, 2), (1, 2), (2, 0), (2, 1))


def _split(first: float) -> Tuple[float, float]:
    return (REACHER_TOTAL_LENGTH * first, REACHER_TOTAL_LENGTH * (1.0 - first))


def _family_params(family: EnvFamily):
    if family is EnvFamily.CARTPOLE_3X3:
        return tuple((m,) for m in CARTPOLE_MASSES), tuple((x,) for x in CARTPOLE_GOALS)
    if family is EnvFamily.REACHER_3X3:
        dynamics = (_split(1.0 / 2.0), _split(1.0 / 3.0), _split(2.0 / 3.0))
        goals = tuple(
            (REACHER_GOAL_RADIUS * math.cos(math.radians(a)), REACHER_GOAL_RADIUS * math.sin(math.radians(a)))
            for a in REACHER_GOAL_ANGLES
        )
        return dynamics, goals
    half = REACHER_SQUARE_HALF_SIDE
    dynamics = (_split(1.0 / 3.0), _split(2.0 / 3.0))
    goals = ((half, half), (-half, half), (-half, -half), (half, -half))
    return dynamics, goals


def make_env(family: EnvFamily, dynamics: Sequence[float], goal: Sequence[float],
             max_steps: Optional[int] = None) -> Environment:
    """Builds one environment of a family from explicit parameters.

    Args:
        family: Environment family.
        dynamics: One cart mass, or two reacher link lengths.
        goal: One tip position, or a 2-D reacher goal.
        max_steps: Episode step limit; the family default when None.

    Returns:
        A fresh environment, not yet reset.

    Raises:
        ConfigurationError: If the parameter counts do not fit the family.
    """
    if family.is_cartpole:
        if len(dynamics) != 1 or len(goal) != 1:
            raise ConfigurationError(f"cart-pole takes one mass and one goal, got {dynamics} and {goal}")
        return CartpoleEnv(dynamics[0], goal[0], max_steps)
    if len(dynamics) != 2 or len(goal) != 2:
        raise ConfigurationError(f"reacher takes two link lengths and a 2-D goal, got {dynamics} and {goal}")
    return ReacherEnv((dynamics[0], dynamics[1]), (goal[0], goal[1]), max_steps)


@dataclass(frozen=True)
class TaskGrid:
    """Dynamics values by row, goal values by column and the trained-cell mask.

    Attributes:
        family: Environment family every cell builds.
        dynamics_params: One parameter tuple per row ``i``.
        goal_params: One parameter tuple per column ``j``.
        train_mask: ``train_mask[i][j]`` is True for trained cells.
    """

    family: EnvFamily
    dynamics_params: Tuple[Tuple[float, ...], ...]
    goal_params: Tuple[Tuple[float, ...], ...]
    train_mask: Tuple[Tuple[bool, ...], ...]

    def __post_init__(self):
        rows, cols = self.shape
        if len(self.train_mask) != rows or any(len(row) != cols for row in self.train_mask):
            raise ConfigurationError(f"train mask does not match a {rows}x{cols} grid")

    @classmethod
    def single(cls, family: EnvFamily, dynamics: Sequence[float], goal: Sequence[float]) -> "TaskGrid":
        """A 1 x 1 grid for one (possibly unseen) condition."""
        return cls(family, (tuple(float(d) for d in dynamics),), (tuple(float(g) for g in goal),), ((True,),))

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.dynamics_params), len(self.goal_params)

    def cells(self) -> List[Cell]:
        rows, cols = self.shape
        return [(i, j) for i in range(rows) for j in range(cols)]

    def is_trained(self, i: int, j: int) -> bool:
        return self.train_mask[i][j]

    def trained_cells(self) -> List[Cell]:
        return [cell for cell in self.cells() if self.is_trained(*cell)]

    def heldout_cells(self) -> List[Cell]:
        return [cell for cell in self.cells() if not self.is_trained(*cell)]

    def with_trained(self, cells: Sequence[Cell]) -> "TaskGrid":
        """The same grid trained on exactly ``cells``.

        Args:
            cells: ``(i, j)`` pairs to train.

        Returns:
            A new grid; this one is unchanged.

        Raises:
            ConfigurationError: If a cell lies outside the grid.
        """
        rows, cols = self.shape
        wanted = {tuple(cell) for cell in cells}
        for i, j in wanted:
            if not (0 <= i < rows and 0 <= j < cols):
                raise ConfigurationError(f"cell ({i}, {j}) outside the {rows}x{cols} grid")
        mask = tuple(tuple((i, j) in wanted for j in range(cols)) for i in range(rows))
        return TaskGrid(self.family, self.dynamics_params, self.goal_params, mask)

    def sub_grid(self, i: int, j: int) -> "TaskGrid":
        """The one-cell grid of ``(i, j)``."""
        return TaskGrid.single(self.family, self.dynamics_params[i], self.goal_params[j])

    def make_env(self, i: int, j: int, max_steps: Optional[int] = None) -> Environment:
        """Builds the environment of cell ``(i, j)``.

        Args:
            i: Dynamics row.
            j: Goal column.
            max_steps: Episode step limit; the family default when None.

        Returns:
            A fresh environment with row ``i``'s dynamics and column ``j``'s goal.

        Raises:
            UsageError: If the cell lies outside the grid.
        """
        rows, cols = self.shape
        if not (0 <= i < rows and 0 <= j < cols):
            raise UsageError(f"cell ({i}, {j}) outside the {rows}x{cols} grid")
        return make_env(self.family, self.dynamics_params[i], self.goal_params[j], max_steps)


def build_task_grid(family: Union[EnvFamily, str], mask: Union[GridMask, str] = GridMask.FULL) -> TaskGrid:
    """Builds a named grid family with a training mask.

    ``six-three`` holds out the diagonal. ``four-five`` trains
    ``FOUR_FIVE_TRAINED`` and holds out the other five cells.

    Args:
        family: ``cartpole3x3``, ``reacher3x3`` or ``reacher2x4``.
        mask: ``full``, ``six-three`` or ``four-five``.

    Returns:
        The grid with its trained cells set.

    Raises:
        ConfigurationError: On an unknown family or mask, or a partial mask on a non-3x3 grid.
    """
    try:
        family = EnvFamily(family)
        mask = GridMask(mask)
    except ValueError as e:
        raise ConfigurationError(str(e)) from e
    dynamics, goals = _family_params(family)
    rows, cols = len(dynamics), len(goals)
    if mask is not GridMask.FULL and (rows, cols) != (3, 3):
        raise ConfigurationError(f"mask {mask.value} needs a 3x3 grid, {family.value} is {rows}x{cols}")
    if mask is GridMask.FULL:
        trained = [(i, j) for i in range(rows) for j in range(cols)]
    elif mask is GridMask.SIX_THREE:
        trained = [(i, j) for i in range(rows) for j in range(cols) if i != j]
    else:
        trained = list(FOUR_FIVE_TRAINED)
    grid = TaskGrid(family, dynamics, goals, tuple(tuple(False for _ in range(cols)) for _ in range(rows)))
    return grid.with_trained(trained)
