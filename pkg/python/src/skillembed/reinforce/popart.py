"""Per-task adaptive return standardization.

Only the normalizing half of Pop-Art is needed: no value head reads the
statistics, so there are no outputs to preserve. Moments follow the
per-target recurrence, one update for every return in the batch.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Hashable, Tuple

import numpy as np

from ..errors import ConfigurationError, UsageError

SIGMA_MIN = 1e-4


@dataclass
class PopArtState:
    """Running first and second moments of the returns, keyed by task.

    Attributes:
        beta: Step size of the moment recurrence, in [0, 1].
        sigma_min: Floor on the standard deviation used to divide.
        initial_first: First moment of a task seen for the first time.
        initial_second: Second moment of a task seen for the first time.
        moments: ``(mu, nu)`` per task.
    """

    beta: float = 0.02
    sigma_min: float = SIGMA_MIN
    initial_first: float = 0.0
    initial_second: float = 1.0
    moments: Dict[Hashable, Tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigurationError(f"pop-art step size must lie in [0, 1], got {self.beta}")

    def statistics(self, task: Hashable) -> Tuple[float, float]:
        """Current standardization statistics of a task.

        Args:
            task: Task key, usually an ``(i, j)`` cell.

        Returns:
            ``(mu, sigma)``; the initial moments for an unseen task.
        """
        mu, nu = self.moments.get(task, (self.initial_first, self.initial_second))
        return mu, self._sigma(mu, nu)

    def update(self, task: Hashable, returns: np.ndarray) -> Tuple[float, float]:
        """Feeds ``returns`` in order through the moment recurrence of ``task``.

        Args:
            task: Task key.
            returns: Targets, applied first to last.

        Returns:
            The updated ``(mu, nu)``.
        """
        mu, nu = self.moments.get(task, (self.initial_first, self.initial_second))
        keep = 1.0 - self.beta
        for y in np.asarray(returns, dtype=np.float64).ravel():
            mu = keep * mu + self.beta * float(y)
            nu = keep * nu + self.beta * float(y) * float(y)
        self.moments[task] = (mu, nu)
        return mu, nu

    def _sigma(self, mu: float, nu: float) -> float:
        return math.sqrt(max(nu - mu * mu, self.sigma_min ** 2))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "beta": self.beta,
            "sigma_min": self.sigma_min,
            "tasks": [list(task) if isinstance(task, tuple) else task for task in self.moments],
            "moments": [list(value) for value in self.moments.values()],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PopArtState":
        moments = {
            (tuple(task) if isinstance(task, list) else task): (float(mu), float(nu))
            for task, (mu, nu) in zip(data["tasks"], data["moments"])
        }
        return cls(beta=data["beta"], sigma_min=data["sigma_min"], moments=moments)


def popart_normalize(pop: PopArtState, returns: np.ndarray, task: Hashable) -> np.ndarray:
    """Updates ``task``'s moments with every return, then standardizes the batch.

    For each ``y``: ``mu <- (1 - beta) mu + beta y`` and
    ``nu <- (1 - beta) nu + beta y^2``. The whole batch is divided with
    the post-update statistics.

    Args:
        pop: Moment state, updated in place.
        returns: Raw returns of one task.
        task: Task key.

    Returns:
        ``(y - mu) / sigma`` for every return, with ``sigma`` floored at ``sigma_min``.

    Raises:
        UsageError: If ``returns`` is empty.
    """
    returns = np.asarray(returns, dtype=np.float64)
    if returns.size == 0:
        raise UsageError("pop-art needs at least one return")
    mu, nu = pop.update(task, returns)
    return (returns - mu) / pop._sigma(mu, nu)
