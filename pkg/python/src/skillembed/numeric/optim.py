from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np

from ..errors import DivergenceError
from .autodiff import ParamVector


class OptimizerKind(Enum):
    ADAM = "adam"
    SGD = "sgd"


@dataclass
class OptimizerState:
    kind: OptimizerKind = OptimizerKind.ADAM
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: Optional[np.ndarray] = None
    second_moment: Optional[np.ndarray] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "step_count": self.step_count,
            "first_moment": self.first_moment,
            "second_moment": self.second_moment,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "OptimizerState":
        return cls(
            kind=OptimizerKind(data["kind"]),
            beta1=data["beta1"],
            beta2=data["beta2"],
            epsilon=data["epsilon"],
            step_count=data["step_count"],
            first_moment=data["first_moment"],
            second_moment=data["second_moment"],
        )


def optimizer_step(params: ParamVector, learning_rate: float, state: OptimizerState) -> None:
    """Applies one update from ``params.grads`` in place, then zeroes the grads."""
    if not np.all(np.isfinite(params.grads)):
        raise DivergenceError(f"non-finite gradient in {params.name or 'parameters'}")
    if state.kind is OptimizerKind.SGD:
        params.values -= learning_rate * params.grads
    else:
        if state.first_moment is None:
            state.first_moment = np.zeros_like(params.values)
            state.second_moment = np.zeros_like(params.values)
        state.step_count += 1
        state.first_moment *= state.beta1
        state.first_moment += (1.0 - state.beta1) * params.grads
        state.second_moment *= state.beta2
        state.second_moment += (1.0 - state.beta2) * np.square(params.grads)
        m_hat = state.first_moment / (1.0 - state.beta1 ** state.step_count)
        v_hat = state.second_moment / (1.0 - state.beta2 ** state.step_count)
        params.values -= learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    if not np.all(np.isfinite(params.values)):
        raise DivergenceError(f"non-finite parameters in {params.name or 'parameters'} after update")
    params.zero_grad()
