"""Per-task twin Q-networks, value network and target value network."""

from dataclasses import dataclass
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from ..envs.trajectory import Cell
from ..errors import ConfigurationError
from ..numeric import autodiff as ad
from ..numeric.autodiff import Node, ParamVector, Tape
from ..numeric.mlp import Activation, MlpSpec, init_params, mlp_eval, mlp_forward


@dataclass
class CriticSet:
    """Twin Q-networks, a value network and its slow target for one cell."""

    q_spec: MlpSpec
    v_spec: MlpSpec
    q1: ParamVector
    q2: ParamVector
    v: ParamVector
    v_target: ParamVector

    @classmethod
    def create(cls, state_dim: int, action_dim: int, width: int, depth: int, activation: Activation,
               rng: np.random.Generator, cell: Cell) -> "CriticSet":
        """Initializes all four networks; the target starts as a copy of ``v``.

        Args:
            state_dim: Observation size.
            action_dim: Action size; the Q-networks read ``[s, a]``.
            width: Hidden units per layer.
            depth: Hidden layer count.
            activation: Hidden activation.
            rng: Initialization draws.
            cell: Tags the parameter vector names.

        Returns:
            The critic set.
        """
        q_spec = MlpSpec.uniform(state_dim + action_dim, width, depth, activation, 1)
        v_spec = MlpSpec.uniform(state_dim, width, depth, activation, 1)
        tag = f"[{cell[0]},{cell[1]}]"
        q1 = init_params(q_spec, rng, "q1" + tag)
        q2 = init_params(q_spec, rng, "q2" + tag)
        v = init_params(v_spec, rng, "v" + tag)
        return cls(q_spec, v_spec, q1, q2, v, v.copy("v_target" + tag))

    def parameter_vectors(self) -> List[ParamVector]:
        return [self.q1, self.q2, self.v, self.v_target]

    def q_nodes(self, tape: Tape, states: np.ndarray, actions: Union[Node, np.ndarray]) -> Tuple[Node, Node]:
        """Both Q estimates on the tape; ``actions`` may be taped for the policy path."""
        inputs = ad.concat([np.asarray(states, dtype=np.float64), tape.lift(actions)], axis=-1)
        return (mlp_forward(self.q_spec, self.q1, inputs, tape)[:, 0],
                mlp_forward(self.q_spec, self.q2, inputs, tape)[:, 0])

    def q_min_value(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Elementwise minimum of the twins, off the tape."""
        inputs = np.concatenate([states, actions], axis=-1)
        return np.minimum(mlp_eval(self.q_spec, self.q1, inputs)[:, 0], mlp_eval(self.q_spec, self.q2, inputs)[:, 0])

    def value_node(self, tape: Tape, states: np.ndarray) -> Node:
        return mlp_forward(self.v_spec, self.v, states, tape)[:, 0]

    def target_value(self, states: np.ndarray) -> np.ndarray:
        return mlp_eval(self.v_spec, self.v_target, states)[:, 0]

    def to_dict(self) -> Dict[str, Any]:
        return {name: pv.values.copy() for name, pv in zip(("q1", "q2", "v", "v_target"), self.parameter_vectors())}

    def load_dict(self, data: Dict[str, Any]) -> None:
        for name, pv in zip(("q1", "q2", "v", "v_target"), self.parameter_vectors()):
            pv.assign(data[name])


def soft_update(critics: CriticSet, tau: float) -> None:
    """``target <- tau * v + (1 - tau) * target``.

    Args:
        critics: Critic set whose target is blended in place.
        tau: Blend rate, in (0, 1].

    Raises:
        ConfigurationError: If ``tau`` is out of range.
    """
    if not 0.0 < tau <= 1.0:
        raise ConfigurationError(f"tau must lie in (0, 1], got {tau}")
    critics.v_target.values *= 1.0 - tau
    critics.v_target.values += tau * critics.v.values
