"""Fully-connected networks over a flat ``ParamVector``.

Each layer contributes a weight block ``(fan_in, fan_out)`` followed by a bias
block ``(1, fan_out)``. Weights and biases start uniform in
``±1/sqrt(fan_in)``.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple, Union

import numpy as np

from ..errors import ConfigurationError
from . import autodiff as ad
from .autodiff import Node, ParamVector, Tape


class Activation(Enum):
    TANH = "tanh"
    RELU = "relu"


class OutputHead(Enum):
    LINEAR = "linear"
    SOFTMAX = "softmax"
    GAUSSIAN_TANH = "gaussian-tanh"


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_layers: Tuple[Tuple[int, Activation], ...]
    output_dim: int
    output_head: OutputHead = OutputHead.LINEAR

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigurationError(f"input and output dims must be positive: {self.input_dim}, {self.output_dim}")
        for width, activation in self.hidden_layers:
            if width < 1:
                raise ConfigurationError(f"hidden width must be positive, got {width}")
            if not isinstance(activation, Activation):
                raise ConfigurationError(f"unknown activation {activation!r}")
        if self.output_head is OutputHead.GAUSSIAN_TANH and self.output_dim % 2:
            raise ConfigurationError("gaussian-tanh head needs an even output dim (means and log stds)")

    @classmethod
    def uniform(cls, input_dim: int, width: int, depth: int, activation: Activation,
                output_dim: int, output_head: OutputHead = OutputHead.LINEAR) -> "MlpSpec":
        return cls(input_dim, tuple((width, activation) for _ in range(depth)), output_dim, output_head)

    @property
    def layer_dims(self) -> List[Tuple[int, int]]:
        widths = [self.input_dim] + [width for width, _ in self.hidden_layers] + [self.output_dim]
        return list(zip(widths[:-1], widths[1:]))

    def layer_shapes(self) -> List[Tuple[int, int]]:
        shapes = []
        for fan_in, fan_out in self.layer_dims:
            shapes += [(fan_in, fan_out), (1, fan_out)]
        return shapes

    @property
    def parameter_count(self) -> int:
        return sum(fan_in * fan_out + fan_out for fan_in, fan_out in self.layer_dims)


def init_params(spec: MlpSpec, rng: np.random.Generator, name: str = "mlp",
                output_scale: float = 1.0) -> ParamVector:
    """``output_scale`` shrinks the final layer, e.g. to start a policy near uniform."""
    blocks = []
    layers = spec.layer_dims
    for k, (fan_in, fan_out) in enumerate(layers):
        bound = 1.0 / math.sqrt(fan_in)
        scale = output_scale if k == len(layers) - 1 else 1.0
        blocks.append(scale * rng.uniform(-bound, bound, size=fan_in * fan_out))
        blocks.append(scale * rng.uniform(-bound, bound, size=fan_out))
    return ParamVector(spec.layer_shapes(), np.concatenate(blocks), name)


def _check(spec: MlpSpec, params: ParamVector, width: int) -> None:
    if len(params) != spec.parameter_count:
        raise ConfigurationError(f"{params.name}: {len(params)} parameters, network needs {spec.parameter_count}")
    if width != spec.input_dim:
        raise ConfigurationError(f"network expects input dim {spec.input_dim}, got {width}")


def mlp_forward(spec: MlpSpec, params: ParamVector, inputs: Union[Node, np.ndarray], tape: Tape) -> Node:
    """Taped forward pass returning the raw output layer."""
    x = tape.lift(inputs)
    _check(spec, params, x.shape[-1])
    flat = tape.param(params)
    offset = 0
    activations = [activation for _, activation in spec.hidden_layers]
    for k, (fan_in, fan_out) in enumerate(spec.layer_dims):
        weight = flat[offset:offset + fan_in * fan_out].reshape((fan_in, fan_out))
        offset += fan_in * fan_out
        bias = flat[offset:offset + fan_out]
        offset += fan_out
        x = x @ weight + bias
        if k < len(activations):
            x = ad.tanh(x) if activations[k] is Activation.TANH else ad.relu(x)
    return x


def mlp_eval(spec: MlpSpec, params: ParamVector, inputs: np.ndarray) -> np.ndarray:
    """The same arithmetic as ``mlp_forward`` without a tape."""
    x = np.asarray(inputs, dtype=np.float64)
    _check(spec, params, x.shape[-1])
    offset = 0
    activations = [activation for _, activation in spec.hidden_layers]
    for k, (fan_in, fan_out) in enumerate(spec.layer_dims):
        weight = params.values[offset:offset + fan_in * fan_out].reshape((fan_in, fan_out))
        offset += fan_in * fan_out
        bias = params.values[offset:offset + fan_out]
        offset += fan_out
        x = x @ weight + bias
        if k < len(activations):
            x = np.tanh(x) if activations[k] is Activation.TANH else np.maximum(x, 0.0)
    return x
