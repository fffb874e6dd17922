"""The shared latent-conditioned policy pi(a | s, z, g)."""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Tuple, Union

import numpy as np

from .errors import ConfigurationError
from .numeric import autodiff as ad
from .numeric.autodiff import Node, ParamVector, Tape
from .numeric.heads import (categorical_log_prob, gaussian_tanh_head, gaussian_tanh_log_prob, gaussian_tanh_sample,
                            sample_categorical, softmax)
from .numeric.mlp import Activation, MlpSpec, OutputHead, init_params, mlp_eval, mlp_forward

POLICY_OUTPUT_SCALE = 0.1


class PolicyInput(Enum):
    """Policy input features: ``[s, latent]``, optionally with the flattened ``s x latent`` product."""

    CONCAT = "concat"
    CONCAT_OUTER = "concat-outer"


def policy_input_dim(state_dim: int, latent_dim: int, features: PolicyInput) -> int:
    """Width of the policy's first layer.

    Args:
        state_dim: Observation size.
        latent_dim: Latent size.
        features: Input feature layout.

    Returns:
        ``s + d``, plus ``s * d`` with the outer product.
    """
    if features is PolicyInput.CONCAT_OUTER:
        return state_dim + latent_dim + state_dim * latent_dim
    return state_dim + latent_dim


@dataclass
class LatentPolicy:
    """Categorical policy when ``n_actions`` is set, squashed Gaussian otherwise."""

    state_dim: int
    latent_dim: int
    action_dim: int
    n_actions: int
    features: PolicyInput
    spec: MlpSpec
    params: ParamVector

    @classmethod
    def build(cls, state_dim: int, latent_dim: int, action_dim: int, n_actions: int, hidden_width: int,
              hidden_layers: int, activation: Activation, features: PolicyInput,
              rng: np.random.Generator) -> "LatentPolicy":
        """Builds a freshly initialized policy network.

        Args:
            state_dim: Observation size.
            latent_dim: Latent size; 0 for latent-free learners.
            action_dim: Continuous action size.
            n_actions: Discrete action count; 0 selects the Gaussian head.
            hidden_width: Hidden units per layer.
            hidden_layers: Hidden layer count.
            activation: Hidden activation.
            features: Input feature layout.
            rng: Initialization draws.

        Returns:
            The policy.
        """
        discrete = n_actions > 0
        output_dim = n_actions if discrete else 2 * action_dim
        head = OutputHead.SOFTMAX if discrete else OutputHead.GAUSSIAN_TANH
        spec = MlpSpec.uniform(policy_input_dim(state_dim, latent_dim, features), hidden_width, hidden_layers,
                               activation, output_dim, head)
        params = init_params(spec, rng, "policy", output_scale=POLICY_OUTPUT_SCALE)
        return cls(state_dim, latent_dim, action_dim, n_actions, features, spec, params)

    @property
    def discrete(self) -> bool:
        return self.n_actions > 0

    def _check(self, states: np.ndarray, latent_width: int) -> None:
        if np.shape(states)[-1] != self.state_dim or latent_width != self.latent_dim:
            raise ConfigurationError(
                f"policy expects state dim {self.state_dim} and latent dim {self.latent_dim}, "
                f"got {np.shape(states)[-1]} and {latent_width}")

    def features_value(self, states: np.ndarray, latents: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        latents = np.asarray(latents, dtype=np.float64)
        self._check(states, latents.shape[-1])
        parts = [states, latents]
        if self.features is PolicyInput.CONCAT_OUTER and self.latent_dim:
            outer = states[..., :, None] * latents[..., None, :]
            parts.append(outer.reshape(states.shape[:-1] + (-1,)))
        return np.concatenate(parts, axis=-1)

    def features_node(self, tape: Tape, states: np.ndarray, latents: Union[Node, np.ndarray]) -> Node:
        latents = tape.lift(latents)
        self._check(states, latents.shape[-1])
        parts = [np.asarray(states, dtype=np.float64), latents]
        if self.features is PolicyInput.CONCAT_OUTER and self.latent_dim:
            parts.append(ad.outer(np.asarray(states, dtype=np.float64), latents))
        return ad.concat(parts, axis=-1)

    def raw(self, tape: Tape, states: np.ndarray, latents: Union[Node, np.ndarray]) -> Node:
        return mlp_forward(self.spec, self.params, self.features_node(tape, states, latents), tape)

    def raw_value(self, states: np.ndarray, latents: np.ndarray) -> np.ndarray:
        return mlp_eval(self.spec, self.params, self.features_value(states, latents))

    def log_prob(self, tape: Tape, states: np.ndarray, latents: Union[Node, np.ndarray], actions: np.ndarray) -> Node:
        """Taped log pi(a | s, latent) for a batch, shape (N,).

        Args:
            tape: Tape holding whichever parameters should get gradients.
            states: Observations, shape ``(N, state_dim)``.
            latents: Latents, taped or constant, shape ``(N, latent_dim)``.
            actions: Action indices, or squashed continuous actions.

        Returns:
            The log-probability node.

        Raises:
            ConfigurationError: On a state or latent width mismatch.
        """
        out = self.raw(tape, states, latents)
        if self.discrete:
            return categorical_log_prob(out, np.asarray(actions, dtype=np.int64).reshape(-1))
        d = self.action_dim
        return gaussian_tanh_log_prob(out[:, :d], out[:, d:], np.asarray(actions).reshape(-1, d))

    def log_prob_value(self, states: np.ndarray, latents: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """``log_prob`` off the tape."""
        return self.log_prob(Tape(trainable=()), states, latents, actions).value

    def rsample(self, tape: Tape, states: np.ndarray, latents: Union[Node, np.ndarray],
                noise: np.ndarray) -> Tuple[Node, Node]:
        """Reparameterized continuous action and its log density."""
        if self.discrete:
            raise ConfigurationError("reparameterized sampling needs a continuous policy")
        out = self.raw(tape, states, latents)
        d = self.action_dim
        return gaussian_tanh_head(out[:, :d], out[:, d:], noise)

    def action_noise(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Uniforms for categorical sampling, standard normals otherwise."""
        if self.discrete:
            return rng.random(count)
        return rng.standard_normal((count, self.action_dim))

    def act(self, states: np.ndarray, latents: np.ndarray, noise: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Untaped batched sampling from pre-drawn noise; returns actions and log probabilities.

        Args:
            states: Observations, shape ``(N, state_dim)``.
            latents: Latents, shape ``(N, latent_dim)``.
            noise: Draws from ``action_noise``.

        Returns:
            ``(actions, log_probs)``; the same noise always gives the same actions.
        """
        out = self.raw_value(states, latents)
        if self.discrete:
            probs = softmax(out)
            actions = sample_categorical(probs, noise)
            return actions, np.log(probs[np.arange(actions.size), actions])
        d = self.action_dim
        return gaussian_tanh_sample(out[:, :d], out[:, d:], noise)

    def to_dict(self) -> Dict[str, Any]:
        return {"params": self.params.values.copy()}

    def load_dict(self, data: Dict[str, Any]) -> None:
        self.params.assign(data["params"])
