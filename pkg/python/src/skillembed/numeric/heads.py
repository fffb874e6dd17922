"""Action distributions on top of a network's raw output.

Categorical heads take logits. Gaussian-tanh heads take a mean and a log
standard deviation, sample ``u = mean + exp(log_std) * noise`` and squash it
with ``tanh``; the log density carries the change-of-variables correction.
"""

import math
from typing import Tuple

import numpy as np

from ..errors import UsageError
from . import autodiff as ad
from .autodiff import Node

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
TANH_EPSILON = 1e-6
ACTION_LIMIT = 1.0 - 1e-7
_HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - np.max(logits, axis=-1, keepdims=True))
    return shifted / np.sum(shifted, axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    peak = np.max(logits, axis=-1, keepdims=True)
    return logits - peak - np.log(np.sum(np.exp(logits - peak), axis=-1, keepdims=True))


def sample_categorical(probs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling; ``uniforms`` has one draw per row of ``probs``."""
    cdf = np.cumsum(probs, axis=-1)
    picks = np.sum(np.asarray(uniforms)[..., None] > cdf, axis=-1)
    return np.minimum(picks, probs.shape[-1] - 1)


def categorical_log_prob(logits: Node, actions: np.ndarray) -> Node:
    """Log probability of integer ``actions`` under batched ``logits`` (N, A)."""
    actions = np.asarray(actions, dtype=np.int64)
    if logits.ndim != 2 or actions.shape != (logits.shape[0],):
        raise UsageError(f"categorical_log_prob: logits {logits.shape} and actions {actions.shape} disagree")
    if np.any(actions < 0) or np.any(actions >= logits.shape[1]):
        raise UsageError("categorical_log_prob: action out of range")
    picked = logits[np.arange(actions.size), actions]
    return picked - ad.logsumexp(logits, axis=-1)


def categorical_head(logits: Node, rng: np.random.Generator) -> Tuple[np.ndarray, Node]:
    """Samples one action per row of ``logits`` and returns it with its log probability."""
    actions = sample_categorical(softmax(logits.value), rng.random(logits.shape[0]))
    return actions, categorical_log_prob(logits, actions)


def _squash_correction(pre_tanh: np.ndarray) -> np.ndarray:
    return np.log(1.0 - np.tanh(pre_tanh) ** 2 + TANH_EPSILON)


def gaussian_tanh_head(mean: Node, log_std: Node, noise: np.ndarray) -> Tuple[Node, Node]:
    """Reparameterized squashed-Gaussian sample.

    Returns the action and its log density summed over the last axis.
    """
    if mean.shape != log_std.shape or mean.shape != np.shape(noise):
        raise UsageError(f"gaussian head shapes differ: {mean.shape}, {log_std.shape}, {np.shape(noise)}")
    log_std = ad.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    pre_tanh = mean + ad.exp(log_std) * noise
    action = ad.tanh(pre_tanh)
    correction = ad.log(1.0 - action * action + TANH_EPSILON)
    density = -0.5 * np.square(noise) - _HALF_LOG_TWO_PI - log_std - correction
    return action, ad.sum(density, axis=-1)


def gaussian_tanh_log_prob(mean: Node, log_std: Node, actions: np.ndarray) -> Node:
    """Log density of stored squashed actions; actions are clipped inside (-1, 1)."""
    actions = np.clip(np.asarray(actions, dtype=np.float64), -ACTION_LIMIT, ACTION_LIMIT)
    pre_tanh = np.arctanh(actions)
    log_std = ad.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    standardized = (pre_tanh - mean) / ad.exp(log_std)
    density = -0.5 * standardized * standardized - _HALF_LOG_TWO_PI - log_std - _squash_correction(pre_tanh)
    return ad.sum(density, axis=-1)


def gaussian_tanh_sample(mean: np.ndarray, log_std: np.ndarray, noise: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Untaped counterpart of ``gaussian_tanh_head`` for rollouts."""
    log_std = np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    pre_tanh = mean + np.exp(log_std) * noise
    action = np.tanh(pre_tanh)
    density = -0.5 * np.square(noise) - _HALF_LOG_TWO_PI - log_std - np.log(1.0 - action * action + TANH_EPSILON)
    return np.clip(action, -ACTION_LIMIT, ACTION_LIMIT), np.sum(density, axis=-1)
