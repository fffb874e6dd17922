"""On-policy multi-task training with standardized regularized returns."""

from .algorithm import (IterationMetrics, ReinforceConfig, ReinforceState, build_reinforce_state, discounted_returns,
                        kl_horizon_weight, regularized_returns, reinforce_loss, single_embedding_mode,
                        train_iteration)
from .baseline import EpisodicReinforce, EpisodicReinforceConfig
from .popart import PopArtState, popart_normalize

__all__ = [
    "EpisodicReinforce",
    "EpisodicReinforceConfig",
    "IterationMetrics",
    "PopArtState",
    "ReinforceConfig",
    "ReinforceState",
    "build_reinforce_state",
    "discounted_returns",
    "kl_horizon_weight",
    "popart_normalize",
    "regularized_returns",
    "reinforce_loss",
    "single_embedding_mode",
    "train_iteration",
]
