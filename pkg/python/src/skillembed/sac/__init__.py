"""Off-policy multi-task training with per-task replay and critics."""

from .algorithm import (Collector, EpisodeSummary, SacConfig, SacMetrics, SacState, build_sac_state, embedding_loss,
                        policy_loss, q_loss, train_iteration_sac, v_loss, v_target)
from .critics import CriticSet, soft_update
from .replay import ReplayBatch, ReplayMemory

__all__ = [
    "Collector",
    "CriticSet",
    "EpisodeSummary",
    "ReplayBatch",
    "ReplayMemory",
    "SacConfig",
    "SacMetrics",
    "SacState",
    "build_sac_state",
    "embedding_loss",
    "policy_loss",
    "q_loss",
    "soft_update",
    "train_iteration_sac",
    "v_loss",
    "v_target",
]
