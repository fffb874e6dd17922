"""Hierarchical control on top of a frozen latent-conditioned policy."""

from .circle import CIRCLE_MAX_STEPS, CIRCLE_PERIOD, CIRCLE_RADIUS, CircleGoalReacherEnv, circle_goal
from .options import HrlConfig, LatentOptionEnv, frozen_latent, latent_box, option_points
from .training import FLAT, HIERARCHICAL, HrlEpisode, HrlResult, hrl_sac_config, train_hrl_reinforce, train_hrl_sac

__all__ = [
    "CIRCLE_MAX_STEPS",
    "CIRCLE_PERIOD",
    "CIRCLE_RADIUS",
    "FLAT",
    "HIERARCHICAL",
    "CircleGoalReacherEnv",
    "HrlConfig",
    "HrlEpisode",
    "HrlResult",
    "LatentOptionEnv",
    "circle_goal",
    "frozen_latent",
    "hrl_sac_config",
    "latent_box",
    "option_points",
    "train_hrl_reinforce",
    "train_hrl_sac",
]
