"""Disentangled skill embeddings for multi-task reinforcement learning.

A shared policy conditioned on a dynamics latent and a goal latent, trained
across a grid of tasks with on-policy REINFORCE or soft actor-critic.
"""

__version__ = "0.1.0"
__all__ = ["checkpoint", "embeddings", "envs", "harness", "hrl", "numeric", "reinforce", "sac", "tabular"]
