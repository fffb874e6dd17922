"""Exact oracles on small task grids with discrete latents."""

from .mdp import TabularTaskMdp, TabularTemperatures
from .oracles import (AscentResult, coordinate_ascent, embedding_kl, embedding_scores, evaluate,
                      fit_embedding_by_gradient, index_posterior, monte_carlo_objective, objective,
                      optimal_embeddings, optimal_policy, q_values, tilted_embedding, visitation)

__all__ = [
    "AscentResult",
    "TabularTaskMdp",
    "TabularTemperatures",
    "coordinate_ascent",
    "embedding_kl",
    "embedding_scores",
    "evaluate",
    "fit_embedding_by_gradient",
    "index_posterior",
    "monte_carlo_objective",
    "objective",
    "optimal_embeddings",
    "optimal_policy",
    "q_values",
    "tilted_embedding",
    "visitation",
]
