"""Variational task embeddings q(z|i) and q(g|j)."""

from .latents import EmbeddingMode, TaskLatents
from .variational import (LatentPrior, VariationalEmbedding, bayes_posterior, kl_to_prior, kl_value,
                          log_density_ratio, log_density_ratio_value, sample, sample_value, write_latent_csv)

__all__ = [
    "EmbeddingMode",
    "LatentPrior",
    "TaskLatents",
    "VariationalEmbedding",
    "bayes_posterior",
    "kl_to_prior",
    "kl_value",
    "log_density_ratio",
    "log_density_ratio_value",
    "sample",
    "sample_value",
    "write_latent_csv",
]
