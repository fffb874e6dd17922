"""Per-index diagonal-Gaussian embeddings with a standard-normal prior.

Every index owns one ``ParamVector`` holding ``(mean, log_std)`` so that a
single row can be stepped by its own optimizer without touching the others.


    ``0.5 * sum(mean^2 + std^2 - 1 - 2 log_std)``.

    Args:
        emb: The embedding.
        index: Index whose row is regularized.
        tape: Tape the row is read from.

    Returns:
        The scalar KL node.
    """

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from ..errors import UsageError
from ..numeric import autodiff as ad
from ..numeric.autodiff import Node, ParamVector, Tape

logger = logging.getLogger(__name__)

INITIAL_MEAN_SPREAD = 0.1
INITIAL_STD = 0.5
_HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)

Index = Union[int, np.ndarray]


@dataclass(frozen=True)
class LatentPrior:
    """The fixed N(0, I) prior shared by every index."""

    latent_dim: int

    @property
    def mean(self) -> np.ndarray:
        return np.zeros(self.latent_dim)

    @property
    def std(self) -> np.ndarray:
        return np.ones(self.latent_dim)

    def log_density(self, latent: np.ndarray) -> np.ndarray:
        latent = np.asarray(latent, dtype=np.float64)
        return np.sum(-0.5 * latent * latent - _HALF_LOG_TWO_PI, axis=-1)


class VariationalEmbedding:
    """Gaussian ``q(latent | k)`` for each index ``k`` of one space.

    Attributes:
        rows: One ``(mean, log_std)`` parameter vector per index.
        latent_dim: Size of each latent.
        space: Name of the space, ``z``, ``g`` or ``zg``; prefixes row names.
    """

    def __init__(self, rows: List[ParamVector], latent_dim: int, space: str):
        self.rows = rows
        self.latent_dim = latent_dim
        self.space = space

    @classmethod
    def create(cls, index_count: int, latent_dim: int, rng: np.random.Generator, space: str) -> "VariationalEmbedding":
        """Rows with small random means and a common initial spread.

        Args:
            index_count: Number of indices.
            latent_dim: Size of each latent.
            rng: Draws the initial means.
            space: Name of the space.

        Returns:
            The embedding.
        """
        rows = [
            cls._row(space, k, rng.normal(0.0, INITIAL_MEAN_SPREAD, size=latent_dim),
                     np.full(latent_dim, math.log(INITIAL_STD)))
            for k in range(index_count)
        ]
        return cls(rows, latent_dim, space)

    @classmethod
    def at_prior(cls, index_count: int, latent_dim: int, space: str) -> "VariationalEmbedding":
        """Rows equal to the prior: zero mean, unit spread."""
        rows = [cls._row(space, k, np.zeros(latent_dim), np.zeros(latent_dim)) for k in range(index_count)]
        return cls(rows, latent_dim, space)

    @staticmethod
    def _row(space: str, k: int, mean: np.ndarray, log_std: np.ndarray) -> ParamVector:
        d = mean.size
        return ParamVector([(1, d), (1, d)], np.concatenate([mean, log_std]), f"{space}[{k}]")

    @property
    def index_count(self) -> int:
        return len(self.rows)

    @property
    def prior(self) -> LatentPrior:
        return LatentPrior(self.latent_dim)

    def row(self, index: int) -> ParamVector:
        self._check(index)
        return self.rows[index]

    def means(self) -> np.ndarray:
        return np.array([row.values[:self.latent_dim] for row in self.rows]).reshape(-1, self.latent_dim)

    def log_stds(self) -> np.ndarray:
        return np.array([row.values[self.latent_dim:] for row in self.rows]).reshape(-1, self.latent_dim)

    def stds(self) -> np.ndarray:
        return np.exp(self.log_stds())

    def _check(self, index: Index) -> None:
        index = np.asarray(index)
        if index.size and (np.any(index < 0) or np.any(index >= self.index_count)):
            raise UsageError(f"{self.space} index {index.tolist()} outside [0, {self.index_count})")

    def gather(self, tape: Tape, index: Index) -> Tuple[Node, Node]:
        """Taped (mean, log_std) for one index, or stacked rows for an index array."""
        self._check(index)
        d = self.latent_dim
        if np.ndim(index) == 0:
            flat = tape.param(self.rows[int(index)])
            return flat[:d], flat[d:]
        table = ad.concat([tape.param(row).reshape((1, 2 * d)) for row in self.rows], axis=0)
        picked = table[np.asarray(index, dtype=np.int64)]
        return picked[:, :d], picked[:, d:]

    def to_dict(self) -> Dict[str, Any]:
        return {"space": self.space, "latent_dim": self.latent_dim, "rows": [row.values.copy() for row in self.rows]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "VariationalEmbedding":
        d = data["latent_dim"]
        rows = [cls._row(data["space"], k, np.asarray(v)[:d], np.asarray(v)[d:]) for k, v in enumerate(data["rows"])]
        return cls(rows, d, data["space"])


def sample(emb: VariationalEmbedding, index: Index, noise: np.ndarray, tape: Tape) -> Node:
    """Reparameterized latent ``mean + exp(log_std) * noise``.

    Args:
        emb: The embedding.
        index: One index, or an array of indices.
        noise: Standard-normal draws shaped like the gathered means.
        tape: Tape the rows are read from.

    Returns:
        The latent node; gradients reach the gathered rows.

    Raises:
        UsageError: On an out-of-range index or a noise shape mismatch.
    """
    mean, log_std = emb.gather(tape, index)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != mean.shape:
        raise UsageError(f"noise shape {noise.shape} does not match latent shape {mean.shape}")
    return mean + ad.exp(log_std) * noise


def sample_value(emb: VariationalEmbedding, index: Index, noise: np.ndarray) -> np.ndarray:
    """``sample`` off the tape."""
    emb._check(index)
    index = np.asarray(index, dtype=np.int64)
    return emb.means()[index] + emb.stds()[index] * np.asarray(noise, dtype=np.float64)


def kl_to_prior(emb: VariationalEmbedding, index: int, tape: Tape) -> Node:
    """Closed-form KL(q(.|index) || N(0, I))."""
    mean, log_std = emb.gather(tape, index)
    return 0.5 * ad.sum(mean * mean + ad.exp(2.0 * log_std) - 1.0 - 2.0 * log_std)


def kl_value(emb: VariationalEmbedding, index: int) -> float:
    """``kl_to_prior`` off the tape."""
    emb._check(index)
    mean, log_std = emb.means()[index], emb.log_stds()[index]
    return float(0.5 * np.sum(mean * mean + np.exp(2.0 * log_std) - 1.0 - 2.0 * log_std))


def log_density_ratio(emb: VariationalEmbedding, index: Index, latent: Union[Node, np.ndarray], tape: Tape) -> Node:
    """``log q(latent | index) - log p(latent)``, summed over latent dims."""
    mean, log_std = emb.gather(tape, index)
    latent = tape.lift(latent)
    standardized = (latent - mean) / ad.exp(log_std)
    return ad.sum(-0.5 * standardized * standardized - log_std + 0.5 * latent * latent, axis=-1)


def log_density_ratio_value(emb: VariationalEmbedding, index: Index, latent: np.ndarray) -> np.ndarray:
    """``log_density_ratio`` off the tape."""
    emb._check(index)
    index = np.asarray(index, dtype=np.int64)
    mean, log_std = emb.means()[index], emb.log_stds()[index]
    latent = np.asarray(latent, dtype=np.float64)
    standardized = (latent - mean) / np.exp(log_std)
    return np.sum(-0.5 * standardized ** 2 - log_std + 0.5 * latent ** 2, axis=-1)


def log_likelihoods(emb: VariationalEmbedding, latent: np.ndarray) -> np.ndarray:
    """``log q(latent | k)`` for every index k."""
    means, log_stds = emb.means(), emb.log_stds()
    standardized = (np.asarray(latent, dtype=np.float64) - means) / np.exp(log_stds)
    return np.sum(-0.5 * standardized ** 2 - log_stds - _HALF_LOG_TWO_PI, axis=-1)


def bayes_posterior(emb: VariationalEmbedding, latent: np.ndarray, index_prior: np.ndarray) -> np.ndarray:
    """Posterior over indices given a latent.

    Falls back to ``index_prior`` with a warning when every joint density
    underflows.

    Args:
        emb: The embedding.
        latent: A latent of the embedding's size.
        index_prior: Prior probability of each index.

    Returns:
        Posterior probability of each index.

    Raises:
        UsageError: If the prior has the wrong length.
    """
    index_prior = np.asarray(index_prior, dtype=np.float64)
    if index_prior.shape != (emb.index_count,):
        raise UsageError(f"index prior needs {emb.index_count} entries, got {index_prior.shape}")
    with np.errstate(divide="ignore"):
        log_joint = np.log(index_prior) + log_likelihoods(emb, latent)
    if not np.any(np.exp(log_joint) > 0.0):
        logger.warning("all %s posterior densities underflow; returning the prior", emb.space)
        return index_prior.copy()
    peak = np.max(log_joint)
    weights = np.exp(log_joint - peak)
    return weights / np.sum(weights)


LATENT_COLUMNS = ("space", "index", "dim", "mean", "std")


def latent_rows(embeddings: Iterable[VariationalEmbedding]) -> List[Tuple[str, int, int, float, float]]:
    rows = []
    for emb in embeddings:
        means, stds = emb.means(), emb.stds()
        for k in range(emb.index_count):
            for d in range(emb.latent_dim):
                rows.append((emb.space, k, d, float(means[k, d]), float(stds[k, d])))
    return rows


def write_latent_csv(path: Union[str, Path], embeddings: Sequence[VariationalEmbedding]) -> None:
    """Writes one ``space, index, dim, mean, std`` row per latent coordinate.

    Args:
        path: Destination file, overwritten.
        embeddings: Embeddings to dump, in order.
    """
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(LATENT_COLUMNS)
        for space, index, dim, mean, std in latent_rows(embeddings):
            writer.writerow([space, index, dim, repr(mean), repr(std)])
