"""How a task cell (i, j) is turned into the policy's latent input.

Disentangled mode concatenates a dynamics latent z (row i) with a goal latent
g (column j). Single mode uses one joint latent indexed by ``i * J + j``.
Mode ``none`` feeds no latent at all, for independent learners.

Noise realizations are carried in two slots, ``z`` and ``g``. Single mode
uses the ``z`` slot only and is regularized with the goal weight.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError
from ..numeric import autodiff as ad
from ..numeric.autodiff import Node, ParamVector, Tape
from . import variational as vi
from .variational import VariationalEmbedding


class EmbeddingMode(Enum):
    """How many latents a cell gets and how they are indexed."""

    DISENTANGLED = "disentangled"
    SINGLE = "single"
    NONE = "none"


@dataclass
class TaskLatents:
    """The embeddings a grid of cells is conditioned on.

    Attributes:
        mode: Embedding layout.
        shape: Grid shape ``(I, J)``.
        z: Dynamics embedding, or the joint one in single mode.
        g: Goal embedding; None outside disentangled mode.
    """

    mode: EmbeddingMode
    shape: Tuple[int, int]
    z: Optional[VariationalEmbedding] = None
    g: Optional[VariationalEmbedding] = None

    @classmethod
    def create(cls, mode: EmbeddingMode, shape: Tuple[int, int], dim_z: int, dim_g: int,
               rng: np.random.Generator) -> "TaskLatents":
        """Builds fresh embeddings for a grid.

        Args:
            mode: Embedding layout.
            shape: Grid shape ``(I, J)``.
            dim_z: Dynamics latent size.
            dim_g: Goal latent size; single mode uses ``dim_z + dim_g``.
            rng: Draws the initial means.

        Returns:
            The latents.

        Raises:
            ConfigurationError: If a disentangled latent size is not positive.
        """
        rows, cols = shape
        if mode is EmbeddingMode.DISENTANGLED:
            if dim_z < 1 or dim_g < 1:
                raise ConfigurationError(f"latent dims must be positive, got z={dim_z} g={dim_g}")
            return cls(mode, shape, VariationalEmbedding.create(rows, dim_z, rng, "z"),
                       VariationalEmbedding.create(cols, dim_g, rng, "g"))
        if mode is EmbeddingMode.SINGLE:
            return cls(mode, shape, VariationalEmbedding.create(rows * cols, dim_z + dim_g, rng, "zg"))
        return cls(mode, shape)

    @property
    def noise_dims(self) -> Tuple[int, int]:
        return (self.z.latent_dim if self.z else 0, self.g.latent_dim if self.g else 0)

    @property
    def latent_dim(self) -> int:
        return sum(self.noise_dims)

    def embeddings(self) -> List[VariationalEmbedding]:
        return [emb for emb in (self.z, self.g) if emb is not None]

    def parameter_vectors(self) -> List[ParamVector]:
        return [row for emb in self.embeddings() for row in emb.rows]

    def slot_alphas(self, alpha_d: float, alpha_r: float) -> Tuple[float, float]:
        """Regularization temperatures for the z and g slots."""
        if self.mode is EmbeddingMode.DISENTANGLED:
            return alpha_d, alpha_r
        if self.mode is EmbeddingMode.SINGLE:
            return alpha_r, math.inf
        return math.inf, math.inf

    def slot_indices(self, rows, cols) -> Tuple[np.ndarray, np.ndarray]:
        """Row indices into the z and g slots for each ``(row, col)`` pair."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if self.mode is EmbeddingMode.SINGLE:
            return rows * self.shape[1] + cols, cols
        return rows, cols

    def draw_noise(self, rng: np.random.Generator, count: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Standard-normal noise for both slots; one row per sample when ``count`` is given."""
        dim_z, dim_g = self.noise_dims
        if count is None:
            return rng.standard_normal(dim_z), rng.standard_normal(dim_g)
        return rng.standard_normal((count, dim_z)), rng.standard_normal((count, dim_g))

    def latent_values(self, rows, cols, z_noise: np.ndarray, g_noise: np.ndarray) -> np.ndarray:
        """Policy latents ``[z, g]`` for each cell, off the tape.

        Args:
            rows: Dynamics indices.
            cols: Goal indices.
            z_noise: Noise for the z slot, one row per cell.
            g_noise: Noise for the g slot, one row per cell.

        Returns:
            One latent row per cell; width 0 in mode ``none``.
        """
        z_index, g_index = self.slot_indices(rows, cols)
        batch = z_index.shape
        parts = [np.zeros(batch + (0,))]
        if self.z is not None:
            parts.append(vi.sample_value(self.z, z_index, z_noise))
        if self.g is not None:
            parts.append(vi.sample_value(self.g, g_index, g_noise))
        return np.concatenate(parts, axis=-1)

    def latent_nodes(self, tape: Tape, rows, cols, z_noise: np.ndarray, g_noise: np.ndarray) -> Node:
        """``latent_values`` on the tape, so gradients reach the embedding rows."""
        z_index, g_index = self.slot_indices(rows, cols)
        parts = [np.zeros(z_index.shape + (0,))]
        if self.z is not None:
            parts.append(vi.sample(self.z, z_index, z_noise, tape))
        if self.g is not None:
            parts.append(vi.sample(self.g, g_index, g_noise, tape))
        if len(parts) == 1:
            return tape.constant(parts[0])
        return ad.concat(parts, axis=-1)

    def kl_terms(self, tape: Tape, cells: Sequence[Tuple[int, int]]) -> Tuple[Optional[Node], Optional[Node]]:
        """Mean KL to the prior over the distinct z-slot and g-slot indices in ``cells``."""
        rows = [i for i, _ in cells]
        cols = [j for _, j in cells]
        z_index, g_index = self.slot_indices(rows, cols)
        terms = []
        for emb, indices in ((self.z, z_index), (self.g, g_index)):
            if emb is None:
                terms.append(None)
                continue
            distinct = sorted(set(int(k) for k in indices))
            total = vi.kl_to_prior(emb, distinct[0], tape)
            for k in distinct[1:]:
                total = total + vi.kl_to_prior(emb, k, tape)
            terms.append(total / float(len(distinct)))
        return terms[0], terms[1]

    def density_ratio_values(self, rows, cols, z_noise: np.ndarray,
                             g_noise: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        z_index, g_index = self.slot_indices(rows, cols)
        ratios = []
        for emb, indices, noise in ((self.z, z_index, z_noise), (self.g, g_index, g_noise)):
            if emb is None:
                ratios.append(np.zeros(indices.shape))
            else:
                ratios.append(vi.log_density_ratio_value(emb, indices, vi.sample_value(emb, indices, noise)))
        return ratios[0], ratios[1]

    def kl_summary(self) -> Tuple[Dict[int, float], Dict[int, float]]:
        """KL to the prior of every row, per slot."""
        summary = []
        for emb in (self.z, self.g):
            summary.append({} if emb is None else {k: vi.kl_value(emb, k) for k in range(emb.index_count)})
        return summary[0], summary[1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode.value,
            "shape": list(self.shape),
            "z": None if self.z is None else self.z.to_dict(),
            "g": None if self.g is None else self.g.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TaskLatents":
        return cls(
            EmbeddingMode(data["mode"]),
            tuple(data["shape"]),
            None if data["z"] is None else VariationalEmbedding.from_dict(data["z"]),
            None if data["g"] is None else VariationalEmbedding.from_dict(data["g"]),
        )
