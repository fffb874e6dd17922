"""Splittable seeding keyed by (run seed, stream, i, j, episode, ...)."""

import hashlib
from threading import Lock
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .errors import ConfigurationError

PathPart = Union[str, int]


class SeedSequencer:
    """Derives independent RNG streams from a run seed and a path.

    A stream depends only on its path, never on the order in which streams are
    requested, so collection threads cannot perturb each other's draws.
    """

    def __init__(self, run_seed: int, with_cache: bool = True) -> None:
        """Initialize SeedSequencer.

        Args:
            run_seed: Non-negative seed of the whole run.
            with_cache: Memoize derived seeds behind a lock.

        Raises:
            ConfigurationError: If ``run_seed`` is negative.
        """
        if run_seed < 0:
            raise ConfigurationError(f"run seed must be non-negative, got {run_seed}")
        self._run_seed = run_seed
        self._cache: Optional[Dict[Tuple[PathPart, ...], int]] = {} if with_cache else None
        self._cache_lock = Lock()

    @property
    def run_seed(self) -> int:
        return self._run_seed

    def derive(self, *path: PathPart) -> int:
        """A 64-bit seed for ``path``.

        Args:
            *path: ``str`` or ``int`` parts naming the stream.

        Returns:
            The first 8 bytes of ``SHA-256(run_seed/part/...)``, little-endian.

        Raises:
            ConfigurationError: If a part is neither ``str`` nor ``int``.
        """
        if self._cache is None:
            return self._derive(path)
        with self._cache_lock:
            cached = self._cache.get(path)
        if cached is not None:
            return cached
        seed = self._derive(path)
        with self._cache_lock:
            self._cache[path] = seed
        return seed

    def rng(self, *path: PathPart) -> np.random.Generator:
        """A fresh generator seeded by ``derive(*path)``."""
        return np.random.default_rng(self.derive(*path))

    def _derive(self, path: Tuple[PathPart, ...]) -> int:
        for part in path:
            if not isinstance(part, (str, int, np.integer)):
                raise ConfigurationError(f"seed path parts must be str or int, got {type(part).__name__}")
        key = "/".join([str(self._run_seed)] + [str(part) for part in path])
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
