"""Tests for seed derivation."""

import numpy as np
import pytest

from skillembed.errors import ConfigurationError
from skillembed.seeding import SeedSequencer


class TestSeedSequencer:
    """Test stream derivation from a run seed and a path."""

    def test_same_path_same_seed(self) -> None:
        """Test two sequencers agree on every path."""
        a, b = SeedSequencer(7), SeedSequencer(7)
        assert a.derive("reinforce", 0, 1, 3) == b.derive("reinforce", 0, 1, 3)
        assert a.rng("sac", 2).random(4).tolist() == b.rng("sac", 2).random(4).tolist()

    def test_request_order_does_not_matter(self) -> None:
        """Test a stream is the same whatever was requested before it."""
        paths = [("reinforce", i, j) for i in range(3) for j in range(3)]
        forward = SeedSequencer(1)
        backward = SeedSequencer(1)
        first = {path: forward.derive(*path) for path in paths}
        second = {path: backward.derive(*path) for path in reversed(paths)}
        assert first == second

    @pytest.mark.parametrize("other", [("reinforce", 0, 2), ("sac", 0, 1), ("reinforce", 0, 1, 0)])
    def test_paths_are_distinct(self, other) -> None:
        """Test neighbouring paths give different seeds."""
        seeds = SeedSequencer(0)
        assert seeds.derive("reinforce", 0, 1) != seeds.derive(*other)

    def test_run_seed_changes_streams(self) -> None:
        """Test the run seed prefixes every path."""
        assert SeedSequencer(0).derive("eval") != SeedSequencer(1).derive("eval")
        assert SeedSequencer(3).run_seed == 3

    def test_cache_does_not_change_values(self) -> None:
        """Test cached and uncached sequencers derive the same seeds."""
        cached = SeedSequencer(5)
        uncached = SeedSequencer(5, with_cache=False)
        for path in [("a",), ("a", 1), ("b", np.int64(2))]:
            assert cached.derive(*path) == cached.derive(*path) == uncached.derive(*path)

    def test_seed_fits_in_64_bits(self) -> None:
        """Test derived seeds are usable by numpy generators."""
        seed = SeedSequencer(11).derive("x", 4)
        assert 0 <= seed < 2 ** 64

    def test_negative_run_seed_rejected(self) -> None:
        """Test run seeds must be non-negative."""
        with pytest.raises(ConfigurationError):
            SeedSequencer(-1)

    def test_bad_path_part_rejected(self) -> None:
        """Test only strings and integers may form a path."""
        with pytest.raises(ConfigurationError, match="float"):
            SeedSequencer(0).derive("eval", 0.5)
