"""Tests for variational embeddings."""

import csv
import logging

import numpy as np
import pytest

from skillembed.embeddings import (EmbeddingMode, TaskLatents, VariationalEmbedding, bayes_posterior, kl_to_prior,
                                   kl_value, log_density_ratio, log_density_ratio_value, sample, sample_value,
                                   write_latent_csv)
from skillembed.errors import UsageError
from skillembed.numeric import Tape
from skillembed.numeric import autodiff as ad
from skillembed.numeric.gradcheck import gradient_check


def _embedding(means, log_stds, space: str = "z") -> VariationalEmbedding:
    emb = VariationalEmbedding.at_prior(len(means), len(means[0]), space)
    for row, mean, log_std in zip(emb.rows, means, log_stds):
        row.assign(np.concatenate([mean, log_std]))
    return emb


class TestSampling:
    """Test reparameterized sampling."""

    def test_zero_noise_gives_mean(self) -> None:
        """noise 0 returns the index's mean."""
        emb = _embedding([[0.0, 0.0], [1.0, -2.0]], [[0.0, 0.0], [0.3, -0.1]])
        np.testing.assert_allclose(sample(emb, 1, np.zeros(2), Tape()).value, [1.0, -2.0])

    def test_standard_normal_passthrough(self) -> None:
        """At the prior the latent equals the noise."""
        emb = VariationalEmbedding.at_prior(2, 3, "g")
        noise = np.array([0.5, -1.0, 2.0])
        np.testing.assert_allclose(sample(emb, 0, noise, Tape()).value, noise)

    def test_batched_indices(self) -> None:
        """Index arrays gather one row per sample and match the untaped path."""
        emb = VariationalEmbedding.create(3, 2, np.random.default_rng(0), "z")
        index = np.array([2, 0, 2, 1])
        noise = np.random.default_rng(1).standard_normal((4, 2))
        np.testing.assert_allclose(sample(emb, index, noise, Tape()).value, sample_value(emb, index, noise))

    def test_moments_match(self) -> None:
        """Sample mean and std match the parameters within 4 standard errors."""
        emb = _embedding([[0.7, -0.3]], [[np.log(0.4), np.log(1.3)]])
        noise = np.random.default_rng(2).standard_normal((100000, 2))
        samples = sample_value(emb, np.zeros(100000, dtype=int), noise)
        std = np.array([0.4, 1.3])
        assert np.all(np.abs(samples.mean(axis=0) - [0.7, -0.3]) < 4 * std / np.sqrt(100000))
        assert np.all(np.abs(samples.std(axis=0) - std) < 4 * std / np.sqrt(2 * 100000))

    def test_index_out_of_range(self) -> None:
        """Unknown indices are usage errors."""
        emb = VariationalEmbedding.at_prior(2, 2, "z")
        with pytest.raises(UsageError):
            sample(emb, 2, np.zeros(2), Tape())


class TestKl:
    """Test the closed-form KL and density ratio."""

    def test_prior_has_zero_kl(self) -> None:
        """KL vanishes at mean 0, log std 0."""
        assert kl_value(VariationalEmbedding.at_prior(1, 2, "z"), 0) == 0.0

    def test_unit_shift(self) -> None:
        """Mean (1, 0) with unit std has KL 0.5."""
        emb = _embedding([[1.0, 0.0]], [[0.0, 0.0]])
        assert kl_to_prior(emb, 0, Tape()).item() == pytest.approx(0.5)

    def test_ratio_at_mean(self) -> None:
        """The density ratio at mean (1, 0) with unit std is 0.5."""
        emb = _embedding([[1.0, 0.0]], [[0.0, 0.0]])
        assert log_density_ratio(emb, 0, np.array([1.0, 0.0]), Tape()).item() == pytest.approx(0.5)

    def test_ratio_zero_at_prior(self) -> None:
        """q = p gives a zero ratio everywhere."""
        emb = VariationalEmbedding.at_prior(1, 3, "g")
        latents = np.random.default_rng(3).normal(size=(5, 3))
        np.testing.assert_allclose(log_density_ratio_value(emb, np.zeros(5, dtype=int), latents), 0.0, atol=1e-12)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(20))
    def test_kl_matches_monte_carlo(self, seed: int) -> None:
        """The closed form matches E_q[log q - log p] within 4 standard errors."""
        rng = np.random.default_rng(seed)
        emb = _embedding([rng.normal(size=2)], [rng.normal(scale=0.5, size=2)])
        count = 1000000
        noise = rng.standard_normal((count, 2))
        index = np.zeros(count, dtype=int)
        ratios = log_density_ratio_value(emb, index, sample_value(emb, index, noise))
        error = ratios.std() / np.sqrt(count)
        assert abs(ratios.mean() - kl_value(emb, 0)) < 4 * error + 1e-12

    def test_kl_non_negative(self) -> None:
        """KL is non-negative for random parameters."""
        rng = np.random.default_rng(4)
        for _ in range(50):
            emb = _embedding([rng.normal(size=3)], [rng.normal(size=3)])
            assert kl_value(emb, 0) >= 0.0

    def test_gradients(self) -> None:
        """KL and density-ratio gradients match finite differences."""
        emb = VariationalEmbedding.create(2, 2, np.random.default_rng(5), "z")
        latents = np.random.default_rng(6).normal(size=(3, 2))
        index = np.array([0, 1, 1])

        def loss(tape: Tape):
            return kl_to_prior(emb, 1, tape) * 2.0 + ad.sum(log_density_ratio(emb, index, latents, tape))

        assert gradient_check(loss, emb.rows) < 1e-4


class TestBayesPosterior:
    """Test the index posterior."""

    def test_identical_rows_give_prior(self) -> None:
        """Symmetric rows leave a uniform prior unchanged."""
        emb = VariationalEmbedding.at_prior(3, 2, "z")
        np.testing.assert_allclose(bayes_posterior(emb, np.array([0.3, 0.1]), np.full(3, 1 / 3)), 1 / 3)

    def test_concentrates_on_nearest_row(self) -> None:
        """A latent at row 1's mean, far from the others, picks row 1."""
        emb = _embedding([[-10.0, 0.0], [0.0, 0.0], [10.0, 0.0]], [[0.0, 0.0]] * 3)
        posterior = bayes_posterior(emb, np.array([0.0, 0.0]), np.full(3, 1 / 3))
        assert posterior[1] > 0.999
        assert posterior.sum() == pytest.approx(1.0)

    def test_underflow_returns_prior(self, caplog) -> None:
        """A latent impossibly far from every row falls back to the prior."""
        emb = _embedding([[0.0], [1.0]], [[-10.0], [-10.0]])
        prior = np.array([0.25, 0.75])
        with caplog.at_level(logging.WARNING):
            posterior = bayes_posterior(emb, np.array([1e6]), prior)
        np.testing.assert_array_equal(posterior, prior)
        assert "underflow" in caplog.text

    def test_prior_length_checked(self) -> None:
        """The prior must cover every index."""
        with pytest.raises(UsageError):
            bayes_posterior(VariationalEmbedding.at_prior(2, 1, "z"), np.zeros(1), np.ones(3) / 3)


class TestTaskLatents:
    """Test latent composition for each embedding mode."""

    def test_disentangled_concatenates(self) -> None:
        """z from the row and g from the column are concatenated."""
        latents = TaskLatents.create(EmbeddingMode.DISENTANGLED, (3, 3), 2, 2, np.random.default_rng(0))
        values = latents.latent_values(np.array([2]), np.array([0]), np.zeros((1, 2)), np.zeros((1, 2)))
        np.testing.assert_allclose(values[0], np.concatenate([latents.z.means()[2], latents.g.means()[0]]))

    def test_single_mode_layout(self) -> None:
        """Single mode has one joint row per cell with the summed dimension."""
        latents = TaskLatents.create(EmbeddingMode.SINGLE, (3, 3), 2, 2, np.random.default_rng(0))
        assert latents.z.index_count == 9 and latents.z.latent_dim == 4
        assert latents.g is None
        values = latents.latent_values(np.array([1]), np.array([2]), np.zeros((1, 4)), np.zeros((1, 0)))
        np.testing.assert_allclose(values[0], latents.z.means()[5])

    def test_none_mode_is_empty(self) -> None:
        """Independent learners see a zero-width latent."""
        latents = TaskLatents.create(EmbeddingMode.NONE, (1, 1), 2, 2, np.random.default_rng(0))
        assert latents.latent_dim == 0
        values = latents.latent_values(np.array([0, 0]), np.array([0, 0]), np.zeros((2, 0)), np.zeros((2, 0)))
        assert values.shape == (2, 0)
        assert latents.parameter_vectors() == []

    def test_round_trip(self) -> None:
        """to_dict and from_dict preserve every row."""
        latents = TaskLatents.create(EmbeddingMode.DISENTANGLED, (2, 4), 2, 3, np.random.default_rng(1))
        restored = TaskLatents.from_dict(latents.to_dict())
        np.testing.assert_array_equal(restored.g.means(), latents.g.means())
        assert restored.shape == (2, 4)


class TestLatentDump:
    """Test the latent CSV."""

    def test_columns_and_rows(self, tmp_path) -> None:
        """One row per (space, index, dim)."""
        latents = TaskLatents.create(EmbeddingMode.DISENTANGLED, (3, 3), 2, 2, np.random.default_rng(0))
        path = tmp_path / "latents.csv"
        write_latent_csv(path, latents.embeddings())
        with open(path) as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["space", "index", "dim", "mean", "std"]
        assert len(rows) == 1 + 2 * 3 * 2
        assert float(rows[1][4]) == pytest.approx(0.5)
