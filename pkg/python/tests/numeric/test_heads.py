"""Tests for action heads."""

import numpy as np
import pytest

from skillembed.errors import UsageError
from skillembed.numeric import ParamVector, Tape
from skillembed.numeric import autodiff as ad
from skillembed.numeric.gradcheck import gradient_check
from skillembed.numeric.heads import (categorical_head, categorical_log_prob, gaussian_tanh_head,
                                      gaussian_tanh_log_prob, gaussian_tanh_sample, sample_categorical,
                                      softmax)


class TestCategorical:
    """Test the softmax head."""

    def test_two_logit_probabilities(self) -> None:
        """Logits [1, 0] give [0.7311, 0.2689]."""
        np.testing.assert_allclose(softmax(np.array([1.0, 0.0])), [0.7311, 0.2689], atol=1e-4)

    def test_log_prob_matches_softmax(self) -> None:
        """Log probabilities are log softmax entries."""
        logits = np.array([[1.0, 0.0], [0.2, -0.3]])
        tape = Tape()
        log_probs = categorical_log_prob(tape.constant(logits), np.array([0, 1]))
        expected = np.log(softmax(logits)[[0, 1], [0, 1]])
        np.testing.assert_allclose(log_probs.value, expected)

    def test_sampling_frequency(self) -> None:
        """Sample frequencies approach the probabilities."""
        rng = np.random.default_rng(0)
        probs = np.tile([0.7311, 0.2689], (20000, 1))
        picks = sample_categorical(probs, rng.random(20000))
        assert np.mean(picks == 0) == pytest.approx(0.7311, abs=0.01)

    def test_head_returns_taped_log_prob(self) -> None:
        """The sampled action's log probability is differentiable."""
        logits = ParamVector([(2, 3)], np.array([0.1, 0.5, -0.2, 1.0, 0.0, 0.3]), "logits")
        rng = np.random.default_rng(1)
        tape = Tape()
        actions, log_prob = categorical_head(tape.param(logits).reshape((2, 3)), rng)
        tape.backward(ad.sum(log_prob))
        assert actions.shape == (2,)
        assert np.abs(logits.grads.reshape(2, 3).sum(axis=1)).max() < 1e-12

    def test_out_of_range_action_rejected(self) -> None:
        """Actions must index a logit."""
        tape = Tape()
        with pytest.raises(UsageError):
            categorical_log_prob(tape.constant(np.zeros((1, 2))), np.array([2]))


class TestGaussianTanh:
    """Test the squashed Gaussian head."""

    def test_actions_inside_unit_box(self) -> None:
        """Squashed actions stay in (-1, 1)."""
        rng = np.random.default_rng(0)
        actions, _ = gaussian_tanh_sample(np.zeros((100, 2)), np.full((100, 2), 1.5),
                                          rng.standard_normal((100, 2)) * 5.0)
        assert np.all(np.abs(actions) < 1.0)

    def test_sample_and_stored_log_prob_agree(self) -> None:
        """Re-scoring a sampled action reproduces its log density."""
        rng = np.random.default_rng(2)
        mean = rng.normal(size=(4, 2)) * 0.3
        log_std = rng.normal(size=(4, 2)) * 0.2 - 0.5
        noise = rng.standard_normal((4, 2))
        tape = Tape()
        action, log_prob = gaussian_tanh_head(tape.constant(mean), tape.constant(log_std), noise)
        rescored = gaussian_tanh_log_prob(tape.constant(mean), tape.constant(log_std), action.value)
        np.testing.assert_allclose(rescored.value, log_prob.value, atol=1e-5)
        _, untaped = gaussian_tanh_sample(mean, log_std, noise)
        np.testing.assert_allclose(untaped, log_prob.value)

    def test_reparameterized_gradient(self) -> None:
        """Gradients flow through the sampled action and its density."""
        rng = np.random.default_rng(3)
        params = ParamVector([(3, 4)], rng.normal(size=12) * 0.3, "head")
        noise = rng.standard_normal((3, 2))
        weights = rng.normal(size=(3, 2))

        def loss(tape: Tape):
            out = tape.param(params).reshape((3, 4))
            action, log_prob = gaussian_tanh_head(out[:, :2], out[:, 2:], noise)
            return ad.sum(action * weights) + ad.sum(log_prob) * 0.1

        assert gradient_check(loss, [params]) < 1e-4

    def test_shape_mismatch_rejected(self) -> None:
        """Mean, log std and noise must agree."""
        tape = Tape()
        with pytest.raises(UsageError):
            gaussian_tanh_head(tape.constant(np.zeros(2)), tape.constant(np.zeros(2)), np.zeros(3))
