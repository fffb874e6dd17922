"""Tests for replay memories and critic sets."""

import numpy as np
import pytest

from skillembed.errors import ConfigurationError, UsageError
from skillembed.numeric import Activation, mlp_eval
from skillembed.sac import CriticSet, ReplayMemory, soft_update


def _fill(memory: ReplayMemory, count: int, start: int = 0) -> None:
    for k in range(start, start + count):
        memory.add(np.full(2, k), np.array([0.5]), float(k), np.full(2, k + 1), k % 7 == 0)


class TestReplayMemory:
    """Test the per-task ring buffer."""

    def test_fifo_eviction(self) -> None:
        """Once full the oldest transitions are overwritten first."""
        memory = ReplayMemory(5, 2, 1)
        _fill(memory, 8)
        assert len(memory) == 5
        batch = memory.sample(5, np.random.default_rng(0))
        assert sorted(batch.rewards.tolist()) == [3.0, 4.0, 5.0, 6.0, 7.0]

    def test_grows_past_initial_allocation(self) -> None:
        """Storage grows on demand without losing transitions."""
        memory = ReplayMemory(5000, 2, 1)
        _fill(memory, 2500)
        assert len(memory) == 2500
        batch = memory.sample(2500, np.random.default_rng(1))
        assert sorted(batch.rewards.tolist()) == [float(k) for k in range(2500)]

    def test_sample_without_replacement(self) -> None:
        """A batch never repeats a transition."""
        memory = ReplayMemory(100, 2, 1)
        _fill(memory, 50)
        batch = memory.sample(40, np.random.default_rng(2))
        assert len(set(batch.rewards.tolist())) == 40

    def test_sample_is_capped_by_size(self) -> None:
        """Small memories return every stored transition."""
        memory = ReplayMemory(100, 2, 1)
        _fill(memory, 3)
        assert len(memory.sample(128, np.random.default_rng(3))) == 3

    def test_transitions_stay_aligned(self) -> None:
        """States, rewards, successors and done flags come from the same transition."""
        memory = ReplayMemory(100, 2, 1)
        _fill(memory, 30)
        batch = memory.sample(10, np.random.default_rng(4))
        np.testing.assert_array_equal(batch.states[:, 0], batch.rewards)
        np.testing.assert_array_equal(batch.next_states[:, 0], batch.rewards + 1)
        np.testing.assert_array_equal(batch.dones, batch.rewards % 7 == 0)

    def test_empty_sample_rejected(self) -> None:
        """Sampling an empty memory is a usage error."""
        with pytest.raises(UsageError):
            ReplayMemory(10, 2, 1).sample(1, np.random.default_rng(0))

    def test_capacity_must_be_positive(self) -> None:
        """A zero capacity is a configuration error."""
        with pytest.raises(ConfigurationError):
            ReplayMemory(0, 2, 1)

    def test_round_trip_preserves_order(self) -> None:
        """A restored memory evicts and samples exactly like the original."""
        memory = ReplayMemory(6, 2, 1)
        _fill(memory, 9)
        restored = ReplayMemory.from_dict(memory.to_dict())
        _fill(memory, 2, start=100)
        _fill(restored, 2, start=100)
        first = memory.sample(6, np.random.default_rng(5))
        second = restored.sample(6, np.random.default_rng(5))
        np.testing.assert_array_equal(first.rewards, second.rewards)
        np.testing.assert_array_equal(first.dones, second.dones)


@pytest.fixture
def critics() -> CriticSet:
    return CriticSet.create(3, 2, 4, 1, Activation.TANH, np.random.default_rng(0), (0, 1))


class TestSoftUpdate:
    """Test target network blending."""

    def test_full_step_copies(self, critics: CriticSet) -> None:
        """tau 1 is a hard copy."""
        critics.v.values[:] = 1.7
        soft_update(critics, 1.0)
        np.testing.assert_array_equal(critics.v_target.values, critics.v.values)

    def test_small_step(self, critics: CriticSet) -> None:
        """tau 0.01 moves a zero target 1% of the way to a unit value."""
        critics.v.values[:] = 1.0
        critics.v_target.values[:] = 0.0
        soft_update(critics, 0.01)
        np.testing.assert_allclose(critics.v_target.values, 0.01)

    def test_geometric_convergence(self, critics: CriticSet) -> None:
        """After n steps the remaining gap is (1 - tau)^n."""
        critics.v.values[:] = 1.0
        critics.v_target.values[:] = 0.0
        for _ in range(50):
            soft_update(critics, 0.1)
        np.testing.assert_allclose(critics.v_target.values, 1.0 - 0.9 ** 50)

    @pytest.mark.parametrize("tau", [0.0, -0.5, 1.5])
    def test_tau_range(self, critics: CriticSet, tau: float) -> None:
        """tau must lie in (0, 1]."""
        with pytest.raises(ConfigurationError):
            soft_update(critics, tau)

    def test_names_carry_cell(self, critics: CriticSet) -> None:
        """Parameter vectors are named after their cell."""
        assert [pv.name for pv in critics.parameter_vectors()] == ["q1[0,1]", "q2[0,1]", "v[0,1]", "v_target[0,1]"]

    def test_q_min_is_elementwise_minimum(self, critics: CriticSet) -> None:
        """Q_min never exceeds either twin."""
        rng = np.random.default_rng(1)
        states, actions = rng.normal(size=(20, 3)), rng.uniform(-1, 1, size=(20, 2))
        inputs = np.concatenate([states, actions], axis=1)
        q1 = mlp_eval(critics.q_spec, critics.q1, inputs)[:, 0]
        q2 = mlp_eval(critics.q_spec, critics.q2, inputs)[:, 0]
        q_min = critics.q_min_value(states, actions)
        assert np.all(q_min <= q1) and np.all(q_min <= q2)
        np.testing.assert_array_equal(q_min, np.minimum(q1, q2))
