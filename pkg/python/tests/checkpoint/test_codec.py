"""Tests for the checkpoint codec and signer."""

import math

import numpy as np
import pytest

from skillembed.checkpoint import CheckpointSigner, Tag, dump, load
from skillembed.errors import CheckpointError, ConfigurationError


class TestCodec:
    """Test encoding and decoding of checkpoint values."""

    @pytest.mark.parametrize("value", [None, True, False, "", "policy", "zéro"])
    def test_basic_types(self, value) -> None:
        """Test None, booleans and strings."""
        assert load(dump(value)) == value

    @pytest.mark.parametrize("value", [0, 1, 122, 123, 255, 256, 65535, -1, -123, -124, -256, -257, -70000,
                                       (1 << 30) - 1, -(1 << 30) + 1])
    def test_packed_integers(self, value) -> None:
        """Test every packing scheme below the bignum threshold."""
        data = dump(value)
        assert data[2] == Tag.INT.value
        result = load(data)
        assert result == value
        assert isinstance(result, int)

    def test_immediate_integers_take_one_byte(self) -> None:
        """Test small magnitudes are packed into the length byte."""
        assert len(dump(0)) == 4
        assert len(dump(122)) == 4
        assert len(dump(-123)) == 4
        assert len(dump(123)) == 5

    @pytest.mark.parametrize("value", [1 << 30, -(1 << 30), 2 ** 64 + 17, -(2 ** 127) + 5, 2 ** 128 - 1])
    def test_bignums(self, value) -> None:
        """Test arbitrary-precision integers such as generator states."""
        data = dump(value)
        assert data[2] == Tag.BIGNUM.value
        assert load(data) == value

    @pytest.mark.parametrize("value", [0.0, -0.0, 1.5, 1e-300, -3.25e12, math.inf, -math.inf])
    def test_floats(self, value) -> None:
        """Test float64 values are kept exactly."""
        result = load(dump(value))
        assert result == value
        assert math.copysign(1.0, result) == math.copysign(1.0, value)

    def test_nan(self) -> None:
        """Test NaN survives."""
        assert math.isnan(load(dump(math.nan)))

    def test_numpy_scalars(self) -> None:
        """Test numpy scalars decode as plain Python values."""
        assert load(dump([np.float64(0.25), np.int64(-7), np.bool_(True)])) == [0.25, -7, True]

    def test_containers(self) -> None:
        """Test nested lists, tuples and dictionaries."""
        value = {"cells": [[0, 1], [2, 3]], "moments": {(0, 1): (0.5, 2.0)}, "name": "sac", "empty": {}}
        result = load(dump(value))
        assert result == value
        assert isinstance(result["moments"][(0, 1)], tuple)

    @pytest.mark.parametrize("array", [
        np.arange(12, dtype=np.float64).reshape(3, 4),
        np.array([[1, -2], [3, 2 ** 40]], dtype=np.int64),
        np.array([True, False, True]),
        np.zeros((0, 5)),
        np.array(3.5),
    ])
    def test_arrays(self, array) -> None:
        """Test dtype, shape and contents of numpy arrays."""
        result = load(dump(array))
        assert result.shape == array.shape
        assert result.dtype.kind == array.dtype.kind
        np.testing.assert_array_equal(result, array)

    def test_decoded_arrays_are_writable(self) -> None:
        """Test decoded arrays can be updated in place."""
        result = load(dump(np.ones(3)))
        result[0] = 2.0
        assert result[0] == 2.0

    def test_generator_state(self) -> None:
        """Test a restored generator continues the same stream."""
        rng = np.random.default_rng(123)
        rng.normal(size=5)
        state = load(dump(rng.bit_generator.state))
        expected = rng.normal(size=4)
        other = np.random.default_rng(0)
        other.bit_generator.state = state
        np.testing.assert_array_equal(other.normal(size=4), expected)

    def test_unsupported_type(self) -> None:
        """Test values without an encoding are rejected."""
        with pytest.raises(CheckpointError):
            dump({"bad": object()})
        with pytest.raises(CheckpointError):
            dump(np.array(["a"]))

    def test_bad_version(self) -> None:
        """Test foreign version bytes are rejected."""
        data = bytearray(dump(1))
        data[0] = 4
        with pytest.raises(CheckpointError, match="version"):
            load(bytes(data))

    def test_unknown_tag(self) -> None:
        """Test an unknown tag byte is rejected."""
        with pytest.raises(CheckpointError, match="unknown tag"):
            load(bytes([1, 0, ord("?")]))

    @pytest.mark.parametrize("value", ["policy", [1, 2, 3], np.ones(4), 2 ** 70, 1.5])
    def test_truncated(self, value) -> None:
        """Test every truncation of a payload is rejected."""
        data = dump(value)
        for cut in range(len(data)):
            with pytest.raises(CheckpointError):
                load(data[:cut])

    def test_trailing_bytes(self) -> None:
        """Test data after the payload is rejected."""
        with pytest.raises(CheckpointError, match="trailing"):
            load(dump(1) + b"\x00")


class TestCheckpointSigner:
    """Test HMAC signing of payloads."""

    def test_sign_and_verify(self) -> None:
        """Test a signed payload verifies to itself."""
        signer = CheckpointSigner(b"test-secret-key-that-is-long-enough")
        signed = signer.sign(b"payload")
        assert len(signed) == len(b"payload") + 32
        assert signer.verify(signed) == b"payload"

    def test_wrong_secret_returns_none(self) -> None:
        """Test a different secret does not verify."""
        signed = CheckpointSigner(b"secret-1").sign(b"payload")
        assert CheckpointSigner(b"secret-2").verify(signed) is None

    def test_tampered_payload_returns_none(self) -> None:
        """Test flipping any byte breaks verification."""
        signer = CheckpointSigner(b"secret")
        signed = bytearray(signer.sign(b"payload"))
        for position in (0, 3, len(signed) - 1):
            tampered = bytearray(signed)
            tampered[position] ^= 0x01
            assert signer.verify(bytes(tampered)) is None

    def test_short_input_returns_none(self) -> None:
        """Test input shorter than a digest does not verify."""
        assert CheckpointSigner(b"secret").verify(b"short") is None

    def test_passphrase_derivation(self) -> None:
        """Test the same passphrase derives the same key."""
        signed = CheckpointSigner.from_passphrase("run-17").sign(b"payload")
        assert CheckpointSigner.from_passphrase("run-17").verify(signed) == b"payload"
        assert CheckpointSigner.from_passphrase("run-18").verify(signed) is None

    @pytest.mark.parametrize("make", [lambda: CheckpointSigner(b""), lambda: CheckpointSigner.from_passphrase(""),
                                      lambda: CheckpointSigner.from_passphrase("x", iterations=0)])
    def test_invalid_secrets(self, make) -> None:
        """Test empty secrets and zero iterations are rejected."""
        with pytest.raises(ConfigurationError):
            make()
