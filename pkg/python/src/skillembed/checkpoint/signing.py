"""HMAC-SHA256 signing of checkpoint payloads."""

import hashlib
import hmac
from typing import Optional

from ..errors import ConfigurationError

DIGEST_SIZE = 32
KEY_SALT = "skillembed checkpoint"
KEY_ITERATIONS = 1000


class CheckpointSigner:
    """Appends a digest to a payload and checks it on the way back in.

    The signature guards against truncated or hand-edited files; anyone with
    the secret can produce a valid checkpoint.
    """

    def __init__(self, secret: bytes) -> None:
        """Initialize CheckpointSigner.

        Args:
            secret: HMAC key.

        Raises:
            ConfigurationError: If ``secret`` is empty.
        """
        if not secret:
            raise ConfigurationError("checkpoint secret must not be empty")
        self._secret = bytes(secret)

    @classmethod
    def from_passphrase(cls, passphrase: str, iterations: int = KEY_ITERATIONS) -> "CheckpointSigner":
        """Derives a 256-bit key from ``passphrase`` with PBKDF2-HMAC-SHA256.

        Args:
            passphrase: Non-empty passphrase.
            iterations: PBKDF2 iteration count.

        Returns:
            A signer keyed with the derived key.

        Raises:
            ConfigurationError: On an empty passphrase or a non-positive iteration count.
        """
        if not passphrase:
            raise ConfigurationError("checkpoint passphrase must not be empty")
        if iterations < 1:
            raise ConfigurationError(f"key derivation needs at least one iteration, got {iterations}")
        key = hashlib.pbkdf2_hmac("sha256", passphrase.encode("utf-8"), KEY_SALT.encode("utf-8"), iterations,
                                  DIGEST_SIZE)
        return cls(key)

    def digest(self, payload: bytes) -> bytes:
        return hmac.new(self._secret, payload, hashlib.sha256).digest()

    def sign(self, payload: bytes) -> bytes:
        """``payload`` followed by its 32-byte HMAC-SHA256 digest."""
        return payload + self.digest(payload)

    def verify(self, signed: bytes) -> Optional[bytes]:
        """The payload if the trailing digest matches, otherwise None.

        Args:
            signed: Bytes produced by ``sign``.

        Returns:
            The payload, or None when the digest is missing or wrong.
        """
        if len(signed) < DIGEST_SIZE:
            return None
        payload, digest = signed[:-DIGEST_SIZE], signed[-DIGEST_SIZE:]
        if not hmac.compare_digest(digest, self.digest(payload)):
            return None
        return payload
