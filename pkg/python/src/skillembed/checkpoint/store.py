"""Signed checkpoint files on disk."""

import logging
import os
from pathlib import Path
from typing import Any, Optional, Union

from ..errors import CheckpointError
from . import codec
from .signing import CheckpointSigner

logger = logging.getLogger(__name__)

MAGIC = b"SKEMCKPT"
DEFAULT_PASSPHRASE = "skillembed"


def default_signer() -> CheckpointSigner:
    """Signer used when a run sets no passphrase."""
    return CheckpointSigner.from_passphrase(DEFAULT_PASSPHRASE)


def encode_checkpoint(state: Any, signer: Optional[CheckpointSigner] = None) -> bytes:
    signer = signer or default_signer()
    return MAGIC + signer.sign(codec.dump(state))


def decode_checkpoint(data: bytes, signer: Optional[CheckpointSigner] = None) -> Any:
    if not data.startswith(MAGIC):
        raise CheckpointError("not a skillembed checkpoint")
    signer = signer or default_signer()
    payload = signer.verify(data[len(MAGIC):])
    if payload is None:
        raise CheckpointError("checkpoint signature does not match")
    return codec.load(payload)


def save_checkpoint(path: Union[str, Path], state: Any, signer: Optional[CheckpointSigner] = None) -> Path:
    """Writes ``state`` next to ``path`` and renames it into place.

    Args:
        path: Destination; parent directories are created.
        state: Value tree to encode.
        signer: Signer; the default one when None.

    Returns:
        ``path`` as a ``Path``.

    Raises:
        CheckpointError: If the state cannot be encoded.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode_checkpoint(state, signer)
    partial = path.with_name(path.name + ".partial")
    partial.write_bytes(data)
    os.replace(partial, path)
    logger.info("wrote checkpoint %s (%d bytes)", path, len(data))
    return path


def load_checkpoint(path: Union[str, Path], signer: Optional[CheckpointSigner] = None) -> Any:
    """Reads, verifies and decodes a checkpoint file.

    Args:
        path: Checkpoint file.
        signer: Signer it was written with; the default one when None.

    Returns:
        The decoded value tree.

    Raises:
        CheckpointError: If the file is unreadable, foreign, tampered or malformed.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    return decode_checkpoint(data, signer)
