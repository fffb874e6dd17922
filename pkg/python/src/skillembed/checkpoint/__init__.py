"""Binary checkpoint codec, signing and file storage."""

from .codec import CheckpointReader, CheckpointWriter, Tag, dump, load
from .signing import CheckpointSigner
from .store import MAGIC, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint

__all__ = [
    "MAGIC",
    "CheckpointReader",
    "CheckpointSigner",
    "CheckpointWriter",
    "Tag",
    "decode_checkpoint",
    "dump",
    "encode_checkpoint",
    "load",
    "load_checkpoint",
    "save_checkpoint",
]
