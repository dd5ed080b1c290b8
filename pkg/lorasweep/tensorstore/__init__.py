"""
Tensor checkpoint container: dtype codecs, header parsing, reading and writing.
"""

from .checkpoint import (
    Checkpoint,
    CheckpointIndex,
    CheckpointReader,
    EncodedTensor,
    Tensor,
    TensorEntry,
    load_checkpoint,
    parse_header,
    read_tensor,
    save_checkpoint,
    write_checkpoint,
)
from .dtypes import DType

__all__ = [
    "Checkpoint",
    "CheckpointIndex",
    "CheckpointReader",
    "DType",
    "EncodedTensor",
    "Tensor",
    "TensorEntry",
    "load_checkpoint",
    "parse_header",
    "read_tensor",
    "save_checkpoint",
    "write_checkpoint",
]
