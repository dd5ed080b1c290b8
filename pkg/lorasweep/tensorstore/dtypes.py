"""
Element codecs for the checkpoint dtypes lorasweep understands.

All arithmetic happens on float32 working arrays. F32 round-trips exactly,
F16 uses numpy's IEEE-754 binary16 conversion (round-to-nearest-even) and
BF16 is handled at the bit level: decoding places the 16 stored bits on top of
a float32 pattern, encoding rounds the float32 pattern to nearest-even.
"""

from enum import Enum

import numpy as np

_BF16_QUIET_BIT = np.uint32(0x0040)


class DType(Enum):
    """Checkpoint element types with their on-disk width in bytes."""

    F32 = ("F32", 4)
    F16 = ("F16", 2)
    BF16 = ("BF16", 2)

    def __init__(self, tag: str, byte_width: int) -> None:
        self.tag = tag
        self.byte_width = byte_width

    @classmethod
    def from_tag(cls, tag: str) -> "DType":
        """Look up a dtype by its header string ("F32", "F16", "BF16")."""
        for member in cls:
            if member.tag == tag:
                return member
        raise ValueError(f"Unknown dtype string {tag!r}")

    def __str__(self) -> str:
        return self.tag


def decode(raw: bytes, dtype: DType) -> np.ndarray:
    """Decode little-endian payload bytes into a flat float32 array."""
    if len(raw) % dtype.byte_width:
        raise ValueError(
            f"{len(raw)} bytes is not a multiple of the {dtype} width "
            f"({dtype.byte_width})"
        )
    if not raw:
        return np.empty(0, dtype=np.float32)

    if dtype is DType.F32:
        return np.frombuffer(raw, dtype="<f4").astype(np.float32)

    if dtype is DType.F16:
        return np.frombuffer(raw, dtype="<f2").astype(np.float32)

    # bfloat16 is the upper half of a float32 bit pattern
    halves = np.frombuffer(raw, dtype="<u2").astype(np.uint32)
    return (halves << np.uint32(16)).view(np.float32)


def encode(values: np.ndarray, dtype: DType) -> bytes:
    """Encode a float32 array as little-endian payload bytes."""
    flat = np.ascontiguousarray(values, dtype=np.float32).reshape(-1)

    if dtype is DType.F32:
        return flat.astype("<f4").tobytes()

    if dtype is DType.F16:
        with np.errstate(over="ignore"):
            return flat.astype("<f2").tobytes()

    return float32_to_bfloat16_bits(flat).astype("<u2").tobytes()


def float32_to_bfloat16_bits(values: np.ndarray) -> np.ndarray:
    """Round float32 values to bfloat16 bit patterns (round-to-nearest-even).

    NaNs keep their sign and upper payload bits; a payload that would vanish
    after truncation gets the quiet bit so the result is still a NaN.
    """
    bits = np.ascontiguousarray(values, dtype=np.float32).view(np.uint32)
    wide = bits.astype(np.uint64)

    lsb = (wide >> np.uint64(16)) & np.uint64(1)
    rounded = ((wide + np.uint64(0x7FFF) + lsb) >> np.uint64(16)).astype(np.uint32)

    nan_mask = np.isnan(values.astype(np.float32, copy=False))
    if nan_mask.any():
        truncated = bits[nan_mask] >> np.uint32(16)
        empty_payload = (truncated & np.uint32(0x007F)) == 0
        truncated[empty_payload] |= _BF16_QUIET_BIT
        rounded[nan_mask] = truncated

    return rounded.astype(np.uint16)


def round_to_dtype(values: np.ndarray, dtype: DType) -> np.ndarray:
    """Return the float32 values that survive an encode/decode through dtype."""
    return decode(encode(values, dtype), dtype).reshape(np.shape(values))
