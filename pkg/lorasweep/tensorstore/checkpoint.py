"""
Reader and writer for single-file tensor checkpoints (safetensors layout).

A file is an 8-byte little-endian header length N, N bytes of UTF-8 JSON
mapping tensor names to ``{"dtype", "shape", "data_offsets"}`` plus an
optional ``__metadata__`` object, then the raw payload. Header validation
needs only the header and the total file size; payload bytes are touched
only when a tensor is read.
"""

import hashlib
import io
import json
import logging
import math
import mmap
import os
import struct
import tempfile
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO, Optional, TypeVar, Union

import numpy as np

from ..security.exceptions import (
    CheckpointIOError,
    DuplicateName,
    MalformedHeader,
    OverlapError,
    TruncatedPayload,
    UnknownTensor,
)
from ..security.limits import LENGTH_PREFIX_SPAN, LimitValidator
from ..utils.config import CheckpointLimits
from .dtypes import DType, decode, encode

logger = logging.getLogger(__name__)

METADATA_KEY = "__metadata__"

ByteSource = Union[bytes, bytearray, memoryview, mmap.mmap, BinaryIO]
PathLike = Union[str, "os.PathLike[str]"]
C = TypeVar("C", bound="Checkpoint")


@dataclass(frozen=True)
class Tensor:
    """Working-precision tensor: float32 values in row-major order."""

    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.dtype != np.float32:
            object.__setattr__(self, "values", self.values.astype(np.float32))

    @classmethod
    def from_flat(cls, values: Sequence[float], shape: Sequence[int]) -> "Tensor":
        """Build a tensor from a flat sequence and an explicit shape."""
        flat = np.asarray(values, dtype=np.float32).reshape(-1)
        expected = math.prod(shape)
        if flat.size != expected:
            raise ValueError(
                f"{flat.size} values cannot fill shape {list(shape)} ({expected})"
            )
        return cls(flat.reshape(tuple(shape)))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(d) for d in self.values.shape)


@dataclass(frozen=True)
class EncodedTensor:
    """Tensor kept in its on-disk encoding, for bit-exact copy-through."""

    dtype: DType
    shape: tuple[int, ...]
    data: bytes

    def decode(self) -> Tensor:
        return Tensor(decode(self.data, self.dtype).reshape(self.shape))


@dataclass(frozen=True)
class TensorEntry:
    """One header entry: where a tensor lives in the payload and how to read it."""

    name: str
    dtype: DType
    shape: tuple[int, ...]
    data_offsets: tuple[int, int]

    @property
    def numel(self) -> int:
        return math.prod(self.shape)

    @property
    def nbytes(self) -> int:
        return self.data_offsets[1] - self.data_offsets[0]


@dataclass
class CheckpointIndex:
    """Validated checkpoint header, entries ordered by payload position."""

    entries: dict[str, TensorEntry]
    metadata: Optional[dict[str, str]]
    header_len: int
    payload_origin: int = field(init=False)

    def __post_init__(self) -> None:
        self.payload_origin = 8 + self.header_len

    @property
    def payload_len(self) -> int:
        return max((e.data_offsets[1] for e in self.entries.values()), default=0)

    @property
    def names(self) -> list[str]:
        return list(self.entries)

    def entry(self, name: str) -> TensorEntry:
        try:
            return self.entries[name]
        except KeyError:
            raise UnknownTensor(f"Tensor {name!r} is not in the checkpoint") from None


WritableTensor = Union[Tensor, EncodedTensor]
CheckpointEntries = Sequence[tuple[str, WritableTensor, DType]]


def parse_header(
    source: ByteSource,
    *,
    total_size: Optional[int] = None,
    limits: Optional[CheckpointLimits] = None,
) -> CheckpointIndex:
    """Parse and validate the header of a checkpoint.

    Args:
        source: Whole file contents or a seekable binary stream.
        total_size: Total file size; measured from the source when omitted.
        limits: Header limits and the permissive-gap switch.

    Returns:
        The validated index.
    """
    limits = limits or CheckpointLimits()
    validator = LimitValidator(limits)
    file_size = total_size if total_size is not None else _source_size(source)

    if file_size < 8:
        raise MalformedHeader(
            f"File is {file_size} bytes, too short for the 8-byte header length",
            offset=LENGTH_PREFIX_SPAN,
        )

    (header_len,) = struct.unpack("<Q", _read_span(source, 0, 8))
    validator.validate_header_length(header_len, file_size)

    body_span = (8, 8 + header_len)
    raw_header = _read_span(source, 8, header_len)
    try:
        document = json.loads(
            raw_header.decode("utf-8"), object_pairs_hook=_reject_duplicate_keys
        )
    except UnicodeDecodeError as e:
        raise MalformedHeader(
            f"Header is not valid UTF-8: {e}", offset=body_span
        ) from e
    except json.JSONDecodeError as e:
        raise MalformedHeader(
            f"Header is not valid JSON: {e.msg} (header char {e.pos})",
            offset=body_span,
        ) from e

    if not isinstance(document, dict):
        raise MalformedHeader("Header JSON must be an object", offset=body_span)

    metadata = _parse_metadata(document.pop(METADATA_KEY, None), body_span)
    validator.validate_tensor_count(len(document))

    entries = [_parse_entry(name, spec, body_span) for name, spec in document.items()]
    entries.sort(key=lambda e: (e.data_offsets[0], e.data_offsets[1]))
    _check_coverage(entries, file_size - 8 - header_len, limits.allow_gaps)

    return CheckpointIndex(
        entries={e.name: e for e in entries},
        metadata=metadata,
        header_len=header_len,
    )


def read_encoded(
    index: CheckpointIndex, name: str, source: ByteSource
) -> EncodedTensor:
    """Read one tensor's payload bytes without decoding them."""
    entry = index.entry(name)
    begin, _ = entry.data_offsets
    data = _read_span(source, index.payload_origin + begin, entry.nbytes)
    if len(data) != entry.nbytes:
        raise TruncatedPayload(
            f"Tensor {name!r} needs {entry.nbytes} bytes, only {len(data)} available",
            offset=(
                index.payload_origin + begin,
                index.payload_origin + entry.data_offsets[1],
            ),
        )
    return EncodedTensor(entry.dtype, entry.shape, data)


def read_tensor(index: CheckpointIndex, name: str, source: ByteSource) -> Tensor:
    """Read one tensor and decode it into working precision."""
    return read_encoded(index, name, source).decode()


def write_checkpoint(
    entries: CheckpointEntries,
    metadata: Optional[dict[str, str]],
    sink: BinaryIO,
) -> None:
    """Write tensors contiguously, in the given order, behind a canonical header.

    Tensors already encoded in the requested dtype are copied byte for byte.
    """
    names = [name for name, _, _ in entries]
    _check_unique_names(names)

    payloads: list[bytes] = []
    header: dict[str, Any] = {}
    offset = 0
    for name, tensor, dtype in entries:
        data = _encode_entry(tensor, dtype)
        header[name] = {
            "dtype": dtype.tag,
            "shape": list(tensor.shape),
            "data_offsets": [offset, offset + len(data)],
        }
        offset += len(data)
        payloads.append(data)

    if metadata is not None:
        header[METADATA_KEY] = {str(k): str(v) for k, v in metadata.items()}

    header_bytes = json.dumps(
        header, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")

    try:
        sink.write(struct.pack("<Q", len(header_bytes)))
        sink.write(header_bytes)
        for data in payloads:
            sink.write(data)
    except OSError as e:
        raise CheckpointIOError(f"Failed to write checkpoint: {e}") from e


def checkpoint_bytes(
    entries: CheckpointEntries, metadata: Optional[dict[str, str]] = None
) -> bytes:
    """Serialize a checkpoint into memory."""
    buffer = io.BytesIO()
    write_checkpoint(entries, metadata, buffer)
    return buffer.getvalue()


def save_checkpoint(
    path: PathLike,
    entries: CheckpointEntries,
    metadata: Optional[dict[str, str]] = None,
) -> str:
    """Write a checkpoint atomically and return its sha256 hex digest."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            write_checkpoint(entries, metadata, handle)
        os.replace(tmp_name, target)
    except OSError as e:
        raise CheckpointIOError(f"Failed to write {target}: {e}") from e
    finally:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
    digest = file_digest(target)
    logger.info("Wrote %s (%d tensors, sha256 %s)", target, len(entries), digest)
    return digest


def file_digest(path: PathLike) -> str:
    """sha256 hex digest of a file's bytes."""
    sha = hashlib.sha256()
    try:
        with open(path, "rb") as handle:
            for chunk in iter(lambda: handle.read(1 << 20), b""):
                sha.update(chunk)
    except OSError as e:
        raise CheckpointIOError(f"Cannot read {path}: {e}") from e
    return sha.hexdigest()


class Checkpoint:
    """Checkpoint over an in-memory byte buffer, with a parsed index.

    Reads of distinct tensors may run from several threads at once.
    """

    def __init__(self, data: ByteSource, limits: Optional[CheckpointLimits] = None):
        self.index = parse_header(data, limits=limits)
        self._source = data

    def __enter__(self: C) -> C:
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()

    def close(self) -> None:
        pass

    @property
    def names(self) -> list[str]:
        return self.index.names

    @property
    def metadata(self) -> Optional[dict[str, str]]:
        return self.index.metadata

    def entry(self, name: str) -> TensorEntry:
        return self.index.entry(name)

    def read(self, name: str) -> Tensor:
        return read_tensor(self.index, name, self._source)

    def read_encoded(self, name: str) -> EncodedTensor:
        return read_encoded(self.index, name, self._source)

    def tensors(self) -> Iterator[tuple[str, Tensor]]:
        for name in self.index.entries:
            yield name, self.read(name)


class CheckpointReader(Checkpoint):
    """Memory-mapped checkpoint file."""

    def __init__(self, path: PathLike, limits: Optional[CheckpointLimits] = None):
        self.path = Path(path)
        try:
            self._handle = open(self.path, "rb")
        except OSError as e:
            raise CheckpointIOError(f"Cannot open {self.path}: {e}") from e

        size = os.fstat(self._handle.fileno()).st_size
        self._map: Optional[mmap.mmap] = None
        source: ByteSource = b""
        if size:
            self._map = mmap.mmap(self._handle.fileno(), 0, access=mmap.ACCESS_READ)
            source = self._map
        try:
            self.index = parse_header(source, total_size=size, limits=limits)
        except Exception:
            self.close()
            raise
        self._source = source

    def close(self) -> None:
        if self._map is not None:
            self._map.close()
            self._map = None
        self._handle.close()


def load_checkpoint(
    path: PathLike, limits: Optional[CheckpointLimits] = None
) -> dict[str, Tensor]:
    """Read every tensor of a checkpoint into working precision."""
    with CheckpointReader(path, limits) as reader:
        return dict(reader.tensors())


def _encode_entry(tensor: WritableTensor, dtype: DType) -> bytes:
    if isinstance(tensor, EncodedTensor):
        if tensor.dtype is dtype:
            return tensor.data
        tensor = tensor.decode()
    return encode(tensor.values, dtype)


def _check_unique_names(names: Iterable[str]) -> None:
    seen: set[str] = set()
    for name in names:
        if name == METADATA_KEY:
            raise DuplicateName(
                f"{METADATA_KEY!r} is reserved and cannot name a tensor"
            )
        if name in seen:
            raise DuplicateName(f"Tensor name {name!r} appears more than once")
        seen.add(name)


def _reject_duplicate_keys(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    result: dict[str, Any] = {}
    for key, value in pairs:
        if key in result:
            raise DuplicateName(f"Header declares {key!r} more than once")
        result[key] = value
    return result


def _parse_metadata(
    raw: Any, body_span: tuple[int, int]
) -> Optional[dict[str, str]]:
    if raw is None:
        return None
    if not isinstance(raw, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in raw.items()
    ):
        raise MalformedHeader(
            f"{METADATA_KEY} must map strings to strings", offset=body_span
        )
    return dict(raw)


def _is_count(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value >= 0


def _parse_entry(name: str, spec: Any, body_span: tuple[int, int]) -> TensorEntry:
    if not isinstance(spec, dict):
        raise MalformedHeader(f"Entry {name!r} must be an object", offset=body_span)

    missing = {"dtype", "shape", "data_offsets"} - set(spec)
    if missing:
        raise MalformedHeader(
            f"Entry {name!r} lacks {', '.join(sorted(missing))}", offset=body_span
        )

    try:
        dtype = DType.from_tag(spec["dtype"])
    except (ValueError, TypeError):
        raise MalformedHeader(
            f"Entry {name!r} has unknown dtype {spec['dtype']!r}",
            offset=body_span,
            suggestions=["Supported dtypes: F32, F16, BF16"],
        ) from None

    shape = spec["shape"]
    if not isinstance(shape, list) or not all(_is_count(d) for d in shape):
        raise MalformedHeader(
            f"Entry {name!r} has invalid shape {shape!r}", offset=body_span
        )

    offsets = spec["data_offsets"]
    if (
        not isinstance(offsets, list)
        or len(offsets) != 2
        or not all(_is_count(o) for o in offsets)
        or offsets[0] > offsets[1]
    ):
        raise MalformedHeader(
            f"Entry {name!r} has invalid data_offsets {offsets!r}", offset=body_span
        )

    entry = TensorEntry(name, dtype, tuple(shape), (offsets[0], offsets[1]))
    expected = dtype.byte_width * entry.numel
    if entry.nbytes != expected:
        raise MalformedHeader(
            f"Entry {name!r} declares {entry.nbytes} bytes but {dtype} "
            f"shape {list(shape)} needs {expected}",
            offset=body_span,
        )
    return entry


def _check_coverage(
    entries: list[TensorEntry], payload_len: int, allow_gaps: bool
) -> None:
    """Byte ranges must tile [0, payload_len) without overlaps or holes."""
    cursor = 0
    for entry in entries:
        begin, end = entry.data_offsets
        if begin < cursor:
            raise OverlapError(
                f"Tensor {entry.name!r} range [{begin}, {end}) overlaps a "
                f"previous tensor ending at {cursor}"
            )
        if begin > cursor:
            if not allow_gaps:
                raise OverlapError(
                    f"Payload bytes [{cursor}, {begin}) are not covered by any tensor",
                    suggestions=["Read third-party files with allow_gaps enabled"],
                )
            logger.warning("Ignoring unused payload bytes [%d, %d)", cursor, begin)
        cursor = end

    if cursor > payload_len:
        raise TruncatedPayload(
            f"Header declares {cursor} payload bytes but the file holds {payload_len}"
        )
    if cursor < payload_len:
        if not allow_gaps:
            raise OverlapError(
                f"Payload bytes [{cursor}, {payload_len}) are not covered by any tensor"
            )
        logger.warning("Ignoring %d trailing payload bytes", payload_len - cursor)


def _source_size(source: ByteSource) -> int:
    if isinstance(source, (bytes, bytearray, memoryview, mmap.mmap)):
        return len(source)
    position = source.tell()
    source.seek(0, os.SEEK_END)
    size = source.tell()
    source.seek(position)
    return size


def _read_span(source: ByteSource, start: int, length: int) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview, mmap.mmap)):
        return bytes(source[start : start + length])
    source.seek(start)
    return source.read(length)
