"""
Weight-level merges of a base checkpoint with its fine-tune.

Two paths produce the same family of models:

* interpolation, ``(1 - alpha) * base + alpha * finetune`` on every tensor;
* low-rank rescaling, ``base + alpha * delta`` on the adapted weights only.

With ``finetune = base + delta`` the two agree for every alpha up to float32
rounding. All arithmetic runs in float64 on float32 inputs and is rounded
once to the output dtype. At alpha 0 and 1 the endpoint tensors are copied
through unchanged.
"""

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, TypeVar, Union

import numpy as np

from ..security.exceptions import AlphaOutOfRange, NameSetMismatch, ShapeMismatch
from ..tensorstore.checkpoint import (
    Checkpoint,
    EncodedTensor,
    Tensor,
    WritableTensor,
    checkpoint_bytes,
    save_checkpoint,
)
from ..tensorstore.dtypes import DType
from .adapters import LoraAdapter

logger = logging.getLogger(__name__)

ALPHA_METADATA_KEY = "lorasweep.alpha"
MODE_METADATA_KEY = "lorasweep.mode"

T = TypeVar("T")
R = TypeVar("R")


class MergeMode(Enum):
    INTERPOLATE = "interp"
    LORA_RESCALE = "lora"


@dataclass
class MergedCheckpoint:
    """Merge result ready to be written, tensors in base checkpoint order."""

    entries: list[tuple[str, WritableTensor, DType]]
    metadata: dict[str, str]

    def save(self, path: Union[str, Path]) -> str:
        """Write atomically and return the sha256 digest."""
        return save_checkpoint(path, self.entries, self.metadata)

    def to_bytes(self) -> bytes:
        return checkpoint_bytes(self.entries, self.metadata)

    def tensor(self, name: str) -> Tensor:
        for entry_name, tensor, _ in self.entries:
            if entry_name == name:
                return _decoded(tensor)
        raise KeyError(name)

    def tensors(self) -> dict[str, Tensor]:
        return {name: _decoded(tensor) for name, tensor, _ in self.entries}


def check_alpha(alpha: float, extrapolate: bool = False) -> None:
    """Reject non-finite alphas, and alphas outside [0, 1] unless extrapolating."""
    if not math.isfinite(alpha):
        raise AlphaOutOfRange(f"alpha must be finite, got {alpha}")
    if not extrapolate and not 0.0 <= alpha <= 1.0:
        raise AlphaOutOfRange(
            f"alpha {alpha} is outside [0, 1]",
            suggestions=["Pass --extrapolate to allow coefficients outside [0, 1]"],
        )


def interpolate_values(
    base: np.ndarray, other: np.ndarray, alpha: float
) -> np.ndarray:
    """``(1 - alpha) * base + alpha * other`` rounded to float32."""
    merged = (1.0 - alpha) * base.astype(np.float64) + alpha * other.astype(
        np.float64
    )
    return merged.astype(np.float32)


def rescale_values(base: np.ndarray, delta: np.ndarray, alpha: float) -> np.ndarray:
    """``base + alpha * delta`` rounded to float32."""
    return (base.astype(np.float64) + alpha * delta).astype(np.float32)


def interpolate(
    base: Checkpoint,
    other: Checkpoint,
    alpha: float,
    output_dtype: Optional[DType] = None,
    extrapolate: bool = False,
    workers: int = 1,
) -> MergedCheckpoint:
    """Interpolate every tensor between two checkpoints of one architecture.

    Raises:
        NameSetMismatch: the checkpoints hold different tensor names.
        ShapeMismatch: a tensor has different shapes in the two checkpoints.
    """
    check_alpha(alpha, extrapolate)
    _check_compatible(base, other)

    def merge_one(name: str) -> tuple[str, WritableTensor, DType]:
        dtype = output_dtype or base.entry(name).dtype
        if alpha == 0.0:
            return name, base.read_encoded(name), dtype
        if alpha == 1.0:
            return name, other.read_encoded(name), dtype
        values = interpolate_values(
            base.read(name).values, other.read(name).values, alpha
        )
        return name, Tensor(values), dtype

    entries = _map_ordered(merge_one, base.names, workers)
    logger.info("Interpolated %d tensors at alpha=%s", len(entries), alpha)
    metadata = _merged_metadata(base, alpha, MergeMode.INTERPOLATE)
    return MergedCheckpoint(entries, metadata)


def apply_lora(
    base: Checkpoint,
    adapter: LoraAdapter,
    alpha: float,
    output_dtype: Optional[DType] = None,
    extrapolate: bool = False,
    workers: int = 1,
) -> MergedCheckpoint:
    """Add ``alpha`` times each low-rank update to its base weight.

    Tensors no adapter pair targets are copied from the base; they are
    byte-identical whenever the output dtype equals the input dtype.
    """
    check_alpha(alpha, extrapolate)
    targets = adapter.targets
    for target in targets:
        base.entry(target)

    def merge_one(name: str) -> tuple[str, WritableTensor, DType]:
        dtype = output_dtype or base.entry(name).dtype
        pair = targets.get(name)
        if pair is None or alpha == 0.0:
            return name, base.read_encoded(name), dtype
        weight = base.read(name).values
        if weight.shape != pair.target_shape:
            raise ShapeMismatch(
                f"Update for {name} has shape {list(pair.target_shape)} but the "
                f"base weight is {list(weight.shape)}"
            )
        return name, Tensor(rescale_values(weight, pair.delta(), alpha)), dtype

    entries = _map_ordered(merge_one, base.names, workers)
    logger.info(
        "Applied %d low-rank updates at alpha=%s (%d tensors copied)",
        len(targets),
        alpha,
        len(entries) - len(targets),
    )
    metadata = _merged_metadata(base, alpha, MergeMode.LORA_RESCALE)
    return MergedCheckpoint(entries, metadata)


def materialize(
    base: Checkpoint,
    adapter: LoraAdapter,
    output_dtype: Optional[DType] = None,
    workers: int = 1,
) -> MergedCheckpoint:
    """The fully fine-tuned checkpoint, ``base + delta``."""
    return apply_lora(base, adapter, 1.0, output_dtype=output_dtype, workers=workers)


@dataclass(frozen=True)
class EquivalenceRow:
    """Deviation between the two merge paths at one coefficient."""

    alpha: float
    max_abs: float
    rms: float
    worst_tensor: Optional[str]


def equivalence_report(
    base: Checkpoint,
    adapter: LoraAdapter,
    alphas: Sequence[float],
    extrapolate: bool = False,
    workers: int = 1,
) -> list[EquivalenceRow]:
    """Compare interpolation towards the materialized fine-tune with rescaling.

    Both merges are produced by :func:`interpolate` and :func:`apply_lora`
    and compared tensor by tensor. Adapted weights come first, so they are
    reported as worst when all deviations are equal.
    """
    for alpha in alphas:
        check_alpha(alpha, extrapolate)

    finetuned = Checkpoint(materialize(base, adapter, workers=workers).to_bytes())
    targets = [name for name in base.names if name in adapter.targets]
    order = targets + [name for name in base.names if name not in adapter.targets]

    rows = []
    for alpha in alphas:
        via_interp = interpolate(
            base, finetuned, alpha, extrapolate=extrapolate, workers=workers
        ).tensors()
        via_rescale = apply_lora(
            base, adapter, alpha, extrapolate=extrapolate, workers=workers
        ).tensors()
        worst_name: Optional[str] = None
        worst = 0.0
        squares = 0.0
        count = 0
        for name in order:
            diff = _deviation(via_interp[name].values, via_rescale[name].values)
            if diff.size:
                peak = float(diff.max())
                if worst_name is None or peak > worst:
                    worst, worst_name = peak, name
                squares += float(np.sum(diff * diff))
                count += diff.size
        rms = math.sqrt(squares / count) if count else 0.0
        rows.append(EquivalenceRow(float(alpha), worst, rms, worst_name))
        logger.info(
            "alpha=%s max_abs=%.3e rms=%.3e worst=%s", alpha, worst, rms, worst_name
        )
    return rows


def _deviation(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Elementwise ``|first - second|``; equal infinities and paired NaNs are 0."""
    a, b = first.astype(np.float64), second.astype(np.float64)
    with np.errstate(invalid="ignore"):
        diff = np.abs(a - b)
    diff[(a == b) | (np.isnan(a) & np.isnan(b))] = 0.0
    return diff


def _check_compatible(base: Checkpoint, other: Checkpoint) -> None:
    base_names, other_names = set(base.names), set(other.names)
    if base_names != other_names:
        raise NameSetMismatch(base_names - other_names, other_names - base_names)

    mismatched = [
        f"{name} {list(base.entry(name).shape)} vs {list(other.entry(name).shape)}"
        for name in base.names
        if base.entry(name).shape != other.entry(name).shape
    ]
    if mismatched:
        raise ShapeMismatch(f"Tensor shapes differ: {'; '.join(mismatched)}")


def _merged_metadata(base: Checkpoint, alpha: float, mode: MergeMode) -> dict[str, str]:
    metadata = dict(base.metadata or {})
    metadata[ALPHA_METADATA_KEY] = repr(float(alpha))
    metadata[MODE_METADATA_KEY] = mode.value
    return metadata


def _map_ordered(func: Callable[[T], R], items: Sequence[T], workers: int) -> list[R]:
    """Apply ``func`` to every item, results in input order."""
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _decoded(tensor: WritableTensor) -> Tensor:
    return tensor.decode() if isinstance(tensor, EncodedTensor) else tensor
