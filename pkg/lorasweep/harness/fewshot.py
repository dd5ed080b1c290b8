"""
Few-shot example pools and per-sample example permutation.

The permutation of example blocks is seeded per sample with 64-bit FNV-1a
over the master seed (8 bytes, little-endian, two's complement) followed by
the UTF-8 sample id. The seed drives numpy's PCG64 generator and a
Fisher-Yates shuffle, so orders are reproducible across runs and machines.
"""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any, TypeVar, Union

import numpy as np

from ..scoring.distance import normalize
from ..scoring.pipeline import read_jsonl
from ..security.exceptions import ManifestError, PoolExhausted, PoolOverlap

T = TypeVar("T")

SEED_FUNCTION = "fnv1a64(master_seed:int64le || sample_id:utf8) -> numpy PCG64"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    value = _FNV_OFFSET
    for byte in data:
        value ^= byte
        value = (value * _FNV_PRIME) & _MASK64
    return value


def sample_seed(master_seed: int, sample_id: str) -> int:
    """Deterministic per-sample seed derived from the master seed."""
    prefix = (master_seed & _MASK64).to_bytes(8, "little")
    return fnv1a64(prefix + sample_id.encode("utf-8"))


def permute_examples(
    blocks: Sequence[T], sample_id: str, master_seed: int
) -> tuple[list[T], int]:
    """Shuffle example blocks for one sample; returns the order and its seed."""
    if not blocks:
        raise ValueError("permute_examples needs at least one block")
    seed = sample_seed(master_seed, sample_id)
    rng = np.random.Generator(np.random.PCG64(seed))
    permuted = list(blocks)
    for i in range(len(permuted) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        permuted[i], permuted[j] = permuted[j], permuted[i]
    return permuted, seed


@dataclass(frozen=True)
class PoolExample:
    sample_id: str
    audio_ref: str
    label: str

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PoolExample":
        label = data.get("label") or data.get("common_name")
        if "sample_id" not in data or not label or not data.get("audio_ref"):
            raise ManifestError(
                "Few-shot pool rows need sample_id, audio_ref and label"
            )
        return cls(str(data["sample_id"]), str(data["audio_ref"]), normalize(label))


@dataclass(frozen=True)
class FewShotSpec:
    """k labelled examples per class, drawn from a pool outside the eval set."""

    k: int
    pool: tuple[PoolExample, ...]
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ValueError(f"k must be non-negative, got {self.k}")

    def validate(self, eval_ids: Iterable[str], classes: Sequence[str]) -> None:
        """Check disjointness from the eval set and k examples per class.

        Raises:
            PoolOverlap: a pool sample is also being evaluated.
            PoolExhausted: some class has fewer than k pool examples.
        """
        shared = sorted({e.sample_id for e in self.pool} & set(eval_ids))
        if shared:
            raise PoolOverlap(
                f"Few-shot pool shares {len(shared)} sample(s) with the "
                f"evaluation set: {', '.join(shared[:10])}"
            )
        self.select(classes)

    def select(self, classes: Sequence[str]) -> list[PoolExample]:
        """First k pool examples of every class, class by class."""
        chosen: list[PoolExample] = []
        if self.k == 0:
            return chosen
        for name in classes:
            matching = [e for e in self.pool if e.label == name][: self.k]
            if len(matching) < self.k:
                raise PoolExhausted(
                    f"Pool holds {len(matching)} example(s) of {name!r}, "
                    f"{self.k} needed"
                )
            chosen.extend(matching)
        return chosen


def load_pool(path: Union[str, Path]) -> tuple[PoolExample, ...]:
    """Read a few-shot pool: JSON lines with sample_id, audio_ref and label."""
    return tuple(PoolExample.from_dict(row) for row in read_jsonl(path))
