"""
Evaluation manifests, run records and the join that feeds scoring.

A manifest is line-delimited JSON, one :class:`EvalSample` per line. A run
file is line-delimited JSON, one :class:`RunRecord` per line.
"""

import json
import logging
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from ..scoring.judge import combined_target
from ..scoring.pipeline import ScoringRow, read_jsonl
from ..scoring.types import TaskKind
from ..security.exceptions import ManifestError, MissingGroundTruth, UnknownSampleId
from .templates import PromptKind

logger = logging.getLogger(__name__)

BINARY_LABEL_KEY = "label"


@dataclass(frozen=True)
class EvalSample:
    """One benchmark item. Audio is an opaque reference, never decoded."""

    sample_id: str
    dataset: str = ""
    common_name: Optional[str] = None
    scientific_name: Optional[str] = None
    audio_ref: str = ""
    extra_labels: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EvalSample":
        if "sample_id" not in data:
            raise ManifestError("Manifest row lacks sample_id")
        extra = data.get("extra_labels") or {}
        if not isinstance(extra, dict):
            raise ManifestError(
                f"extra_labels of sample {data['sample_id']!r} must be an object"
            )
        return cls(
            sample_id=str(data["sample_id"]),
            dataset=str(data.get("dataset") or ""),
            common_name=data.get("common_name") or None,
            scientific_name=data.get("scientific_name") or None,
            audio_ref=str(data.get("audio_ref") or ""),
            extra_labels={str(k): str(v) for k, v in extra.items()},
        )


@dataclass(frozen=True)
class RunRecord:
    """Raw generation for one (sample, alpha, prompt kind)."""

    sample_id: str
    alpha: float
    kind: str
    prompt_text: str
    permutation_seed: Optional[int]
    response_text: str
    endpoint: str
    model: str = ""
    timestamp: str = ""
    latency_ms: float = 0.0

    @property
    def key(self) -> tuple[str, float, str]:
        return (self.sample_id, self.alpha, self.kind)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunRecord":
        try:
            seed = data.get("permutation_seed")
            return cls(
                sample_id=str(data["sample_id"]),
                alpha=float(data["alpha"]),
                kind=str(data["kind"]),
                prompt_text=str(data["prompt_text"]),
                permutation_seed=None if seed is None else int(seed),
                response_text=str(data.get("response_text") or ""),
                endpoint=str(data.get("endpoint") or ""),
                model=str(data.get("model") or ""),
                timestamp=str(data.get("timestamp") or ""),
                latency_ms=float(data.get("latency_ms") or 0.0),
            )
        except KeyError as e:
            raise ManifestError(f"Run record lacks {e.args[0]}") from e
        except (TypeError, ValueError) as e:
            raise ManifestError(f"Malformed run record: {e}") from e

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def load_manifest(path: Union[str, Path]) -> list[EvalSample]:
    """Read and validate an evaluation manifest.

    Raises:
        ManifestError: malformed rows, duplicate sample ids or an empty file.
    """
    samples = [EvalSample.from_dict(row) for row in read_jsonl(path)]
    if not samples:
        raise ManifestError(f"Manifest {path} holds no samples")
    seen: set[str] = set()
    for sample in samples:
        if sample.sample_id in seen:
            raise ManifestError(f"Duplicate sample_id {sample.sample_id!r} in {path}")
        seen.add(sample.sample_id)
    return samples


def load_run_file(path: Union[str, Path]) -> list[RunRecord]:
    if not Path(path).exists():
        return []
    return [RunRecord.from_dict(row) for row in read_jsonl(path)]


class RunFileWriter:
    """Appends records to a run file, one flushed line per record."""

    def __init__(self, path: Union[str, Path]):
        # lone surrogates become \uXXXX escapes, which JSON decodes back
        self._handle = open(path, "a", encoding="utf-8", errors="backslashreplace")

    def write(self, record: RunRecord) -> None:
        self._handle.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
        self._handle.flush()

    def close(self) -> None:
        self._handle.close()

    def __enter__(self) -> "RunFileWriter":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


def append_records(path: Union[str, Path], records: Iterable[RunRecord]) -> None:
    with RunFileWriter(path) as writer:
        for record in records:
            writer.write(record)


def task_kind_for(kind: PromptKind) -> TaskKind:
    """Scoring task behind a prompt kind."""
    if kind in (PromptKind.ZF_ORIGINAL, PromptKind.ZF_REVERSED, PromptKind.ZF_NOCLASS):
        return TaskKind.BINARY_CHOICE
    if kind in (PromptKind.CLOSED_SET, PromptKind.ICL):
        return TaskKind.CLOSED_SET
    return TaskKind(kind.value)


def ground_truth(sample: EvalSample, task_kind: TaskKind) -> str:
    """Ground-truth string of a sample for a scoring task.

    Raises:
        MissingGroundTruth: the sample lacks the needed name.
    """
    if task_kind is TaskKind.COMBINED:
        if sample.scientific_name and sample.common_name:
            return combined_target(sample.scientific_name, sample.common_name)
        needed = "scientific_name and common_name"
    elif task_kind is TaskKind.SCIENTIFIC:
        if sample.scientific_name:
            return sample.scientific_name
        needed = "scientific_name"
    elif task_kind is TaskKind.BINARY_CHOICE:
        if sample.extra_labels.get(BINARY_LABEL_KEY):
            return sample.extra_labels[BINARY_LABEL_KEY]
        needed = f"extra_labels.{BINARY_LABEL_KEY}"
    else:
        if sample.common_name:
            return sample.common_name
        needed = "common_name"
    raise MissingGroundTruth(
        f"Sample {sample.sample_id!r} has no {needed} for the "
        f"{task_kind.value} task"
    )


def export_for_scoring(
    records: Sequence[RunRecord],
    samples: Sequence[EvalSample],
    task_kind: Optional[TaskKind] = None,
) -> list[ScoringRow]:
    """Join run records to ground truth, producing scoring rows.

    The task kind follows each record's prompt kind unless given.

    Raises:
        UnknownSampleId: a record names a sample absent from the manifest.
    """
    by_id = {sample.sample_id: sample for sample in samples}
    rows = []
    for record in records:
        sample = by_id.get(record.sample_id)
        if sample is None:
            raise UnknownSampleId(
                f"Run record references unknown sample {record.sample_id!r}"
            )
        try:
            prompt_kind = PromptKind.parse(record.kind)
        except ValueError as e:
            raise ManifestError(f"Run record {record.sample_id!r}: {e}") from e
        kind = task_kind or task_kind_for(prompt_kind)
        rows.append(
            ScoringRow(
                sample_id=record.sample_id,
                output_text=record.response_text,
                truth=ground_truth(sample, kind),
                task_kind=kind,
                alpha=record.alpha,
                dataset=sample.dataset,
            )
        )
    return rows
