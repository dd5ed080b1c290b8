"""
File-level scoring: read scoring rows, judge them per group, write results.

Scoring rows are line-delimited JSON objects with ``sample_id``,
``output_text``, ``truth``, ``alpha``, ``task_kind`` and optionally
``dataset``. Rows are grouped by (alpha, task_kind, dataset) and every group
yields one metrics report.
"""

import csv
import json
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

from ..security.exceptions import ManifestError
from .distance import normalize
from .judge import judge
from .metrics import aggregate
from .types import (
    DEFAULT_ABSTENTION_PATTERNS,
    DEFAULT_THRESHOLD,
    ErrorCategory,
    LabelSet,
    MetricsReport,
    ScoredOutput,
    TaskKind,
)

logger = logging.getLogger(__name__)

SCORES_FILE = "scores.jsonl"
METRICS_JSON = "metrics.json"
METRICS_CSV = "metrics.csv"

METRICS_CSV_COLUMNS = (
    "alpha",
    "task_kind",
    "dataset",
    "n",
    "accuracy",
    "macro_f1",
    "category",
    "count",
    "rate",
)

GroupKey = tuple[Optional[float], TaskKind, str]


@dataclass(frozen=True)
class ScoringRow:
    """One model output joined to its ground truth."""

    sample_id: str
    output_text: str
    truth: str
    task_kind: TaskKind
    alpha: Optional[float] = None
    dataset: str = ""

    @classmethod
    def from_dict(cls, data: dict[str, Any], where: str = "") -> "ScoringRow":
        required = ("sample_id", "output_text", "truth", "task_kind")
        missing = [k for k in required if k not in data]
        if missing:
            raise ManifestError(f"Scoring row{where} lacks {', '.join(missing)}")
        try:
            kind = TaskKind.parse(str(data["task_kind"]))
        except ValueError as e:
            raise ManifestError(f"Scoring row{where}: {e}") from e
        alpha = data.get("alpha")
        return cls(
            sample_id=str(data["sample_id"]),
            output_text=str(data["output_text"] or ""),
            truth=str(data["truth"]),
            task_kind=kind,
            alpha=None if alpha is None else float(alpha),
            dataset=str(data.get("dataset") or ""),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "output_text": self.output_text,
            "truth": self.truth,
            "alpha": self.alpha,
            "task_kind": self.task_kind.value,
            "dataset": self.dataset,
        }


@dataclass
class GroupResult:
    key: GroupKey
    labels: LabelSet
    scored: list[ScoredOutput]
    report: MetricsReport


def read_jsonl(path: Union[str, Path]) -> list[dict[str, Any]]:
    """Read a line-delimited JSON file, skipping blank lines."""
    rows = []
    try:
        with open(path, encoding="utf-8") as handle:
            for number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    value = json.loads(line)
                except json.JSONDecodeError as e:
                    raise ManifestError(
                        f"{path}:{number}: invalid JSON ({e.msg})"
                    ) from e
                if not isinstance(value, dict):
                    raise ManifestError(f"{path}:{number}: expected a JSON object")
                rows.append(value)
    except OSError as e:
        raise ManifestError(f"Cannot read {path}: {e}") from e
    return rows


def write_jsonl(path: Union[str, Path], rows: Iterable[dict[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8", errors="backslashreplace") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def load_scoring_rows(path: Union[str, Path]) -> list[ScoringRow]:
    return [
        ScoringRow.from_dict(row, f" {number} of {path}")
        for number, row in enumerate(read_jsonl(path), start=1)
    ]


def load_labels(path: Union[str, Path], task_kind: TaskKind) -> LabelSet:
    """Read a label file: one class per line, blank lines and ``#`` comments ignored."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ManifestError(f"Cannot read label file {path}: {e}") from e
    classes = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    return LabelSet(tuple(classes), task_kind)


def group_rows(rows: Sequence[ScoringRow]) -> dict[GroupKey, list[ScoringRow]]:
    """Group rows by (alpha, task_kind, dataset), groups and rows in stable order."""
    groups: dict[GroupKey, list[ScoringRow]] = {}
    for row in rows:
        groups.setdefault((row.alpha, row.task_kind, row.dataset), []).append(row)
    ordered = sorted(groups, key=_group_sort_key)
    return {key: sorted(groups[key], key=lambda r: r.sample_id) for key in ordered}


def score_rows(
    rows: Sequence[ScoringRow],
    labels: Optional[LabelSet] = None,
    threshold: int = DEFAULT_THRESHOLD,
    abstention_patterns: Sequence[str] = DEFAULT_ABSTENTION_PATTERNS,
) -> list[GroupResult]:
    """Judge and aggregate every (alpha, task_kind, dataset) group.

    Without ``labels`` each group's label set is its distinct truths in
    sample-id order. A supplied label set is reused with each group's kind.
    """
    results = []
    for key, group in group_rows(rows).items():
        alpha, kind, dataset = key
        if labels is None:
            group_labels = LabelSet(
                tuple(dict.fromkeys(normalize(r.truth) for r in group)), kind
            )
        else:
            group_labels = LabelSet(labels.classes, kind)

        scored = [
            judge(
                row.output_text,
                row.truth,
                group_labels,
                t=threshold,
                abstention_patterns=abstention_patterns,
                sample_id=row.sample_id,
            )
            for row in group
        ]
        report = aggregate(
            scored, group_labels, alpha=alpha, task_kind=kind, dataset=dataset
        )
        results.append(GroupResult(key, group_labels, scored, report))
    return results


def write_score_outputs(
    out_dir: Union[str, Path], results: Sequence[GroupResult]
) -> Path:
    """Write per-sample judgments, metrics JSON and metrics CSV into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    judgments = []
    for result in results:
        alpha, kind, dataset = result.key
        for item in result.scored:
            row = item.to_dict()
            row.update(alpha=alpha, task_kind=kind.value, dataset=dataset)
            judgments.append(row)
    write_jsonl(out / SCORES_FILE, judgments)

    with open(out / METRICS_JSON, "w", encoding="utf-8") as handle:
        json.dump([r.report.to_dict() for r in results], handle, indent=2)
        handle.write("\n")

    with open(out / METRICS_CSV, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(METRICS_CSV_COLUMNS)
        for result in results:
            report = result.report
            rates = report.category_rates
            for category in ErrorCategory:
                writer.writerow(
                    [
                        "" if report.alpha is None else repr(report.alpha),
                        report.task_kind.value if report.task_kind else "",
                        report.dataset or "",
                        report.n,
                        repr(report.accuracy),
                        repr(report.macro_f1),
                        category.value,
                        report.category_counts[category],
                        repr(rates[category]),
                    ]
                )

    logger.info("Wrote %d metric groups to %s", len(results), out)
    return out


def load_metrics(path: Union[str, Path]) -> list[dict[str, Any]]:
    """Read a metrics JSON file written by :func:`write_score_outputs`."""
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestError(f"Cannot read metrics file {path}: {e}") from e
    if not isinstance(data, list):
        raise ManifestError(f"Metrics file {path} must hold a JSON list")
    return data


def _group_sort_key(key: GroupKey) -> tuple[bool, float, str, str]:
    alpha, kind, dataset = key
    return (alpha is None, alpha if alpha is not None else 0.0, kind.value, dataset)
