"""
Sweep summaries: metric rows keyed by (alpha, task kind, dataset).
"""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

from ..scoring.pipeline import load_metrics
from ..scoring.types import ErrorCategory
from ..security.exceptions import EmptySummary, ReportError

CATEGORY_ORDER = tuple(c.value for c in ErrorCategory)


def format_number(value: float) -> str:
    """Text form shared by every CSV cell and SVG data attribute."""
    return f"{value:.4f}"


@dataclass(frozen=True)
class SummaryRow:
    alpha: float
    task_kind: str
    dataset: str
    n: int
    accuracy: float
    macro_f1: float
    category_rates: dict[str, float]

    @property
    def series(self) -> tuple[str, str]:
        return (self.task_kind, self.dataset)

    @classmethod
    def from_metrics(cls, data: dict[str, Any]) -> "SummaryRow":
        if data.get("alpha") is None:
            raise ReportError(
                "Metrics row has no alpha",
                suggestions=["Score run files produced by a sweep"],
            )
        try:
            rates = data["category_rates"]
            return cls(
                alpha=float(data["alpha"]),
                task_kind=str(data.get("task_kind") or ""),
                dataset=str(data.get("dataset") or ""),
                n=int(data["n"]),
                accuracy=float(data["accuracy"]),
                macro_f1=float(data["macro_f1"]),
                category_rates={c: float(rates.get(c, 0.0)) for c in CATEGORY_ORDER},
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ReportError(f"Malformed metrics row: {e}") from e


class SweepSummary:
    """Rows unique on (alpha, task_kind, dataset), each series sorted by alpha."""

    def __init__(self, rows: Iterable[SummaryRow]):
        self.rows = sorted(rows, key=lambda r: (r.task_kind, r.dataset, r.alpha))
        if not self.rows:
            raise EmptySummary("Report needs at least one summary row")
        keys = [(r.alpha, r.task_kind, r.dataset) for r in self.rows]
        if len(set(keys)) != len(keys):
            duplicate = next(k for k in keys if keys.count(k) > 1)
            raise ReportError(
                f"Summary rows repeat alpha={duplicate[0]} kind={duplicate[1]} "
                f"dataset={duplicate[2]!r}"
            )

    @classmethod
    def from_files(cls, paths: Sequence[Union[str, Path]]) -> "SweepSummary":
        return cls(
            SummaryRow.from_metrics(row) for path in paths for row in load_metrics(path)
        )

    @property
    def alphas(self) -> list[float]:
        return sorted({r.alpha for r in self.rows})

    def series(self) -> dict[tuple[str, str], list[SummaryRow]]:
        """Rows grouped by (task_kind, dataset), alphas ascending."""
        grouped: dict[tuple[str, str], list[SummaryRow]] = {}
        for row in self.rows:
            grouped.setdefault(row.series, []).append(row)
        return grouped

    def lookup(
        self, alpha: float, task_kind: str, dataset: str
    ) -> Optional[SummaryRow]:
        for row in self.rows:
            if (row.alpha, row.task_kind, row.dataset) == (alpha, task_kind, dataset):
                return row
        return None
