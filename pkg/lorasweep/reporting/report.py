"""
Report emission: every chart as an SVG plus a CSV holding the same numbers.

Charts produced from one :class:`SweepSummary`:

- ``accuracy_vs_alpha``: accuracy against alpha, one line per prompt series.
- ``combined_vs_individual``: combined-prompt accuracy against the mean of
  the common- and scientific-name accuracies, traced over alpha.
- ``error_breakdown``: category rates stacked per alpha, one SVG per series.
- ``f1_comparison``: macro-F1 bars at two alpha values.
"""

import csv
import logging
import re
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from ..scoring.types import TaskKind
from ..security.exceptions import ReportError
from .summary import CATEGORY_ORDER, SummaryRow, SweepSummary, format_number
from .svg import Series, bar_chart, line_chart, stacked_bar_chart

logger = logging.getLogger(__name__)

ACCURACY_CHART = "accuracy_vs_alpha"
TRACE_CHART = "combined_vs_individual"
BREAKDOWN_CHART = "error_breakdown"
F1_CHART = "f1_comparison"

UNIT_TICKS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)

CsvRows = Sequence[Sequence[str]]


@dataclass
class ReportArtifacts:
    out_dir: Path
    files: list[Path] = field(default_factory=list)


def series_name(task_kind: str, dataset: str) -> str:
    return f"{task_kind} ({dataset})" if dataset else task_kind


def alpha_label(alpha: float) -> str:
    return f"{alpha:g}"


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text).strip("_")


def _write_csv(path: Path, header: Sequence[str], rows: CsvRows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_svg(path: Path, document: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(document)


class _Emitter:
    def __init__(self, out_dir: Path):
        self.artifacts = ReportArtifacts(out_dir=out_dir)

    def csv(self, name: str, header: Sequence[str], rows: CsvRows) -> None:
        path = self.artifacts.out_dir / f"{name}.csv"
        _write_csv(path, header, rows)
        self.artifacts.files.append(path)

    def svg(self, name: str, document: str) -> None:
        path = self.artifacts.out_dir / f"{name}.svg"
        _write_svg(path, document)
        self.artifacts.files.append(path)


# ============================================================================
# Charts
# ============================================================================


def accuracy_chart(summary: SweepSummary) -> tuple[list[list[str]], str]:
    rows = []
    series = []
    for (kind, dataset), members in summary.series().items():
        for row in members:
            rows.append(
                [kind, dataset, format_number(row.alpha), format_number(row.accuracy)]
            )
        series.append(
            Series(series_name(kind, dataset), [(r.alpha, r.accuracy) for r in members])
        )
    document = line_chart(
        "Accuracy versus merging coefficient",
        series,
        x_label="alpha",
        y_label="accuracy",
        x_ticks=summary.alphas,
    )
    return rows, document


def individual_trace(
    summary: SweepSummary,
) -> dict[str, list[tuple[float, float, float]]]:
    """Per dataset: (alpha, mean individual accuracy, combined accuracy).

    Only alphas where the common, scientific and combined prompts were all
    scored contribute a point.
    """
    traces: dict[str, list[tuple[float, float, float]]] = {}
    datasets = sorted({r.dataset for r in summary.rows})
    for dataset in datasets:
        points = []
        for alpha in summary.alphas:
            common = summary.lookup(alpha, TaskKind.COMMON.value, dataset)
            scientific = summary.lookup(alpha, TaskKind.SCIENTIFIC.value, dataset)
            combined = summary.lookup(alpha, TaskKind.COMBINED.value, dataset)
            if common is None or scientific is None or combined is None:
                continue
            mean = (common.accuracy + scientific.accuracy) / 2.0
            points.append((alpha, mean, combined.accuracy))
        if points:
            traces[dataset] = points
    return traces


def trace_chart(summary: SweepSummary) -> tuple[list[list[str]], str]:
    rows = []
    series = []
    for dataset, points in individual_trace(summary).items():
        for alpha, mean, combined in points:
            rows.append(
                [dataset, *(format_number(v) for v in (alpha, mean, combined))]
            )
        series.append(
            Series(
                dataset or "all",
                [(mean, combined) for _, mean, combined in points],
                point_labels=[alpha_label(alpha) for alpha, _, _ in points],
            )
        )
    if not series:
        logger.warning(
            "No alpha has common, scientific and combined results; "
            "%s.svg has no points",
            TRACE_CHART,
        )
    document = line_chart(
        "Combined prompt versus mean individual prompts",
        series,
        x_label="mean accuracy (common, scientific)",
        y_label="accuracy (combined)",
        x_domain=(0.0, 1.0),
        x_ticks=UNIT_TICKS,
    )
    return rows, document


def breakdown_chart(members: Sequence[SummaryRow]) -> str:
    kind, dataset = members[0].series
    stacks = [
        (category, [row.category_rates[category] for row in members])
        for category in CATEGORY_ORDER
    ]
    return stacked_bar_chart(
        f"Error breakdown: {series_name(kind, dataset)}",
        [alpha_label(row.alpha) for row in members],
        stacks,
        x_label="alpha",
        y_label="rate",
    )


def comparison_alphas(
    summary: SweepSummary, compare_alphas: Optional[Sequence[float]]
) -> list[float]:
    """Alphas compared by the F1 chart: the given pair, or the sweep extremes."""
    alphas = summary.alphas
    if compare_alphas is None:
        return sorted({alphas[0], alphas[-1]})
    missing = [a for a in compare_alphas if a not in alphas]
    if missing:
        raise ReportError(
            f"Comparison alpha {missing[0]:g} has no summary rows",
            suggestions=[f"Available alphas: {', '.join(map(alpha_label, alphas))}"],
        )
    return list(compare_alphas)


def f1_chart(
    summary: SweepSummary, compare_alphas: Sequence[float]
) -> tuple[list[list[str]], str]:
    rows = []
    labels = []
    values = []
    groups = []
    for kind, dataset in summary.series():
        for alpha in compare_alphas:
            row = summary.lookup(alpha, kind, dataset)
            if row is None:
                continue
            rows.append(
                [kind, dataset, format_number(alpha), format_number(row.macro_f1)]
            )
            labels.append(series_name(kind, dataset))
            values.append(row.macro_f1)
            groups.append(f"alpha={alpha_label(alpha)}")
    document = bar_chart(
        "Macro-F1 comparison",
        labels,
        values,
        x_label="prompt",
        y_label="macro F1",
        groups=groups,
    )
    return rows, document


# ============================================================================
# Entry point
# ============================================================================


def build_report(
    summary: SweepSummary,
    out_dir: Union[str, Path],
    compare_alphas: Optional[Sequence[float]] = None,
) -> ReportArtifacts:
    """Write every chart of ``summary`` into ``out_dir``.

    Raises:
        ReportError: a comparison alpha has no rows.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit = _Emitter(out)

    rows, document = accuracy_chart(summary)
    emit.csv(ACCURACY_CHART, ("task_kind", "dataset", "alpha", "accuracy"), rows)
    emit.svg(ACCURACY_CHART, document)

    rows, document = trace_chart(summary)
    emit.csv(
        TRACE_CHART,
        ("dataset", "alpha", "mean_individual_accuracy", "combined_accuracy"),
        rows,
    )
    emit.svg(TRACE_CHART, document)

    breakdown_rows = []
    for (kind, dataset), members in summary.series().items():
        for row in members:
            for category in CATEGORY_ORDER:
                breakdown_rows.append(
                    [
                        kind,
                        dataset,
                        format_number(row.alpha),
                        category,
                        format_number(row.category_rates[category]),
                    ]
                )
        name = "_".join(p for p in (BREAKDOWN_CHART, _slug(kind), _slug(dataset)) if p)
        emit.svg(name, breakdown_chart(members))
    emit.csv(
        BREAKDOWN_CHART,
        ("task_kind", "dataset", "alpha", "category", "rate"),
        breakdown_rows,
    )

    rows, document = f1_chart(summary, comparison_alphas(summary, compare_alphas))
    emit.csv(F1_CHART, ("task_kind", "dataset", "alpha", "macro_f1"), rows)
    emit.svg(F1_CHART, document)

    logger.info("Wrote %d report files to %s", len(emit.artifacts.files), out)
    return emit.artifacts
