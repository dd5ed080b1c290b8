"""
Aggregation of judged outputs into accuracy, macro-F1 and error rates.

Out-of-set outputs and abstentions are treated as predictions of a synthetic
invalid class: they cost the true class recall but add to no real class's
precision denominator. Macro-F1 is the unweighted mean of per-class F1 over
classes with at least one true sample.
"""

import logging
from collections import Counter
from collections.abc import Sequence
from typing import Optional

import numpy as np
from sklearn.metrics import precision_recall_fscore_support

from ..security.exceptions import DuplicateSample, EmptyScoredSet
from .types import (
    ClassMetrics,
    ErrorCategory,
    LabelSet,
    MetricsReport,
    ScoredOutput,
    TaskKind,
)

logger = logging.getLogger(__name__)

INVALID_PREDICTION = "\x00invalid"

_VALID_PREDICTIONS = (ErrorCategory.CORRECT, ErrorCategory.IN_SET_CONFUSION)


def predicted_class(scored: ScoredOutput) -> str:
    """Class counted as the prediction of a judged output."""
    if scored.category in _VALID_PREDICTIONS and scored.matched_class is not None:
        return scored.matched_class
    return INVALID_PREDICTION


def aggregate(
    scored: Sequence[ScoredOutput],
    labels: LabelSet,
    alpha: Optional[float] = None,
    task_kind: Optional[TaskKind] = None,
    dataset: Optional[str] = None,
) -> MetricsReport:
    """Fold judged outputs into a metrics report.

    The result does not depend on the order of ``scored``.

    Raises:
        EmptyScoredSet: ``scored`` is empty.
        DuplicateSample: a sample id occurs twice.
    """
    if not scored:
        raise EmptyScoredSet("Cannot aggregate zero scored outputs")

    occurrences = Counter(s.sample_id for s in scored)
    repeated = sorted(sid for sid, n in occurrences.items() if n > 1)
    if repeated:
        raise DuplicateSample(
            f"Sample id(s) scored more than once: {', '.join(repeated[:10])}"
            + (" ..." if len(repeated) > 10 else "")
        )

    classes = list(labels.classes)
    for item in scored:
        if item.truth not in labels:
            classes.append(item.truth)
    classes = list(dict.fromkeys(classes))

    y_true = [s.truth for s in scored]
    y_pred = [predicted_class(s) for s in scored]

    precision, recall, f1, support = precision_recall_fscore_support(
        y_true, y_pred, labels=classes, average=None, zero_division=0
    )

    per_class = {
        name: ClassMetrics(float(p), float(r), float(f), int(n))
        for name, p, r, f, n in zip(classes, precision, recall, f1, support)
    }
    supported = np.asarray(support) > 0
    macro_f1 = float(np.mean(np.asarray(f1)[supported])) if supported.any() else 0.0

    counts = Counter(s.category for s in scored)
    n = len(scored)
    report = MetricsReport(
        alpha=alpha,
        n=n,
        accuracy=counts[ErrorCategory.CORRECT] / n,
        macro_f1=macro_f1,
        category_counts={c: counts.get(c, 0) for c in ErrorCategory},
        per_class=per_class,
        task_kind=task_kind if task_kind is not None else labels.task_kind,
        dataset=dataset,
    )
    logger.info(
        "alpha=%s kind=%s dataset=%s n=%d accuracy=%.4f macro_f1=%.4f",
        alpha,
        report.task_kind.value if report.task_kind else None,
        dataset,
        n,
        report.accuracy,
        macro_f1,
    )
    return report
