"""
Judging and aggregation of model outputs.

Outputs are matched to class names by edit distance under a strict
threshold, sorted into four categories (correct, in-set confusion, out of
set, abstention) and folded into accuracy, macro-F1 and category rates.
"""

from .distance import levenshtein, normalize
from .extraction import extract_answer
from .judge import combined_target, judge
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

__all__ = [
    "DEFAULT_ABSTENTION_PATTERNS",
    "DEFAULT_THRESHOLD",
    "ErrorCategory",
    "LabelSet",
    "MetricsReport",
    "ScoredOutput",
    "TaskKind",
    "aggregate",
    "combined_target",
    "extract_answer",
    "judge",
    "levenshtein",
    "normalize",
]
