"""
Data types shared by the judging and aggregation code.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from ..security.exceptions import InvalidLabelSet
from .distance import normalize

DEFAULT_THRESHOLD = 5

# Searched case-insensitively in the normalized output; empty output is
# always an abstention.
DEFAULT_ABSTENTION_PATTERNS = (
    r"\bI don'?t know\b",
    r"\bcannot\b",
    r"\bunable to\b",
)


class TaskKind(Enum):
    """What the ground truth of a scored row names."""

    COMMON = "common"
    SCIENTIFIC = "scientific"
    COMBINED = "combined"
    CLOSED_SET = "closed_set"
    BINARY_CHOICE = "binary_choice"

    @property
    def is_closed(self) -> bool:
        """Closed kinds require the truth to be one of the supplied classes."""
        return self in (TaskKind.CLOSED_SET, TaskKind.BINARY_CHOICE)

    @classmethod
    def parse(cls, value: str) -> "TaskKind":
        try:
            return cls(value.strip().lower())
        except ValueError:
            valid = ", ".join(kind.value for kind in cls)
            raise ValueError(
                f"Unknown task kind {value!r} (expected one of {valid})"
            ) from None


class ErrorCategory(Enum):
    """Four-way outcome of judging one output."""

    CORRECT = "correct"
    IN_SET_CONFUSION = "in_set_confusion"
    OUT_OF_SET = "out_of_set"
    ABSTENTION = "abstention"


@dataclass(frozen=True)
class LabelSet:
    """Ordered, normalization-unique list of allowed classes."""

    classes: tuple[str, ...]
    task_kind: TaskKind

    def __post_init__(self) -> None:
        normalized = [normalize(c) for c in self.classes]
        if not normalized:
            raise InvalidLabelSet("Label set must contain at least one class")
        if any(not c for c in normalized):
            raise InvalidLabelSet("Label set contains an empty class name")
        seen: set[str] = set()
        duplicates = []
        for name in normalized:
            if name in seen:
                duplicates.append(name)
            seen.add(name)
        if duplicates:
            raise InvalidLabelSet(
                f"Duplicate classes after normalization: {', '.join(duplicates)}"
            )
        object.__setattr__(self, "classes", tuple(normalized))

    def __contains__(self, name: object) -> bool:
        return name in self.classes

    def __len__(self) -> int:
        return len(self.classes)

    def with_class(self, name: str) -> "LabelSet":
        """Return a label set with ``name`` appended when it is missing."""
        name = normalize(name)
        if name in self.classes:
            return self
        return LabelSet(self.classes + (name,), self.task_kind)


@dataclass(frozen=True)
class ScoredOutput:
    """Judgment for one model output."""

    sample_id: str
    category: ErrorCategory
    truth: str
    matched_class: Optional[str] = None
    distance: Optional[int] = None
    candidate: Optional[str] = None
    tie: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "category": self.category.value,
            "truth": self.truth,
            "matched_class": self.matched_class,
            "distance": self.distance,
            "candidate": self.candidate,
            "tie": self.tie,
        }


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class MetricsReport:
    """Accuracy, macro-F1 and category rates for one group of outputs."""

    alpha: Optional[float]
    n: int
    accuracy: float
    macro_f1: float
    category_counts: dict[ErrorCategory, int]
    per_class: dict[str, ClassMetrics] = field(default_factory=dict)
    task_kind: Optional[TaskKind] = None
    dataset: Optional[str] = None

    @property
    def category_rates(self) -> dict[ErrorCategory, float]:
        return {
            category: self.category_counts.get(category, 0) / self.n
            for category in ErrorCategory
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha,
            "task_kind": self.task_kind.value if self.task_kind else None,
            "dataset": self.dataset,
            "n": self.n,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "category_counts": {
                c.value: self.category_counts.get(c, 0) for c in ErrorCategory
            },
            "category_rates": {
                c.value: rate for c, rate in self.category_rates.items()
            },
            "per_class": {
                name: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                }
                for name, m in self.per_class.items()
            },
        }
