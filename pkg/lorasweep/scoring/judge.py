"""
Levenshtein-threshold judging of free-form outputs.

An output is an abstention when it is empty or matches an abstention
pattern. Otherwise every extracted candidate is compared with every class;
the nearest class wins, ties going to the class listed first. The output is
correct when the nearest class is the truth and its distance is strictly
below the threshold.
"""

import logging
import re
from collections.abc import Sequence
from functools import lru_cache

from ..security.exceptions import TruthNotInLabelSet
from .distance import levenshtein, normalize
from .extraction import extract_answer
from .types import (
    DEFAULT_ABSTENTION_PATTERNS,
    DEFAULT_THRESHOLD,
    ErrorCategory,
    LabelSet,
    ScoredOutput,
)

logger = logging.getLogger(__name__)


def combined_target(scientific: str, common: str) -> str:
    """Ground truth for the combined prompt: ``"{scientific}: {common}"``."""
    if not scientific or not common:
        raise ValueError("combined_target needs both a scientific and a common name")
    return f"{scientific}: {common}"


@lru_cache(maxsize=64)
def _compile_patterns(patterns: tuple[str, ...]) -> tuple[re.Pattern[str], ...]:
    return tuple(re.compile(p, re.IGNORECASE) for p in patterns)


def is_abstention(output: str, patterns: Sequence[str]) -> bool:
    """True when the normalized output is empty or matches any pattern."""
    text = normalize(output)
    if not text:
        return True
    return any(p.search(text) for p in _compile_patterns(tuple(patterns)))


def judge(
    output: str,
    truth: str,
    labels: LabelSet,
    t: int = DEFAULT_THRESHOLD,
    abstention_patterns: Sequence[str] = DEFAULT_ABSTENTION_PATTERNS,
    sample_id: str = "",
) -> ScoredOutput:
    """Judge one model output against its ground truth.

    Args:
        output: Raw model response text.
        truth: Ground-truth class name.
        labels: Allowed classes. For open kinds a missing truth is appended.
        t: Distance threshold; a match needs ``distance < t``.
        abstention_patterns: Case-insensitive regexes marking refusals.
        sample_id: Carried through to the result.

    Raises:
        TruthNotInLabelSet: Closed-set kind and the truth is not a class.
    """
    if t < 1:
        raise ValueError(f"threshold must be at least 1, got {t}")

    truth = normalize(truth)
    if truth not in labels:
        if labels.task_kind.is_closed:
            raise TruthNotInLabelSet(
                f"Ground truth {truth!r} of sample {sample_id!r} is not in the "
                f"{labels.task_kind.value} label set",
                suggestions=["Check the label file matches the manifest"],
            )
        labels = labels.with_class(truth)

    if is_abstention(output, abstention_patterns):
        return ScoredOutput(sample_id, ErrorCategory.ABSTENTION, truth)

    candidates = extract_answer(output, labels.task_kind)
    # per class: (distance, candidate) of its closest candidate
    per_class = [
        min(((levenshtein(c, name), c) for c in candidates), key=lambda x: x[0])
        for name in labels.classes
    ]
    distance = min(d for d, _ in per_class)
    nearest_positions = [i for i, (d, _) in enumerate(per_class) if d == distance]
    position = nearest_positions[0]
    nearest = labels.classes[position]
    candidate = per_class[position][1]
    tie = len(nearest_positions) > 1

    if distance >= t:
        category = ErrorCategory.OUT_OF_SET
    elif nearest == truth:
        category = ErrorCategory.CORRECT
    else:
        category = ErrorCategory.IN_SET_CONFUSION

    logger.debug(
        "Judged %s: %s (nearest=%r distance=%d tie=%s)",
        sample_id, category.value, nearest, distance, tie,
    )
    return ScoredOutput(
        sample_id=sample_id,
        category=category,
        truth=truth,
        matched_class=nearest,
        distance=distance,
        candidate=candidate,
        tie=tie,
    )
