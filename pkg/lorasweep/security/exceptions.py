"""
Error hierarchy for lorasweep.

Every error carries a human-readable message, an optional byte span for
checkpoint problems, and optional suggestions. Each family maps to a distinct
process exit code so shell pipelines can tell failures apart.
"""

from collections.abc import Iterable
from typing import Optional

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_PARTIAL_FAILURE = 8
EXIT_INTERRUPTED = 130


class LoraSweepError(Exception):
    """Base exception for lorasweep with enhanced error reporting."""

    exit_code: int = EXIT_UNEXPECTED

    def __init__(
        self,
        message: str,
        offset: Optional[tuple[int, int]] = None,
        suggestions: Optional[list[str]] = None,
    ):
        self.message = message
        self.offset = offset
        self.suggestions = suggestions or []
        super().__init__(self._format_error())

    def _format_error(self) -> str:
        """Format the error message with byte span and suggestions."""
        lines = [self.message]

        if self.offset is not None:
            begin, end = self.offset
            lines.append(f"  at bytes {begin}-{end}")

        if self.suggestions:
            lines.append("")
            lines.append("Suggestions:")
            for suggestion in self.suggestions:
                lines.append(f"  • {suggestion}")

        return "\n".join(lines)


class ConfigError(LoraSweepError):
    """Invalid configuration file, flag combination or settings value."""

    exit_code = 2


# ============================================================================
# Checkpoint container errors
# ============================================================================


class CheckpointError(LoraSweepError):
    """Base class for tensor checkpoint container problems."""

    exit_code = 3


class MalformedHeader(CheckpointError):
    """Header length, JSON body or an entry description is invalid."""


class OverlapError(CheckpointError):
    """Tensor byte ranges overlap or leave unused payload bytes."""


class DuplicateName(CheckpointError):
    """A tensor name appears twice or collides with the metadata key."""


class UnknownTensor(CheckpointError):
    """Requested tensor name is not present in the index."""


class TruncatedPayload(CheckpointError):
    """Payload ends before a declared tensor byte range."""


class CheckpointIOError(CheckpointError):
    """Reading or writing a checkpoint failed at the OS level."""


class SecurityError(CheckpointError):
    """Header exceeds a configured resource limit."""


# ============================================================================
# Merge errors
# ============================================================================


class MergeError(LoraSweepError):
    """Base class for merge planning and execution problems."""

    exit_code = 4


class ShapeMismatch(MergeError):
    """A tensor exists in both inputs with different shapes."""


class NameSetMismatch(MergeError):
    """The two checkpoints do not hold the same tensor names."""

    def __init__(self, only_in_base: Iterable[str], only_in_other: Iterable[str]):
        self.only_in_base = sorted(only_in_base)
        self.only_in_other = sorted(only_in_other)
        parts = []
        if self.only_in_base:
            parts.append(f"only in base: {', '.join(self.only_in_base)}")
        if self.only_in_other:
            parts.append(f"only in fine-tune: {', '.join(self.only_in_other)}")
        super().__init__(
            "Tensor name sets differ (" + "; ".join(parts) + ")",
            suggestions=["Interpolation needs two checkpoints of one architecture"],
        )


class UnresolvedTarget(MergeError):
    """An adapter pair does not bind to any base weight."""


class RankMismatch(MergeError):
    """Low-rank factors disagree on their rank."""


class OrphanHalf(MergeError):
    """An adapter module has only one of its two low-rank factors."""

    def __init__(self, modules: Iterable[str]):
        self.modules = sorted(modules)
        super().__init__(
            f"Adapter factors without a partner: {', '.join(self.modules)}",
            suggestions=["Every lora_A weight needs a matching lora_B weight"],
        )


class AlphaOutOfRange(MergeError):
    """Merge coefficient outside [0, 1] without extrapolation enabled."""


class OutputExists(MergeError):
    """A sweep output already exists and overwrite is disabled."""


class InvalidMergeSpec(MergeError):
    """Merge plan violates its own invariants."""


# ============================================================================
# Scoring errors
# ============================================================================


class ScoringError(LoraSweepError):
    """Base class for judging and aggregation problems."""

    exit_code = 5


class TruthNotInLabelSet(ScoringError):
    """Closed-set ground truth is not one of the allowed classes."""


class DuplicateSample(ScoringError):
    """The same sample id was scored twice within one group."""


class InvalidLabelSet(ScoringError):
    """Label set is empty or has duplicates after normalization."""


class EmptyScoredSet(ScoringError):
    """Aggregation was requested over zero scored outputs."""


# ============================================================================
# Harness errors
# ============================================================================


class HarnessError(LoraSweepError):
    """Base class for prompt rendering and endpoint orchestration problems."""

    exit_code = 6


class ManifestError(HarnessError):
    """Manifest, run file or scoring file is malformed."""


class MissingField(HarnessError):
    """A template placeholder cannot be satisfied."""


class PoolExhausted(HarnessError):
    """Few-shot pool holds fewer than k examples for some class."""


class PoolOverlap(HarnessError):
    """Few-shot pool shares sample ids with the evaluation set."""


class EndpointError(HarnessError):
    """Endpoint request failed permanently or after all retries."""


class UnknownSampleId(HarnessError):
    """Run record references a sample id missing from the manifest."""


class MissingGroundTruth(HarnessError):
    """Sample lacks the name needed as ground truth for a task kind."""


# ============================================================================
# Report errors
# ============================================================================


class ReportError(LoraSweepError):
    """Base class for report rendering problems."""

    exit_code = 7


class EmptySummary(ReportError):
    """Report requested over zero summary rows."""
