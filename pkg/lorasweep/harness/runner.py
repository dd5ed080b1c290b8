"""
Run orchestration: render prompts, query the endpoint, persist records.

Run files are append-only. A key (sample_id, alpha, kind) already present is
never requested again, so re-running a complete run changes nothing. New
records of one batch are appended in sample_id order whatever order the
responses arrive in. Each record is flushed as soon as every earlier sample
is settled, so an interrupted run keeps what it finished and resumes from
there. Samples whose request fails are reported and skipped; the rest of the
batch is still written.
"""

import json
import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Union

from ..scoring.types import LabelSet
from ..security.exceptions import EndpointError, ManifestError
from .client import EndpointClient
from .fewshot import FewShotSpec, permute_examples
from .manifest import EvalSample, RunFileWriter, RunRecord, load_run_file
from .templates import PromptTemplate, RenderedPrompt, audio_marker, render_prompt

logger = logging.getLogger(__name__)

SPECIES_ORDER_KEY = "species_list"


@dataclass(frozen=True)
class RunFailure:
    sample_id: str
    alpha: float
    kind: str
    error: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "alpha": self.alpha,
            "kind": self.kind,
            "error": self.error,
        }


@dataclass
class RunSummary:
    """Counts for one run call."""

    run_file: Path
    requested: int = 0
    skipped: int = 0
    written: int = 0
    failures: list[RunFailure] = field(default_factory=list)

    def merge(self, other: "RunSummary") -> None:
        self.requested += other.requested
        self.skipped += other.skipped
        self.written += other.written
        self.failures.extend(other.failures)

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_file": str(self.run_file),
            "requested": self.requested,
            "skipped": self.skipped,
            "written": self.written,
            "failed": len(self.failures),
        }


def species_order(labels: LabelSet, seed: int, shuffle: bool) -> list[str]:
    """Class order for ``{species_list}``: label order, or a seeded shuffle."""
    classes = list(labels.classes)
    if not shuffle:
        return classes
    permuted, _ = permute_examples(classes, SPECIES_ORDER_KEY, seed)
    return permuted


def user_message(sample: EvalSample, prompt: RenderedPrompt) -> str:
    """Message sent to the endpoint: the audio marker, then the prompt."""
    if prompt.embeds_audio or not sample.audio_ref:
        return prompt.text
    return f"{audio_marker(sample.audio_ref)} {prompt.text}"


def run(
    samples: Sequence[EvalSample],
    template: PromptTemplate,
    client: EndpointClient,
    alpha: float,
    run_path: Union[str, Path],
    labels: Optional[LabelSet] = None,
    fewshot: Optional[FewShotSpec] = None,
    concurrency: int = 4,
    order: Optional[Sequence[str]] = None,
) -> RunSummary:
    """Query the endpoint for every sample missing from the run file.

    Args:
        samples: Evaluation manifest.
        template: Prompt template to render.
        client: Endpoint client.
        alpha: Merge coefficient of the served model.
        run_path: Line-delimited JSON run file, appended to.
        labels: Label set for ``{species_list}`` and few-shot selection.
        fewshot: Few-shot pool for in-context prompts.
        concurrency: Maximum requests in flight.
        order: Explicit ``{species_list}`` order.

    Raises:
        ManifestError: the manifest is empty.
        PoolOverlap, PoolExhausted: the few-shot pool is unusable.
    """
    if not samples:
        raise ManifestError("Cannot run an empty manifest")
    if concurrency < 1:
        raise ValueError("concurrency must be at least 1")
    if fewshot is not None and fewshot.k > 0 and labels is not None:
        fewshot.validate((s.sample_id for s in samples), labels.classes)

    path = Path(run_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    kind = template.kind.value
    done = {record.key for record in load_run_file(path)}

    pending = [
        s
        for s in sorted(samples, key=lambda s: s.sample_id)
        if (s.sample_id, float(alpha), kind) not in done
    ]
    summary = RunSummary(run_file=path, skipped=len(samples) - len(pending))

    prompts = {
        s.sample_id: render_prompt(s, template, labels, fewshot, order)
        for s in pending
    }

    def request(sample: EvalSample) -> Union[RunRecord, RunFailure]:
        prompt = prompts[sample.sample_id]
        try:
            completion = client.complete(user_message(sample, prompt), alpha)
        except EndpointError as e:
            logger.error("Sample %s failed: %s", sample.sample_id, e.message)
            return RunFailure(sample.sample_id, float(alpha), kind, e.message)
        except Exception as e:
            logger.exception("Sample %s failed unexpectedly", sample.sample_id)
            return RunFailure(
                sample.sample_id, float(alpha), kind, f"{type(e).__name__}: {e}"
            )
        if completion.attempts > 1:
            logger.info(
                "Sample %s succeeded after %d attempts",
                sample.sample_id,
                completion.attempts,
            )
        return RunRecord(
            sample_id=sample.sample_id,
            alpha=float(alpha),
            kind=kind,
            prompt_text=prompt.text,
            permutation_seed=prompt.permutation_seed,
            response_text=completion.text,
            endpoint=client.url,
            model=completion.model,
            timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            latency_ms=round(completion.latency_ms, 3),
        )

    summary.requested = len(pending)
    pool = ThreadPoolExecutor(max_workers=concurrency) if concurrency > 1 else None
    try:
        # results come back in sample order; each is on disk before the next
        results = pool.map(request, pending) if pool else map(request, pending)
        with RunFileWriter(path) as writer:
            for result in results:
                if isinstance(result, RunFailure):
                    summary.failures.append(result)
                    continue
                writer.write(result)
                summary.written += 1
    finally:
        if pool is not None:
            pool.shutdown(wait=True, cancel_futures=True)

    logger.info(
        "alpha=%s kind=%s: %d requested, %d skipped, %d written, %d failed",
        alpha,
        kind,
        summary.requested,
        summary.skipped,
        summary.written,
        len(summary.failures),
    )
    return summary


def write_failures(path: Union[str, Path], failures: Sequence[RunFailure]) -> None:
    """Write failed requests as JSON lines, replacing any previous file."""
    with open(path, "w", encoding="utf-8", errors="backslashreplace") as handle:
        for failure in failures:
            handle.write(json.dumps(failure.to_dict(), ensure_ascii=False) + "\n")
