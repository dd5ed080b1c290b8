"""
Prompt templates and rendering.

Templates are plain strings with ``{species_list}``, ``{audio}`` and
``{examples}`` placeholders. Audio appears as the opaque marker
``<Audio>{audio_ref}</Audio>``; the harness never looks inside it.
"""

import re
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Optional

from ..scoring.types import LabelSet
from ..security.exceptions import MissingField
from .fewshot import FewShotSpec, permute_examples

if TYPE_CHECKING:
    from .manifest import EvalSample

SPECIES_LIST = "species_list"
AUDIO = "audio"
EXAMPLES = "examples"

_PLACEHOLDER = re.compile(r"\{(species_list|audio|examples)\}")


class PromptKind(Enum):
    COMMON = "common"
    SCIENTIFIC = "scientific"
    COMBINED = "combined"
    CLOSED_SET = "closed_set"
    ZF_ORIGINAL = "zf_original"
    ZF_REVERSED = "zf_reversed"
    ZF_NOCLASS = "zf_noclass"
    ICL = "icl"

    @classmethod
    def parse(cls, value: str) -> "PromptKind":
        try:
            return cls(value.strip().lower())
        except ValueError:
            valid = ", ".join(kind.value for kind in cls)
            raise ValueError(
                f"Unknown prompt kind {value!r} (expected one of {valid})"
            ) from None


_REQUIRED: dict[PromptKind, frozenset[str]] = {
    PromptKind.CLOSED_SET: frozenset({SPECIES_LIST}),
    PromptKind.ICL: frozenset({SPECIES_LIST, EXAMPLES, AUDIO}),
}


def audio_marker(audio_ref: str) -> str:
    return f"<Audio>{audio_ref}</Audio>"


@dataclass(frozen=True)
class PromptTemplate:
    """Prompt text for one kind; placeholders are checked on construction."""

    kind: PromptKind
    body: str

    def __post_init__(self) -> None:
        missing = _REQUIRED.get(self.kind, frozenset()) - self.placeholders
        if missing:
            raise MissingField(
                f"{self.kind.value} template lacks "
                + ", ".join("{" + name + "}" for name in sorted(missing))
            )

    @property
    def placeholders(self) -> frozenset[str]:
        return frozenset(_PLACEHOLDER.findall(self.body))


BUILTIN_TEMPLATES: dict[PromptKind, PromptTemplate] = {
    template.kind: template
    for template in (
        PromptTemplate(
            PromptKind.COMMON,
            "What is the common name for the focal species in the audio?",
        ),
        PromptTemplate(
            PromptKind.SCIENTIFIC,
            "What is the scientific name for the focal species in the audio?",
        ),
        PromptTemplate(
            PromptKind.COMBINED,
            "Identify the focal species in the audio and provide its scientific "
            "name, followed by a colon and its common name.",
        ),
        PromptTemplate(
            PromptKind.CLOSED_SET,
            "What is the common name for the focal species in the audio? "
            "Output exactly one of: {species_list}",
        ),
        PromptTemplate(
            PromptKind.ZF_ORIGINAL,
            "Is there only one bird in the audio, or more? "
            "Reply with 'One' or 'More'.",
        ),
        PromptTemplate(
            PromptKind.ZF_REVERSED,
            "Is there more than one bird in the audio, or just one? "
            "Reply with 'More' or 'One'.",
        ),
        PromptTemplate(
            PromptKind.ZF_NOCLASS,
            "How many birds are there in the audio?",
        ),
        PromptTemplate(
            PromptKind.ICL,
            "Identify the common name for the focal species in the audio. "
            "Output exactly one of: {species_list}\n\n"
            "{examples}\n\n"
            "Audio: {audio}\nLabel:",
        ),
    )
}


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    permutation_seed: Optional[int] = None
    # prompt already contains the audio marker; no prefix needed when sending
    embeds_audio: bool = False


def example_block(audio_ref: str, label: str) -> str:
    return f"Audio: {audio_marker(audio_ref)}\nLabel: {label}"


def render_prompt(
    sample: "EvalSample",
    template: PromptTemplate,
    labels: Optional[LabelSet] = None,
    fewshot: Optional[FewShotSpec] = None,
    species_order: Optional[Sequence[str]] = None,
) -> RenderedPrompt:
    """Substitute placeholders of a template for one sample.

    ``species_order`` overrides the label-set order of ``{species_list}``.
    In-context prompts with no examples per class render as the closed-set
    prompt.

    Raises:
        MissingField: a placeholder has no value.
        PoolExhausted: the few-shot pool cannot supply k examples per class.
    """
    if template.kind is PromptKind.ICL and (fewshot is None or fewshot.k == 0):
        template = BUILTIN_TEMPLATES[PromptKind.CLOSED_SET]

    values: dict[str, str] = {}
    seed: Optional[int] = None
    needed = template.placeholders

    if SPECIES_LIST in needed:
        if species_order is not None:
            order = list(species_order)
        elif labels is not None:
            order = list(labels.classes)
        else:
            raise MissingField(
                f"{template.kind.value} prompt needs a label set for "
                "{species_list}",
                suggestions=["Pass --labels with one class per line"],
            )
        values[SPECIES_LIST] = ", ".join(order)

    if AUDIO in needed:
        if not sample.audio_ref:
            raise MissingField(f"Sample {sample.sample_id!r} has no audio_ref")
        values[AUDIO] = audio_marker(sample.audio_ref)

    if EXAMPLES in needed:
        if fewshot is None or labels is None:
            raise MissingField(
                f"{template.kind.value} prompt needs a few-shot pool and labels"
            )
        blocks = [
            example_block(example.audio_ref, example.label)
            for example in fewshot.select(labels.classes)
        ]
        blocks, seed = permute_examples(
            blocks, sample.sample_id, fewshot.master_seed
        )
        values[EXAMPLES] = "\n\n".join(blocks)

    text = _PLACEHOLDER.sub(lambda m: values[m.group(1)], template.body)
    return RenderedPrompt(
        text=text, permutation_seed=seed, embeds_audio=AUDIO in needed
    )
