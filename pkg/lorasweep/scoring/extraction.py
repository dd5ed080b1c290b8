"""
Answer extraction from formulaic model outputs.

Instruction-tuned audio models often wrap the answer in a fixed sentence,
e.g. "The common name for the focal species in the audio is Walrus". The
name is pulled out before distance matching so the sentence itself does not
count against the prediction.
"""

import re
from typing import Optional

from .distance import normalize
from .types import TaskKind

_FORMULAIC_ANSWER = re.compile(
    r"^the\s+(?:common|scientific)\s+name\s+(?:for|of)\s+the\s+focal\s+species"
    r"\s+in\s+the\s+audio\s+is\s+(?P<answer>.+)$",
    re.IGNORECASE | re.DOTALL,
)
_ALSO_KNOWN_AS = re.compile(r",\s*also\s+known\s+as\s+", re.IGNORECASE)


def extract_answer(text: str, task_kind: Optional[TaskKind] = None) -> list[str]:
    """Candidate answers contained in a model output.

    Every task kind goes through the same extraction. When the formulaic
    sentence carries an "also known as" clause, the name before the clause
    comes first and the full remainder second.
    """
    cleaned = normalize(text)
    match = _FORMULAIC_ANSWER.match(cleaned)
    if match is None:
        return [cleaned]

    remainder = normalize(match.group("answer"))
    candidates = []
    clause = _ALSO_KNOWN_AS.search(remainder)
    if clause is not None:
        head = normalize(remainder[: clause.start()])
        if head:
            candidates.append(head)
    candidates.append(remainder)
    return candidates
