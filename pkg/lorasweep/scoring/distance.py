"""
Edit distance and text normalization for answer matching.
"""

import re
import unicodedata

import Levenshtein

_WHITESPACE = re.compile(r"\s+")
_QUOTE_PAIRS = (('"', '"'), ("'", "'"), ("“", "”"), ("‘", "’"))


def normalize(text: str) -> str:
    """Canonical form of a model output or class name.

    Trims and collapses whitespace, then strips surrounding quotes and a
    trailing period until nothing changes. Case is preserved.
    """
    current = unicodedata.normalize("NFC", text)
    while True:
        stripped = _WHITESPACE.sub(" ", current).strip()
        if stripped.endswith("."):
            stripped = stripped[:-1].rstrip()
        for opening, closing in _QUOTE_PAIRS:
            if (
                len(stripped) >= 2
                and stripped.startswith(opening)
                and stripped.endswith(closing)
            ):
                stripped = stripped[1:-1].strip()
                break
        if stripped == current:
            return stripped
        current = stripped


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over Unicode code points (NFC)."""
    return int(
        Levenshtein.distance(
            unicodedata.normalize("NFC", a), unicodedata.normalize("NFC", b)
        )
    )
