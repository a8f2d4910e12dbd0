"""FDI two-digit tooth notation.

The first digit is the quadrant: 1-4 for permanent dentition, 5-8 for
deciduous. The second digit is the position within the quadrant: 1-8 for
permanent teeth, 1-5 for deciduous. Deciduous codes are accepted because
prolonged retention of baby teeth is one of the tracked conditions.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .errors import InvalidFdiCode

logger = logging.getLogger(__name__)

# Standalone two-digit tokens only: digits embedded in longer numbers or
# words ("150", "A36") are never tooth mentions.
_TWO_DIGIT_TOKEN = re.compile(r"\b\d{2}\b")


@dataclass(frozen=True, order=True)
class FdiTooth:
    """A validated FDI tooth code."""

    code: int

    def __post_init__(self):
        quadrant, position = divmod(self.code, 10)
        if not 1 <= quadrant <= 8:
            raise InvalidFdiCode(f"{self.code}: quadrant {quadrant} out of range 1-8")
        max_position = 8 if quadrant <= 4 else 5
        if not 1 <= position <= max_position:
            raise InvalidFdiCode(
                f"{self.code}: position {position} out of range 1-{max_position} "
                f"for quadrant {quadrant}"
            )

    @property
    def quadrant(self) -> int:
        return self.code // 10

    @property
    def position(self) -> int:
        return self.code % 10

    @property
    def deciduous(self) -> bool:
        return self.quadrant >= 5

    def __str__(self) -> str:
        return f"{self.code:02d}"

    @classmethod
    def from_text(cls, text: str) -> "FdiTooth":
        if len(text) != 2 or not text.isdigit():
            raise InvalidFdiCode(f"{text!r}: not a two-digit code")
        return cls(int(text))


def validate_fdi(code: int) -> FdiTooth:
    """Return the FdiTooth for ``code``, raising InvalidFdiCode otherwise."""
    return FdiTooth(code)


def is_valid_fdi(code: int) -> bool:
    try:
        FdiTooth(code)
    except InvalidFdiCode:
        return False
    return True


def tokenize_teeth(sentence: str) -> list[FdiTooth]:
    """Extract FDI tooth mentions from a sentence.

    Returns every standalone two-digit token that validates as an FDI code,
    in order of appearance, deduplicated. Invalid two-digit tokens (e.g. 19)
    are skipped with a warning so one typo cannot sink a corpus ingest.
    """
    teeth: list[FdiTooth] = []
    seen: set[int] = set()
    for match in _TWO_DIGIT_TOKEN.finditer(sentence):
        code = int(match.group())
        if not is_valid_fdi(code):
            logger.warning("skipping invalid FDI token %02d in %r", code, sentence)
            continue
        if code not in seen:
            seen.add(code)
            teeth.append(FdiTooth(code))
    return teeth
