"""Parsing of preprocessed plain-text dental reports.

A report is a sequence of numbered topic lines, each ``NN: sentence``.
Digits in the sentences denote teeth through FDI notation; other numbers
are written out in full by the reporting convention. Lines stating the
presence or absence of teeth carry an exclusion flag and contribute no
labels downstream.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, DuplicateTopicNumber, InvalidPattern, MalformedLine, UnknownImage
from .fdi import FdiTooth, tokenize_teeth

_TOPIC_LINE = re.compile(r"^(\d{2}):\s*(.*)$")

# The reporting style for tooth presence/absence statements; configurable
# because the full pattern list is site-specific.
DEFAULT_EXCLUSION_PATTERNS = (
    r"missing t(ee|oo)th",
    r"absen(ce|t)",
    r"anodontia",
)


def compile_patterns(patterns: Sequence[str]) -> list[re.Pattern]:
    """Compile case-insensitive exclusion patterns, validating each one."""
    if not patterns:
        raise ConfigError("exclusion pattern list is empty; supply at least one pattern")
    compiled = []
    for raw in patterns:
        try:
            compiled.append(re.compile(raw, re.IGNORECASE))
        except re.error as exc:
            raise InvalidPattern(f"bad exclusion pattern {raw!r}: {exc}") from exc
    return compiled


def is_presence_sentence(sentence: str, patterns: Sequence[str]) -> bool:
    """True iff the sentence states tooth presence/absence."""
    return any(p.search(sentence) for p in compile_patterns(patterns))


@dataclass(frozen=True)
class ReportLine:
    """One numbered topic line of a report."""

    topic_number: int
    text: str
    teeth: tuple[FdiTooth, ...]
    excluded: bool = False

    def to_dict(self) -> dict:
        return {
            "topic_number": self.topic_number,
            "text": self.text,
            "teeth": [t.code for t in self.teeth],
            "excluded": self.excluded,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReportLine":
        return cls(
            topic_number=data["topic_number"],
            text=data["text"],
            teeth=tuple(FdiTooth(c) for c in data["teeth"]),
            excluded=data["excluded"],
        )


@dataclass(frozen=True)
class Report:
    """A parsed report: ordered topic lines for one radiograph."""

    report_id: str
    image_id: str
    lines: tuple[ReportLine, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "report_id": self.report_id,
            "image_id": self.image_id,
            "lines": [line.to_dict() for line in self.lines],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Report":
        return cls(
            report_id=data["report_id"],
            image_id=data["image_id"],
            lines=tuple(ReportLine.from_dict(d) for d in data["lines"]),
        )


def parse_report(
    raw_text: str,
    report_id: str,
    image_id: str | None = None,
    exclusion_patterns: Sequence[str] = DEFAULT_EXCLUSION_PATTERNS,
) -> Report:
    """Parse the text of one report file.

    Every non-blank line must match ``^\\d{2}:``; topic numbers must be
    strictly increasing. Teeth are tokenized per line and presence/absence
    sentences are flagged as excluded.
    """
    compiled = compile_patterns(list(exclusion_patterns))
    lines: list[ReportLine] = []
    last_topic = -1
    for line_number, raw_line in enumerate(raw_text.splitlines(), start=1):
        if not raw_line.strip():
            continue
        match = _TOPIC_LINE.match(raw_line.strip())
        if match is None:
            raise MalformedLine(
                f"expected a two-digit topic prefix, got {raw_line.strip()!r}",
                line_number,
            )
        topic = int(match.group(1))
        if topic == last_topic:
            raise DuplicateTopicNumber(
                f"{report_id}: topic {topic:02d} repeated at line {line_number}"
            )
        if topic < last_topic:
            raise MalformedLine(
                f"topic {topic:02d} out of order (previous was {last_topic:02d})",
                line_number,
            )
        last_topic = topic
        text = match.group(2).strip()
        lines.append(
            ReportLine(
                topic_number=topic,
                text=text,
                teeth=tuple(tokenize_teeth(text)),
                excluded=any(p.search(text) for p in compiled),
            )
        )
    return Report(report_id=report_id, image_id=image_id or report_id, lines=tuple(lines))


def ingest_corpus(
    report_dir: str | Path,
    manifest: dict[str, str] | None = None,
    exclusion_patterns: Sequence[str] = DEFAULT_EXCLUSION_PATTERNS,
) -> list[Report]:
    """Parse every ``.txt`` file in a directory (file stem = report_id).

    ``manifest`` maps report_id to image_id; without one, image_id defaults
    to the report_id. Output is ordered by report_id regardless of directory
    listing order.
    """
    report_dir = Path(report_dir)
    reports = []
    for path in sorted(report_dir.glob("*.txt")):
        report_id = path.stem
        if manifest is not None:
            if report_id not in manifest:
                raise UnknownImage(f"report {report_id} has no image_id in the corpus manifest")
            image_id = manifest[report_id]
        else:
            image_id = report_id
        reports.append(
            parse_report(path.read_text(encoding="utf-8"), report_id, image_id, exclusion_patterns)
        )
    return reports


def write_corpus(reports: Iterable[Report], path: str | Path) -> None:
    """Write a parsed corpus as JSON Lines, one report per line."""
    with open(path, "w", encoding="utf-8") as handle:
        for report in reports:
            handle.write(json.dumps(report.to_dict(), ensure_ascii=False) + "\n")


def read_corpus(path: str | Path) -> list[Report]:
    reports = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                reports.append(Report.from_dict(json.loads(line)))
    return reports
