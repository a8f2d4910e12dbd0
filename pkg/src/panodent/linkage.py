"""Tooth-condition linkage and the per-tooth label matrix.

Reports are organized per condition, so every tooth mentioned in a sentence
is associated with every condition phrase in that sentence (a Cartesian
product). A tooth's labels accumulate across all lines that mention it.
Negation is not modeled: the procedure links whatever is stated, which is
a documented noise source, not a bug.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import UnknownImage
from .fdi import FdiTooth
from .phrases import NounPhrase
from .reports import Report, ReportLine
from .vocabulary import ConditionVocabulary


def link_line(
    line: ReportLine,
    phrases: Sequence[NounPhrase],
    vocabulary: ConditionVocabulary,
) -> list[tuple[FdiTooth, int]]:
    """Pair every tooth in the line with every resolvable condition phrase.

    Tooth-mention phrases and phrases that do not resolve to a vocabulary
    condition are dropped. The result size is exactly
    |teeth| x |resolved conditions|.
    """
    if line.excluded:
        raise ValueError(f"line {line.topic_number:02d} is excluded and cannot be linked")
    indices: list[int] = []
    for phrase in phrases:
        if phrase.is_tooth_mention:
            continue
        index = vocabulary.resolve(phrase.normalized)
        if index is not None and index not in indices:
            indices.append(index)
    return [(tooth, index) for tooth in line.teeth for index in indices]


@dataclass(frozen=True)
class ToothLabelRecord:
    """Binary condition vector for one (image, tooth)."""

    image_id: str
    tooth: FdiTooth
    labels: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"image_id": self.image_id, "fdi": self.tooth.code, "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, data: dict) -> "ToothLabelRecord":
        return cls(data["image_id"], FdiTooth(data["fdi"]), tuple(data["labels"]))


@dataclass
class LabelMatrix:
    """All label records for a corpus plus provenance."""

    vocabulary: ConditionVocabulary
    records: list[ToothLabelRecord]
    provenance: dict = field(default_factory=dict)

    def positive_counts(self) -> list[int]:
        """Set bits per condition column."""
        counts = [0] * self.vocabulary.size
        for record in self.records:
            for column, bit in enumerate(record.labels):
                counts[column] += bit
        return counts

    def by_key(self) -> dict[tuple[str, int], ToothLabelRecord]:
        return {(r.image_id, r.tooth.code): r for r in self.records}

    def summary(self) -> dict:
        return {
            "n_records": len(self.records),
            "n_images": len({r.image_id for r in self.records}),
            "positive_counts": {
                condition.name: count
                for condition, count in zip(self.vocabulary.conditions, self.positive_counts())
            },
            "vocabulary": self.vocabulary.to_dict(),
            "provenance": self.provenance,
        }

    def save(self, records_path: str | Path, summary_path: str | Path | None = None) -> None:
        with open(records_path, "w", encoding="utf-8") as handle:
            for record in self.records:
                handle.write(json.dumps(record.to_dict()) + "\n")
        if summary_path is not None:
            Path(summary_path).write_text(
                json.dumps(self.summary(), indent=2) + "\n", encoding="utf-8"
            )

    @classmethod
    def load(cls, records_path: str | Path, vocabulary: ConditionVocabulary) -> "LabelMatrix":
        records = []
        with open(records_path, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    records.append(ToothLabelRecord.from_dict(json.loads(line)))
        return cls(vocabulary=vocabulary, records=records)


def build_label_matrix(
    reports: Iterable[Report],
    vocabulary: ConditionVocabulary,
    line_phrases: Mapping[tuple[str, int], Sequence[NounPhrase]],
    segmented_teeth: Mapping[str, Iterable[FdiTooth]] | None = None,
    provenance: dict | None = None,
) -> LabelMatrix:
    """Union linkage output across lines into one record per (image, tooth).

    Teeth mentioned without resolvable conditions get all-zero records.
    When ``segmented_teeth`` (image_id -> teeth present in the radiograph)
    is supplied, every segmented tooth gets a record too, and a report whose
    image is absent from that manifest raises UnknownImage.
    """
    bits: dict[tuple[str, int], set[int]] = {}

    def ensure(image_id: str, tooth: FdiTooth) -> set[int]:
        return bits.setdefault((image_id, tooth.code), set())

    for report in reports:
        if segmented_teeth is not None and report.image_id not in segmented_teeth:
            raise UnknownImage(
                f"report {report.report_id} references image {report.image_id} "
                "absent from the segmentation manifest"
            )
        for line in report.lines:
            if line.excluded:
                continue
            phrases = line_phrases.get((report.report_id, line.topic_number), ())
            for tooth in line.teeth:
                ensure(report.image_id, tooth)
            for tooth, index in link_line(line, phrases, vocabulary):
                ensure(report.image_id, tooth).add(index)

    if segmented_teeth is not None:
        for image_id, teeth in segmented_teeth.items():
            for tooth in teeth:
                ensure(image_id, tooth)

    records = [
        ToothLabelRecord(
            image_id=image_id,
            tooth=FdiTooth(code),
            labels=tuple(1 if i in present else 0 for i in range(1, vocabulary.size + 1)),
        )
        for (image_id, code), present in sorted(bits.items())
    ]
    return LabelMatrix(
        vocabulary=vocabulary, records=records, provenance=dict(provenance or {})
    )
