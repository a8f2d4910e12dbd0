"""Condition vocabulary: frequency counting, thresholding, synonym grouping.

The vocabulary is the ordered list of dental conditions that labels are
expressed over. Candidate phrases must clear a corpus-frequency threshold
(strictly greater than ``min_count``) and appear on a manually curated
allowlist; synonym grouping (plural folding and wording variants) happens
before counting via a reviewable JSON map rather than fuzzy matching, so
every label stays auditable.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ConfigError, EmptyVocabulary, UnknownCondition
from .phrases import NounPhrase, normalize_phrase
from .reports import ReportLine

ASSETS = Path(__file__).parent / "assets"

DEFAULT_MIN_COUNT = 150


def load_synonym_map(path: str | Path | None = None) -> dict[str, str]:
    """Load the variant -> canonical map, normalizing both sides."""
    data = json.loads(Path(path or ASSETS / "synonym_map.json").read_text(encoding="utf-8"))
    return {
        normalize_phrase(variant): normalize_phrase(canonical)
        for variant, canonical in data.items()
        if not variant.startswith("_")
    }


def load_allowlist(path: str | Path | None = None) -> set[str]:
    data = json.loads(Path(path or ASSETS / "allowlist.json").read_text(encoding="utf-8"))
    return {normalize_phrase(name) for name in data}


def canonicalize(normalized: str, synonym_map: Mapping[str, str]) -> str:
    return synonym_map.get(normalized, normalized)


def count_phrases(
    line_phrases: Iterable[tuple[ReportLine, Sequence[NounPhrase]]],
    synonym_map: Mapping[str, str],
) -> Counter:
    """Count canonical phrase occurrences across a corpus.

    Tooth-mention phrases and phrases from excluded lines never count:
    the former are handled by the linkage step, the latter contribute no
    labels at all.
    """
    counts: Counter = Counter()
    for line, phrases in line_phrases:
        if line.excluded:
            continue
        for phrase in phrases:
            if phrase.is_tooth_mention:
                continue
            counts[canonicalize(phrase.normalized, synonym_map)] += 1
    return counts


@dataclass(frozen=True)
class Condition:
    """One retained condition with its synonym group."""

    index: int
    name: str
    synonyms: frozenset[str]
    frequency: int


@dataclass(frozen=True)
class ConditionVocabulary:
    """Ordered condition list; indices are 1..K by descending frequency."""

    conditions: tuple[Condition, ...]
    min_count: int = DEFAULT_MIN_COUNT
    _by_synonym: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        lookup = {}
        for condition in self.conditions:
            for synonym in condition.synonyms:
                lookup[synonym] = condition.index
        object.__setattr__(self, "_by_synonym", lookup)

    def __len__(self) -> int:
        return len(self.conditions)

    @property
    def size(self) -> int:
        return len(self.conditions)

    def names(self) -> list[str]:
        return [c.name for c in self.conditions]

    def resolve(self, normalized_phrase: str) -> int | None:
        """Map a normalized phrase to a condition index, or None."""
        return self._by_synonym.get(normalized_phrase)

    def condition(self, index: int) -> Condition:
        if not 1 <= index <= len(self.conditions):
            raise UnknownCondition(f"condition index {index} outside 1..{len(self.conditions)}")
        return self.conditions[index - 1]

    def to_dict(self) -> dict:
        return {
            "min_count": self.min_count,
            "conditions": [
                {
                    "index": c.index,
                    "name": c.name,
                    "synonyms": sorted(c.synonyms),
                    "frequency": c.frequency,
                }
                for c in self.conditions
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConditionVocabulary":
        return cls(
            conditions=tuple(
                Condition(
                    index=c["index"],
                    name=c["name"],
                    synonyms=frozenset(c["synonyms"]),
                    frequency=c["frequency"],
                )
                for c in data["conditions"]
            ),
            min_count=data["min_count"],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ConditionVocabulary":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_vocabulary(
    frequency_table: Mapping[str, int],
    min_count: int = DEFAULT_MIN_COUNT,
    allowlist: set[str] | None = None,
    synonym_map: Mapping[str, str] | None = None,
) -> ConditionVocabulary:
    """Build the vocabulary from canonical-phrase counts.

    Keeps names with count strictly greater than ``min_count`` that are on
    the allowlist, ordered by descending count (name breaks ties), indexed
    1..K. Each condition's synonym set is the canonical name plus every
    synonym-map variant pointing at it.
    """
    if allowlist is None:
        allowlist = load_allowlist()
    if not allowlist:
        raise EmptyVocabulary("allowlist is empty")
    if synonym_map is None:
        synonym_map = load_synonym_map()

    retained = [
        (name, count)
        for name, count in frequency_table.items()
        if count > min_count and name in allowlist
    ]
    if not retained:
        raise EmptyVocabulary(
            f"no phrase has count > {min_count} and an allowlist entry"
        )
    # synonym sets must stay pairwise disjoint: a retained name cannot also
    # be a variant of some other canonical
    for name, _ in retained:
        target = synonym_map.get(name)
        if target is not None and target != name:
            raise ConfigError(
                f"{name!r} is mapped to {target!r} in the synonym map and "
                "cannot be retained as its own condition"
            )
    retained.sort(key=lambda item: (-item[1], item[0]))

    conditions = []
    for index, (name, count) in enumerate(retained, start=1):
        synonyms = {name} | {v for v, c in synonym_map.items() if c == name}
        conditions.append(
            Condition(index=index, name=name, synonyms=frozenset(synonyms), frequency=count)
        )
    return ConditionVocabulary(conditions=tuple(conditions), min_count=min_count)


def default_vocabulary() -> ConditionVocabulary:
    """The bundled 13-condition vocabulary at its published frequencies."""
    reference = json.loads((ASSETS / "reference_results.json").read_text(encoding="utf-8"))
    table = {
        normalize_phrase(entry["name"]): entry["corpus_frequency"]
        for entry in reference["conditions"]
    }
    return build_vocabulary(table, min_count=DEFAULT_MIN_COUNT)
