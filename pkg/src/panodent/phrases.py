"""Noun-phrase extraction from report lines.

Two extractors share one output type: a remote chat-completion endpoint
driven by a fixed prompt (the production path), and a deterministic
rule-based splitter that keeps the whole pipeline runnable offline. Results
are memoized in an append-only JSON Lines cache keyed by content hash, so
repeated runs never re-contact the network.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import requests

from .errors import (
    CacheCorrupt,
    ConfigError,
    EndpointUnavailable,
    RateLimited,
    ResponseUnparseable,
)
from .fdi import tokenize_teeth
from .reports import Report, ReportLine

_PUNCT = re.compile(r"[^\w\s]")
_WS = re.compile(r"\s+")

# Chunk boundaries for the rule-based extractor: clause punctuation plus
# the coordinating conjunctions.
_CHUNK_SPLIT = re.compile(r"[:.;,]|\b(?:and|or)\b", re.IGNORECASE)

# Leading articles/prepositions trimmed from rule-based chunks.
STOP_WORDS = frozenset(
    "a an the of in on at with for to by from".split()
)

PROMPT_ASSET = Path(__file__).parent / "assets" / "extraction_prompt.txt"


def normalize_phrase(surface: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace. Idempotent."""
    text = _PUNCT.sub(" ", surface.lower())
    return _WS.sub(" ", text).strip()


@dataclass(frozen=True)
class NounPhrase:
    """A phrase extracted from a report sentence."""

    surface: str
    normalized: str
    is_tooth_mention: bool

    @classmethod
    def from_surface(cls, surface: str) -> "NounPhrase | None":
        normalized = normalize_phrase(surface)
        if not normalized:
            return None
        return cls(
            surface=surface.strip(),
            normalized=normalized,
            is_tooth_mention=bool(tokenize_teeth(surface)),
        )

    def to_dict(self) -> dict:
        return {
            "surface": self.surface,
            "normalized": self.normalized,
            "is_tooth_mention": self.is_tooth_mention,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NounPhrase":
        return cls(data["surface"], data["normalized"], data["is_tooth_mention"])


def _trim_stop_words(chunk: str) -> str:
    words = chunk.split()
    while words and words[0].lower() in STOP_WORDS:
        words.pop(0)
    return " ".join(words)


def extract_noun_phrases_rules(line: ReportLine) -> list[NounPhrase]:
    """Deterministic offline extractor.

    Splits the sentence at clause punctuation and and/or conjunctions,
    trims leading articles and prepositions, and emits each non-empty chunk.
    Not claimed to match the remote extractor, only to be deterministic.
    """
    phrases = []
    for chunk in _CHUNK_SPLIT.split(line.text):
        if chunk is None:
            continue
        trimmed = _trim_stop_words(chunk.strip())
        phrase = NounPhrase.from_surface(trimmed) if trimmed else None
        if phrase is not None:
            phrases.append(phrase)
    return phrases


# --- remote extraction -------------------------------------------------------


def default_prompt() -> str:
    return PROMPT_ASSET.read_text(encoding="utf-8").strip()


@dataclass
class EndpointConfig:
    """Where and how to call the chat-completion endpoint."""

    base_url: str
    model: str
    api_key_env: str = "EXTRACTION_API_KEY"
    timeout: float = 60.0
    max_concurrent: int = 4
    temperature: float = 0.0
    prompt: str | None = None

    def resolved_prompt(self) -> str:
        return self.prompt if self.prompt is not None else default_prompt()


_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+(?P<body>.+?)\s*$")
_TOPIC_HEAD = re.compile(r"^\s*(?:item\s+)?(?:\*\*)?(\d{2})(?:\*\*)?\s*[:.)-]", re.IGNORECASE)


def parse_extraction_response(text: str) -> dict[int, list[str]]:
    """Parse a vertical-topic response into {topic_number: phrase list}.

    Accepts ``-``, ``*`` and numbered bullets grouped under two-digit topic
    headings. Bullets before any heading land under topic -1 (used by the
    per-sentence request mode). Raises ResponseUnparseable when no bullet
    list is present at all.
    """
    topics: dict[int, list[str]] = {}
    current = -1
    saw_bullet = False
    for raw_line in text.splitlines():
        head = _TOPIC_HEAD.match(raw_line)
        if head is not None:
            current = int(head.group(1))
            topics.setdefault(current, [])
            continue
        bullet = _BULLET.match(raw_line)
        if bullet is not None:
            saw_bullet = True
            topics.setdefault(current, []).append(bullet.group("body"))
    if not saw_bullet:
        raise ResponseUnparseable(
            "response contains no bullet or numbered list; refusing to guess"
        )
    return topics


PostFn = Callable[[str, dict, dict, float], requests.Response]


def _default_post(url: str, headers: dict, payload: dict, timeout: float) -> requests.Response:
    return requests.post(url, headers=headers, json=payload, timeout=timeout)


class RemoteExtractor:
    """Noun-phrase extraction through a chat-completion endpoint.

    One request covers a whole report (the prompt addresses every numbered
    item); the response is split per topic number. Per-sentence requests are
    available for endpoints that behave better with short inputs.
    """

    def __init__(self, config: EndpointConfig, api_key: str | None = None,
                 post_fn: PostFn = _default_post):
        self.config = config
        self._api_key = api_key
        self._post = post_fn

    @property
    def identity(self) -> str:
        return f"remote:{self.config.model}"

    def _request(self, user_content: str) -> str:
        import os

        key = self._api_key or os.environ.get(self.config.api_key_env, "")
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [
                {"role": "system", "content": self.config.resolved_prompt()},
                {"role": "user", "content": user_content},
            ],
        }
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        try:
            response = self._post(url, headers, payload, self.config.timeout)
        except requests.RequestException as exc:
            raise EndpointUnavailable(f"cannot reach {url}: {exc}") from exc
        if response.status_code == 429:
            raise RateLimited(f"{url} returned 429; retry with backoff")
        if response.status_code >= 400:
            raise EndpointUnavailable(f"{url} returned {response.status_code}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise ResponseUnparseable(f"unexpected response envelope: {exc}") from exc

    def extract_report(self, report: Report) -> dict[int, list[NounPhrase]]:
        """Extract phrases for every line of a report in one request."""
        body = "\n".join(f"{line.topic_number:02d}: {line.text}" for line in report.lines)
        topics = parse_extraction_response(self._request(body))
        result: dict[int, list[NounPhrase]] = {}
        for line in report.lines:
            phrases = []
            for surface in topics.get(line.topic_number, []):
                phrase = NounPhrase.from_surface(surface)
                if phrase is not None:
                    phrases.append(phrase)
            result[line.topic_number] = phrases
        return result

    def extract_line(self, line: ReportLine) -> list[NounPhrase]:
        """Per-sentence request mode."""
        if not line.text.strip():
            return []
        topics = parse_extraction_response(
            self._request(f"{line.topic_number:02d}: {line.text}")
        )
        surfaces = topics.get(line.topic_number, topics.get(-1, []))
        phrases = []
        for surface in surfaces:
            phrase = NounPhrase.from_surface(surface)
            if phrase is not None:
                phrases.append(phrase)
        return phrases


# --- cache -------------------------------------------------------------------

RULES_IDENTITY = "rules:v1"


def cache_key(prompt: str, sentence: str, extractor_identity: str) -> str:
    """Stable content hash of (prompt, sentence, extractor identity)."""
    blob = json.dumps(
        {"prompt": prompt, "sentence": sentence, "extractor": extractor_identity},
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ExtractionCacheEntry:
    key: str
    extractor: str
    phrases: tuple[NounPhrase, ...]
    timestamp: float

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "extractor": self.extractor,
            "phrases": [p.to_dict() for p in self.phrases],
            "timestamp": self.timestamp,
        }


class ExtractionCache:
    """Append-only JSON Lines cache; the last entry for a key wins.

    Lookups never contact the network. Writes are serialized through a lock
    so concurrent extraction workers can share one cache.
    """

    _HEX_KEY = re.compile(r"^[0-9a-f]{64}$")

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, ExtractionCacheEntry] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    data = json.loads(line)
                    entry = ExtractionCacheEntry(
                        key=data["key"],
                        extractor=data["extractor"],
                        phrases=tuple(NounPhrase.from_dict(p) for p in data["phrases"]),
                        timestamp=data["timestamp"],
                    )
                except (ValueError, KeyError, TypeError) as exc:
                    raise CacheCorrupt(
                        f"{self.path}:{line_number}: unreadable cache entry: {exc}"
                    ) from exc
                if not self._HEX_KEY.match(entry.key):
                    raise CacheCorrupt(
                        f"{self.path}:{line_number}: key is not a sha256 digest",
                        key=entry.key,
                    )
                self._entries[entry.key] = entry

    def get(self, key: str) -> ExtractionCacheEntry | None:
        return self._entries.get(key)

    def put(self, key: str, extractor: str, phrases: Sequence[NounPhrase]) -> ExtractionCacheEntry:
        entry = ExtractionCacheEntry(
            key=key, extractor=extractor, phrases=tuple(phrases), timestamp=time.time()
        )
        with self._lock:
            self._entries[key] = entry
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(entry.to_dict(), ensure_ascii=False) + "\n")
        return entry

    def __len__(self) -> int:
        return len(self._entries)


STRATEGIES = ("remote", "rules", "remote-then-rules")


def extract_with_cache(
    line: ReportLine,
    strategy: str,
    cache: ExtractionCache,
    remote: RemoteExtractor | None = None,
    prompt: str | None = None,
) -> list[NounPhrase]:
    """Extract phrases for one line, consulting the cache first.

    ``remote-then-rules`` falls back to the rule-based extractor when the
    endpoint fails, tagging the cache entry with the extractor that actually
    produced the result.
    """
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown extraction strategy {strategy!r}; use one of {STRATEGIES}")
    if strategy in ("remote", "remote-then-rules") and remote is None:
        raise ConfigError(f"strategy {strategy!r} requires an endpoint configuration")

    resolved_prompt = prompt if prompt is not None else (
        remote.config.resolved_prompt() if remote is not None else default_prompt()
    )

    candidates = {
        "remote": [remote.identity] if remote else [],
        "rules": [RULES_IDENTITY],
        "remote-then-rules": ([remote.identity] if remote else []) + [RULES_IDENTITY],
    }[strategy]
    for identity in candidates:
        hit = cache.get(cache_key(resolved_prompt, line.text, identity))
        if hit is not None:
            return list(hit.phrases)

    if strategy == "rules":
        phrases = extract_noun_phrases_rules(line)
        identity = RULES_IDENTITY
    elif strategy == "remote":
        phrases = remote.extract_line(line)
        identity = remote.identity
    else:
        try:
            phrases = remote.extract_line(line)
            identity = remote.identity
        except (EndpointUnavailable, RateLimited, ResponseUnparseable):
            phrases = extract_noun_phrases_rules(line)
            identity = RULES_IDENTITY

    cache.put(cache_key(resolved_prompt, line.text, identity), identity, phrases)
    return phrases


def _extract_report_lines(
    report: Report,
    strategy: str,
    cache: ExtractionCache,
    remote: RemoteExtractor | None,
) -> dict[tuple[str, int], list[NounPhrase]]:
    """One report's worth of extraction, sending a single remote request
    for the whole report on a cache miss (responses are split per topic and
    cached per line, keyed by sentence content)."""
    lines = [line for line in report.lines if not line.excluded]
    result: dict[tuple[str, int], list[NounPhrase]] = {}
    if strategy == "rules" or not lines:
        for line in lines:
            result[(report.report_id, line.topic_number)] = extract_with_cache(
                line, strategy, cache, remote
            )
        return result

    prompt = remote.config.resolved_prompt()
    missing = []
    for line in lines:
        hit = None
        for identity in (remote.identity, RULES_IDENTITY):
            hit = cache.get(cache_key(prompt, line.text, identity))
            if hit is not None:
                break
        if hit is not None:
            result[(report.report_id, line.topic_number)] = list(hit.phrases)
        else:
            missing.append(line)
    if not missing:
        return result

    try:
        by_topic = remote.extract_report(report)
        for line in missing:
            phrases = by_topic.get(line.topic_number, [])
            cache.put(cache_key(prompt, line.text, remote.identity), remote.identity, phrases)
            result[(report.report_id, line.topic_number)] = phrases
    except (EndpointUnavailable, RateLimited, ResponseUnparseable):
        if strategy != "remote-then-rules":
            raise
        for line in missing:
            phrases = extract_noun_phrases_rules(line)
            cache.put(cache_key(prompt, line.text, RULES_IDENTITY), RULES_IDENTITY, phrases)
            result[(report.report_id, line.topic_number)] = phrases
    return result


def extract_corpus(
    reports: Iterable[Report],
    strategy: str,
    cache: ExtractionCache,
    remote: RemoteExtractor | None = None,
    per_sentence: bool = False,
) -> dict[tuple[str, int], list[NounPhrase]]:
    """Extract phrases for every non-excluded line of a corpus.

    Excluded lines contribute no labels downstream, so they are skipped.
    Remote strategies send one request per report by default (per-sentence
    requests are the configurable alternative) and fan reports out over up
    to ``max_concurrent`` worker threads; the cache's single-writer lock
    keeps the log consistent. Keys are (report_id, topic_number).
    """
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown extraction strategy {strategy!r}; use one of {STRATEGIES}")
    if strategy in ("remote", "remote-then-rules") and remote is None:
        raise ConfigError(f"strategy {strategy!r} requires an endpoint configuration")

    reports = list(reports)
    result: dict[tuple[str, int], list[NounPhrase]] = {}
    if per_sentence or strategy == "rules":
        for report in reports:
            for line in report.lines:
                if line.excluded:
                    continue
                result[(report.report_id, line.topic_number)] = extract_with_cache(
                    line, strategy, cache, remote
                )
        return result

    from concurrent.futures import ThreadPoolExecutor

    workers = max(1, remote.config.max_concurrent)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for partial in pool.map(
            lambda report: _extract_report_lines(report, strategy, cache, remote), reports
        ):
            result.update(partial)
    return result
