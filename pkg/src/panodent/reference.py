"""Loader for the bundled reference evaluation tables.

These are the published per-condition classifier results, rater scores, and
expert-set agreement statistics for the 13-condition benchmark. The trend
analyses run on them out of the box, and the test suite checks that our
statistics reproduce the reported aggregates from the raw rows.
"""

from __future__ import annotations

import json
from functools import lru_cache
from pathlib import Path

ASSET = Path(__file__).parent / "assets" / "reference_results.json"

VALIDATION_CONFIGS = (
    ("less_context", "none"),
    ("less_context", "imagenet"),
    ("less_context", "crops"),
    ("more_context", "none"),
    ("more_context", "imagenet"),
    ("more_context", "crops"),
)


@lru_cache(maxsize=1)
def load() -> dict:
    return json.loads(ASSET.read_text(encoding="utf-8"))


def condition_names() -> list[str]:
    return [entry["name"] for entry in load()["conditions"]]


def corpus_frequencies() -> dict[str, int]:
    return {entry["name"]: entry["corpus_frequency"] for entry in load()["conditions"]}


def frequency_and_test_mcc() -> tuple[list[float], list[float]]:
    """The 13 (positive-sample frequency, test MCC) trend points."""
    conditions = load()["conditions"]
    return (
        [float(entry["corpus_frequency"]) for entry in conditions],
        [entry["test_mcc"] for entry in conditions],
    )


def validation_column(context: str, pretraining: str) -> list[float]:
    return [entry["validation"][context][pretraining] for entry in load()["conditions"]]


def expert_set_table() -> tuple[list[int], list[float], list[float]]:
    """Per-condition (positive frequency, Fleiss' kappa, model MCC)."""
    rows = load()["expert_set"]["per_condition"]
    return (
        [row["positive_frequency"] for row in rows],
        [row["fleiss_kappa"] for row in rows],
        [row["model_mcc"] for row in rows],
    )


def reported_r_squared() -> dict[str, float]:
    return dict(load()["expert_set"]["reported_r_squared"])
