from pathlib import Path

import pytest

from panodent.phrases import extract_noun_phrases_rules
from panodent.reports import parse_report
from panodent.vocabulary import default_vocabulary

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def sample_report_text() -> str:
    return (DATA_DIR / "sample_report.txt").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def sample_report(sample_report_text):
    return parse_report(sample_report_text, "R0001")


@pytest.fixture(scope="session")
def vocabulary():
    return default_vocabulary()


@pytest.fixture(scope="session")
def sample_phrases(sample_report):
    """Rule-extracted phrases for every non-excluded line of the sample."""
    return {
        (sample_report.report_id, line.topic_number): extract_noun_phrases_rules(line)
        for line in sample_report.lines
        if not line.excluded
    }
