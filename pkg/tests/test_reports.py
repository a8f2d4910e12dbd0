import pytest

from panodent.errors import (
    ConfigError,
    DuplicateTopicNumber,
    InvalidPattern,
    MalformedLine,
    UnknownImage,
)
from panodent.reports import (
    DEFAULT_EXCLUSION_PATTERNS,
    Report,
    ingest_corpus,
    is_presence_sentence,
    parse_report,
    read_corpus,
    write_corpus,
)


class TestParseReport:
    def test_sample_report_line_structure(self, sample_report):
        assert sample_report.report_id == "R0001"
        assert [line.topic_number for line in sample_report.lines] == [1, 2, 3, 4, 5, 6, 7]
        line4 = sample_report.lines[3]
        assert line4.topic_number == 4
        assert [t.code for t in line4.teeth] == [36, 37]
        assert line4.text.startswith("Tooth 36 and 37")

    def test_exactly_line_two_excluded(self, sample_report):
        excluded = [line.topic_number for line in sample_report.lines if line.excluded]
        assert excluded == [2]

    def test_empty_file(self):
        report = parse_report("", "empty")
        assert report.lines == ()

    def test_blank_lines_ignored(self):
        report = parse_report("\n01: Root fragment.\n\n02: Metallic core.\n", "r")
        assert len(report.lines) == 2

    def test_malformed_line_reports_line_number(self):
        with pytest.raises(MalformedLine) as excinfo:
            parse_report("banana", "r")
        assert excinfo.value.line_number == 1

    def test_single_digit_prefix_is_malformed(self):
        with pytest.raises(MalformedLine):
            parse_report("1: Root fragment.", "r")

    def test_duplicate_topic_number(self):
        with pytest.raises(DuplicateTopicNumber):
            parse_report("01: A tooth.\n01: Another tooth.", "r")

    def test_decreasing_topic_number_is_malformed(self):
        with pytest.raises(MalformedLine):
            parse_report("02: A tooth.\n01: Another tooth.", "r")

    def test_serialization_round_trip(self, sample_report):
        rebuilt = Report.from_dict(sample_report.to_dict())
        assert rebuilt == sample_report

    def test_default_image_id_is_report_id(self):
        assert parse_report("", "R9").image_id == "R9"


class TestPresenceSentences:
    def test_missing_teeth_detected(self):
        assert is_presence_sentence("Missing teeth: 18, 28 and 48.", DEFAULT_EXCLUSION_PATTERNS)

    def test_missing_tooth_singular(self):
        assert is_presence_sentence("Missing tooth 18.", DEFAULT_EXCLUSION_PATTERNS)

    def test_absence_detected(self):
        assert is_presence_sentence("Absence of tooth 11.", DEFAULT_EXCLUSION_PATTERNS)

    def test_condition_sentence_not_excluded(self):
        assert not is_presence_sentence(
            "Tooth 36 and 37: endodontic treatment.", DEFAULT_EXCLUSION_PATTERNS
        )

    def test_present_teeth_region_not_excluded(self):
        # bone-loss wording mentions "present teeth" but is a finding, not a
        # presence statement; default patterns leave it in
        assert not is_presence_sentence(
            "Mild bone loss in the region of the present teeth.", DEFAULT_EXCLUSION_PATTERNS
        )

    def test_empty_pattern_list_is_config_error(self):
        with pytest.raises(ConfigError):
            is_presence_sentence("anything", [])

    def test_bad_pattern_rejected(self):
        with pytest.raises(InvalidPattern):
            is_presence_sentence("anything", ["("])


class TestCorpusIo:
    def test_round_trip_through_jsonl(self, sample_report, tmp_path):
        path = tmp_path / "corpus.jsonl"
        write_corpus([sample_report], path)
        assert read_corpus(path) == [sample_report]

    def test_ingest_orders_by_report_id(self, tmp_path):
        (tmp_path / "b.txt").write_text("01: Root fragment.\n")
        (tmp_path / "a.txt").write_text("01: Metallic core.\n")
        reports = ingest_corpus(tmp_path)
        assert [r.report_id for r in reports] == ["a", "b"]

    def test_ingest_with_manifest(self, tmp_path):
        (tmp_path / "a.txt").write_text("01: Root fragment.\n")
        reports = ingest_corpus(tmp_path, manifest={"a": "IMG1"})
        assert reports[0].image_id == "IMG1"

    def test_ingest_missing_manifest_entry(self, tmp_path):
        (tmp_path / "a.txt").write_text("01: Root fragment.\n")
        with pytest.raises(UnknownImage):
            ingest_corpus(tmp_path, manifest={"other": "IMG1"})
