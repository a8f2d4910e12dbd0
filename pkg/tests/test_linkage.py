import pytest

from panodent.errors import UnknownImage
from panodent.fdi import FdiTooth
from panodent.linkage import build_label_matrix, link_line
from panodent.phrases import NounPhrase, extract_noun_phrases_rules
from panodent.reports import Report, ReportLine, parse_report


def phrase(normalized, mention=False):
    return NounPhrase(surface=normalized, normalized=normalized, is_tooth_mention=mention)


def line_with(teeth, text="x", excluded=False):
    return ReportLine(
        topic_number=1,
        text=text,
        teeth=tuple(FdiTooth(code) for code in teeth),
        excluded=excluded,
    )


class TestLinkLine:
    def test_cartesian_product(self, vocabulary):
        links = link_line(
            line_with([36, 37]),
            [phrase("endodontic treatment"), phrase("unfilled root canals")],
            vocabulary,
        )
        assert sorted((t.code, i) for t, i in links) == [(36, 1), (36, 5), (37, 1), (37, 5)]

    def test_no_teeth_no_links(self, vocabulary):
        assert link_line(line_with([]), [phrase("endodontic treatment")], vocabulary) == []

    def test_no_resolved_conditions_no_links(self, vocabulary):
        assert link_line(line_with([13, 38]), [phrase("left mandible condyle")], vocabulary) == []

    def test_tooth_mention_phrases_dropped(self, vocabulary):
        links = link_line(
            line_with([36]),
            [phrase("tooth 36", mention=True), phrase("root fragment")],
            vocabulary,
        )
        assert [(t.code, i) for t, i in links] == [(36, 7)]

    def test_excluded_line_rejected(self, vocabulary):
        with pytest.raises(ValueError):
            link_line(line_with([36], excluded=True), [], vocabulary)

    def test_size_is_exact_product(self, vocabulary):
        teeth = [11, 21, 31, 41]
        phrases = [phrase("root fragment"), phrase("metallic core"), phrase("unknown thing")]
        links = link_line(line_with(teeth), phrases, vocabulary)
        assert len(links) == len(teeth) * 2  # only two phrases resolve

    def test_duplicate_phrases_counted_once(self, vocabulary):
        links = link_line(
            line_with([36]),
            [phrase("root fragment"), phrase("root fragments")],  # same group
            vocabulary,
        )
        assert len(links) == 1


def positives(matrix):
    return {
        (record.image_id, record.tooth.code): {
            i + 1 for i, bit in enumerate(record.labels) if bit
        }
        for record in matrix.records
    }


class TestGoldenSampleReport:
    def test_linkage_golden(self, sample_report, sample_phrases, vocabulary):
        matrix = build_label_matrix([sample_report], vocabulary, sample_phrases)
        expected = {
            ("R0001", 36): {1, 5},
            ("R0001", 37): {1, 5},
            ("R0001", 13): {3},
            ("R0001", 38): {3},
            ("R0001", 48): set(),  # mentioned on line 06, no resolvable condition
        }
        assert positives(matrix) == expected

    def test_excluded_line_contributes_nothing(self, sample_report, sample_phrases, vocabulary):
        matrix = build_label_matrix([sample_report], vocabulary, sample_phrases)
        recorded_teeth = {record.tooth.code for record in matrix.records}
        # teeth 18 and 28 appear only on the excluded line 02
        assert 18 not in recorded_teeth
        assert 28 not in recorded_teeth

    def test_double_ingest_is_idempotent(self, sample_report, sample_phrases, vocabulary):
        once = build_label_matrix([sample_report], vocabulary, sample_phrases)
        twice = build_label_matrix([sample_report, sample_report], vocabulary, sample_phrases)
        assert positives(once) == positives(twice)

    def test_line_reordering_invariance(self, sample_report, sample_phrases, vocabulary):
        reordered = Report(
            report_id=sample_report.report_id,
            image_id=sample_report.image_id,
            lines=tuple(reversed(sample_report.lines)),
        )
        a = build_label_matrix([sample_report], vocabulary, sample_phrases)
        b = build_label_matrix([reordered], vocabulary, sample_phrases)
        assert positives(a) == positives(b)

    def test_positive_counts_match_brute_force(self, sample_report, sample_phrases, vocabulary):
        matrix = build_label_matrix([sample_report], vocabulary, sample_phrases)
        brute = [0] * vocabulary.size
        for record in matrix.records:
            for column in range(vocabulary.size):
                brute[column] += record.labels[column]
        assert matrix.positive_counts() == brute
        summary = matrix.summary()
        assert summary["positive_counts"]["endodontic treatment"] == 2
        assert summary["positive_counts"]["included and impacted"] == 2


class TestSegmentedTeeth:
    def test_segmented_teeth_get_zero_records(self, sample_report, sample_phrases, vocabulary):
        segmented = {"R0001": [FdiTooth(11), FdiTooth(36)]}
        matrix = build_label_matrix(
            [sample_report], vocabulary, sample_phrases, segmented_teeth=segmented
        )
        table = positives(matrix)
        assert table[("R0001", 11)] == set()
        assert table[("R0001", 36)] == {1, 5}

    def test_unknown_image(self, sample_report, sample_phrases, vocabulary):
        with pytest.raises(UnknownImage):
            build_label_matrix(
                [sample_report], vocabulary, sample_phrases, segmented_teeth={"OTHER": []}
            )

    def test_report_with_only_excluded_lines(self, vocabulary):
        report = parse_report("01: Missing teeth: 18, 28 and 48.", "r")
        matrix = build_label_matrix(
            [report], vocabulary, {}, segmented_teeth={"r": [FdiTooth(18)]}
        )
        assert positives(matrix) == {("r", 18): set()}

    def test_records_sorted_and_vector_length(self, sample_report, sample_phrases, vocabulary):
        matrix = build_label_matrix([sample_report], vocabulary, sample_phrases)
        keys = [(r.image_id, r.tooth.code) for r in matrix.records]
        assert keys == sorted(keys)
        assert all(len(r.labels) == vocabulary.size for r in matrix.records)

    def test_save_load_round_trip(self, sample_report, sample_phrases, vocabulary, tmp_path):
        matrix = build_label_matrix([sample_report], vocabulary, sample_phrases)
        records_path = tmp_path / "labels.jsonl"
        matrix.save(records_path, tmp_path / "summary.json")
        reloaded = type(matrix).load(records_path, vocabulary)
        assert reloaded.records == matrix.records
