import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from panodent.errors import EmptyGroup, IncompleteAnnotations, StratumExhausted
from panodent.study import (
    AnnotationRecord,
    ExpertImageDataset,
    annotations_by_rater,
    group_average,
    leave_one_out_eval,
    majority_vote,
    per_condition_analysis,
    per_condition_mcc,
    read_annotations,
    sample_expert_set,
    trend_fits,
    write_annotations,
)

K = 13


def vector(*positive_indices):
    return tuple(1 if i + 1 in positive_indices else 0 for i in range(K))


def build_stratified_universe(per_stratum=4):
    """Synthetic predictions/labels where each item belongs to exactly one
    (condition, stratum) cell, so expected strata are enumerable by hand."""
    predictions = {}
    labels = {}
    expected = {}
    counter = 0
    for condition in range(1, K + 1):
        for stratum in ("TP", "FP", "FN"):
            for _ in range(per_stratum):
                item = (f"IMG{counter:04d}", 36)
                counter += 1
                predicted = vector(condition) if stratum in ("TP", "FP") else vector()
                actual = vector(condition) if stratum in ("TP", "FN") else vector()
                predictions[item] = predicted
                labels[item] = actual
                expected.setdefault((condition, stratum), set()).add(item)
    return predictions, labels, expected


class TestSampleExpertSet:
    def test_78_items(self):
        predictions, labels, _ = build_stratified_universe()
        dataset = sample_expert_set(predictions, labels, n_conditions=K, seed=1)
        assert len(dataset.items) == 78
        assert len(set(dataset.item_ids())) == 78

    def test_two_per_stratum_per_condition(self):
        predictions, labels, _ = build_stratified_universe()
        dataset = sample_expert_set(predictions, labels, n_conditions=K, seed=1)
        tally = {}
        for entry in dataset.items:
            tally[(entry.condition_index, entry.stratum)] = (
                tally.get((entry.condition_index, entry.stratum), 0) + 1
            )
        assert all(count == 2 for count in tally.values())
        assert len(tally) == K * 3

    def test_strata_match_brute_force_enumeration(self):
        predictions, labels, expected = build_stratified_universe()
        dataset = sample_expert_set(predictions, labels, n_conditions=K, seed=3)
        for entry in dataset.items:
            assert entry.item in expected[(entry.condition_index, entry.stratum)]

    def test_seeded_determinism(self):
        predictions, labels, _ = build_stratified_universe()
        a = sample_expert_set(predictions, labels, n_conditions=K, seed=5)
        b = sample_expert_set(predictions, labels, n_conditions=K, seed=5)
        assert a.items == b.items
        c = sample_expert_set(predictions, labels, n_conditions=K, seed=6)
        assert a.items != c.items

    def test_stratum_exhausted_names_the_shortfall(self):
        predictions, labels, expected = build_stratified_universe()
        # strip condition 4's FP stratum down to one item
        for item in sorted(expected[(4, "FP")])[1:]:
            del predictions[item]
            del labels[item]
        with pytest.raises(StratumExhausted) as excinfo:
            sample_expert_set(predictions, labels, n_conditions=K, seed=1)
        assert excinfo.value.condition_index == 4
        assert excinfo.value.stratum == "FP"
        assert excinfo.value.available == 1

    def test_save_load_round_trip(self, tmp_path):
        predictions, labels, _ = build_stratified_universe()
        dataset = sample_expert_set(predictions, labels, n_conditions=K, seed=1)
        path = tmp_path / "expert_set.json"
        dataset.save(path)
        reloaded = ExpertImageDataset.load(path)
        assert reloaded.items == dataset.items
        assert reloaded.seed == dataset.seed


class TestMajorityVote:
    def test_strict_majority(self):
        votes = [vector(1), vector(1), vector(1), vector(), vector()]
        assert majority_vote(votes) == vector(1)

    def test_even_tie_defaults_negative(self):
        votes = [vector(1), vector(1), vector(), vector()]
        assert majority_vote(votes) == vector()

    def test_even_tie_positive_policy(self):
        votes = [vector(1), vector(1), vector(), vector()]
        assert majority_vote(votes, tie_policy="positive") == vector(1)

    def test_single_rater(self):
        assert majority_vote([vector(2, 5)]) == vector(2, 5)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            majority_vote([])

    def test_unknown_policy(self):
        with pytest.raises(ValueError):
            majority_vote([vector()], tie_policy="coin")

    @given(st.permutations(list(range(5))))
    def test_permutation_invariance(self, order):
        votes = [vector(1), vector(1, 2), vector(2), vector(2), vector()]
        shuffled = [votes[i] for i in order]
        assert majority_vote(shuffled) == majority_vote(votes)


def identical_expert_annotations(n_experts=5, n_items=10):
    items = [(f"IMG{i:04d}", 36) for i in range(n_items)]
    # varied labels so most conditions are non-degenerate
    truth = {item: vector((i % K) + 1) for i, item in enumerate(items)}
    return {f"expert{e}": dict(truth) for e in range(1, n_experts + 1)}, truth


class TestLeaveOneOut:
    def test_identical_experts_score_one(self):
        annotations, truth = identical_expert_annotations()
        result = leave_one_out_eval(annotations, n_conditions=K)
        assert len(result.rounds) == 5
        assert sorted(result.rounds) == sorted(annotations)
        for score in result.expert_scores:
            for index, value in enumerate(score.per_condition, start=1):
                column = [truth[item][index - 1] for item in truth]
                if 0 < sum(column) < len(column):
                    assert value == 1.0

    def test_four_experts_four_rounds(self):
        annotations, _ = identical_expert_annotations(n_experts=4)
        result = leave_one_out_eval(annotations, n_conditions=K)
        assert len(result.rounds) == 4
        assert len(result.expert_scores) == 4

    def test_incomplete_annotations_listed(self):
        annotations, _ = identical_expert_annotations()
        removed = next(iter(annotations["expert3"]))
        del annotations["expert3"][removed]
        with pytest.raises(IncompleteAnnotations) as excinfo:
            leave_one_out_eval(annotations, n_conditions=K)
        assert ("expert3", removed) in excinfo.value.missing

    def test_others_scored_against_full_consensus(self):
        annotations, truth = identical_expert_annotations()
        others = {
            "model": ("model", dict(truth)),
            "student1": ("student", {item: vector() for item in truth}),
        }
        result = leave_one_out_eval(annotations, n_conditions=K, others=others)
        by_id = {score.rater_id: score for score in result.other_scores}
        assert by_id["model"].group == "model"
        non_degenerate = [
            i
            for i in range(K)
            if 0 < sum(truth[item][i] for item in truth) < len(truth)
        ]
        for i in non_degenerate:
            assert by_id["model"].per_condition[i] == 1.0
            assert by_id["student1"].per_condition[i] == 0.0  # all-negative predictor

    def test_needs_two_experts(self):
        annotations, _ = identical_expert_annotations(n_experts=1)
        with pytest.raises(ValueError):
            leave_one_out_eval(annotations, n_conditions=K)


class TestGroupAverage:
    def test_reported_student_mean(self):
        values = {"s1": 0.479, "s2": 0.500, "s3": 0.360, "s4": 0.435, "s5": 0.372}
        groups = {name: "student" for name in values}
        result = group_average(values, groups)
        assert result["student"] == pytest.approx(0.429, abs=0.0005)

    def test_reported_expert_mean(self):
        values = {"e1": 0.607, "e2": 0.689, "e3": 0.499, "e4": 0.575, "e5": 0.574}
        groups = {name: "expert" for name in values}
        result = group_average(values, groups)
        assert result["expert"] == pytest.approx(0.589, abs=0.0005)

    def test_single_rater_group(self):
        assert group_average({"a": 0.3}, {"a": "solo"}) == {"solo": pytest.approx(0.3)}

    def test_empty_rejected(self):
        with pytest.raises(EmptyGroup):
            group_average({}, {})


class TestPerConditionAnalysis:
    def build_inputs(self):
        items = [(f"IMG{i:04d}", 36) for i in range(20)]
        # conditions 1..5 at descending frequency; 6..13 never marked
        plan = [1] * 6 + [2] * 4 + [3] * 3 + [4] * 2 + [5] * 1 + [0] * 4
        truth = {item: vector(c) if c else vector() for item, c in zip(items, plan)}
        annotations = {f"expert{e}": dict(truth) for e in range(1, 6)}
        # sprinkle disagreement so kappa varies across conditions
        annotations["expert1"][items[0]] = vector(2)
        annotations["expert1"][items[6]] = vector()
        annotations["expert2"][items[10]] = vector(4)
        consensus = {
            item: majority_vote([annotations[e][item] for e in sorted(annotations)])
            for item in items
        }
        # an imperfect model so per-condition MCC varies too
        model = dict(truth)
        model[items[1]] = vector()
        model[items[7]] = vector(3)
        model[items[16]] = vector(5)
        groups = {
            "model": {"model": model},
            "student": {"s1": dict(truth), "s2": {item: vector() for item in items}},
        }
        return consensus, groups, annotations

    def test_rows_structure(self):
        consensus, groups, annotations = self.build_inputs()
        rows = per_condition_analysis(consensus, groups, annotations, n_conditions=K)
        assert [r.condition_index for r in rows] == list(range(1, K + 1))
        for row in rows:
            assert set(row.mcc_by_group) == {"model", "student"}
            assert row.positive_frequency == sum(
                consensus[item][row.condition_index - 1] for item in consensus
            )

    def test_degenerate_condition_flagged(self):
        consensus, groups, annotations = self.build_inputs()
        rows = per_condition_analysis(consensus, groups, annotations, n_conditions=K)
        # condition 13 never appears in the 10-item fixture: all votes negative
        row13 = rows[12]
        assert row13.kappa_degenerate
        assert row13.kappa is None
        assert row13.mcc_by_group["model"]["pooled"] == 0.0  # degenerate -> 0 convention

    def test_trend_fits_nesting(self):
        consensus, groups, annotations = self.build_inputs()
        rows = per_condition_analysis(consensus, groups, annotations, n_conditions=K)
        fits = trend_fits(rows, group="model")
        assert fits["kappa_and_frequency_r_squared"] >= fits["kappa_r_squared"] - 1e-12
        assert fits["n_points"] == sum(1 for r in rows if r.kappa is not None)


class TestAnnotationRecords:
    def test_round_trip(self, tmp_path):
        records = [
            AnnotationRecord("r1", "expert", "IMG0001", 36, vector(1, 3)),
            AnnotationRecord("r1", "expert", "IMG0002", 37, vector()),
        ]
        path = tmp_path / "annotations.jsonl"
        write_annotations(records, path)
        assert read_annotations(path) == records

    def test_latest_record_wins(self):
        records = [
            AnnotationRecord("r1", "expert", "IMG0001", 36, vector(1)),
            AnnotationRecord("r1", "expert", "IMG0001", 36, vector(2)),
        ]
        by_rater = annotations_by_rater(records)
        assert by_rater["r1"][("IMG0001", 36)] == vector(2)


class TestPerConditionMcc:
    def test_perfect_and_inverted(self):
        items = [(f"I{i}", 36) for i in range(4)]
        truth = {item: vector(1) if i % 2 else vector() for i, item in enumerate(items)}
        inverted = {
            item: vector() if truth[item][0] else vector(1) for item in items
        }
        scores_perfect = per_condition_mcc(truth, truth, K)
        scores_inverted = per_condition_mcc(inverted, truth, K)
        assert scores_perfect[0] == 1.0
        assert scores_inverted[0] == -1.0
