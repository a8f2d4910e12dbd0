"""Rater-comparison apparatus: stratified sampling, consensus, agreement.

The expert set is drawn per condition from three strata (true positives,
false positives, false negatives of the model against report labels), so
the raters see guaranteed positives and borderline cases despite the heavy
class imbalance. Consensus ground truth is a majority vote over experts;
each expert is scored leave-one-out against the other experts' consensus.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateAgreement,
    EmptyGroup,
    IncompleteAnnotations,
    StratumExhausted,
)
from .metrics import AgreementTable, confusion_from_predictions, fleiss_kappa, mcc, ols_fit

STRATA = ("TP", "FP", "FN")
DEFAULT_PER_CONDITION = {"TP": 2, "FP": 2, "FN": 2}

# item = (image_id, fdi); vectors are 0/1 tuples over the vocabulary
Item = tuple[str, int]
LabelVector = tuple[int, ...]


@dataclass(frozen=True)
class AnnotationRecord:
    """One rater's labels for one crop."""

    rater_id: str
    group: str
    image_id: str
    fdi: int
    labels: LabelVector

    @property
    def item(self) -> Item:
        return (self.image_id, self.fdi)

    def to_dict(self) -> dict:
        return {
            "rater_id": self.rater_id,
            "group": self.group,
            "image_id": self.image_id,
            "fdi": self.fdi,
            "labels": list(self.labels),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnnotationRecord":
        return cls(
            rater_id=data["rater_id"],
            group=data["group"],
            image_id=data["image_id"],
            fdi=data["fdi"],
            labels=tuple(data["labels"]),
        )


def read_annotations(path: str | Path) -> list[AnnotationRecord]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                records.append(AnnotationRecord.from_dict(json.loads(line)))
    return records


def write_annotations(records: Iterable[AnnotationRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_dict()) + "\n")


def annotations_by_rater(
    records: Iterable[AnnotationRecord],
) -> dict[str, dict[Item, LabelVector]]:
    """Latest record per (rater, item) wins."""
    result: dict[str, dict[Item, LabelVector]] = defaultdict(dict)
    for record in records:
        result[record.rater_id][record.item] = record.labels
    return dict(result)


# --- expert set sampling -----------------------------------------------------


@dataclass(frozen=True)
class ExpertSetItem:
    image_id: str
    fdi: int
    condition_index: int
    stratum: str

    @property
    def item(self) -> Item:
        return (self.image_id, self.fdi)

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "fdi": self.fdi,
            "condition_index": self.condition_index,
            "stratum": self.stratum,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExpertSetItem":
        return cls(data["image_id"], data["fdi"], data["condition_index"], data["stratum"])


@dataclass
class ExpertImageDataset:
    """The sampled crops raters annotate, with their sampling provenance."""

    items: list[ExpertSetItem]
    seed: int

    def item_ids(self) -> list[Item]:
        return [entry.item for entry in self.items]

    def save(self, path: str | Path) -> None:
        payload = {"seed": self.seed, "items": [entry.to_dict() for entry in self.items]}
        Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ExpertImageDataset":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(items=[ExpertSetItem.from_dict(d) for d in data["items"]], seed=data["seed"])


def sample_expert_set(
    predictions: Mapping[Item, LabelVector],
    labels: Mapping[Item, LabelVector],
    n_conditions: int,
    per_condition: Mapping[str, int] = DEFAULT_PER_CONDITION,
    seed: int = 0,
) -> ExpertImageDataset:
    """Draw the rater-study items: per condition, seeded uniform draws from
    the TP/FP/FN strata of the model's hard predictions vs report labels.

    Items are unique across the whole set; a stratum that cannot supply its
    quota (after uniqueness is enforced) raises StratumExhausted naming the
    condition and stratum.
    """
    rng = Random(seed)
    chosen: list[ExpertSetItem] = []
    taken: set[Item] = set()
    shared = sorted(set(predictions) & set(labels))

    for index in range(1, n_conditions + 1):
        strata: dict[str, list[Item]] = {name: [] for name in STRATA}
        for item in shared:
            predicted = predictions[item][index - 1]
            actual = labels[item][index - 1]
            if predicted == 1 and actual == 1:
                strata["TP"].append(item)
            elif predicted == 1 and actual == 0:
                strata["FP"].append(item)
            elif predicted == 0 and actual == 1:
                strata["FN"].append(item)
        for stratum in STRATA:
            wanted = per_condition.get(stratum, 0)
            available = [item for item in strata[stratum] if item not in taken]
            if len(available) < wanted:
                raise StratumExhausted(index, stratum, len(available), wanted)
            for item in rng.sample(available, wanted):
                taken.add(item)
                chosen.append(
                    ExpertSetItem(
                        image_id=item[0], fdi=item[1], condition_index=index, stratum=stratum
                    )
                )
    return ExpertImageDataset(items=chosen, seed=seed)


# --- consensus and scoring ---------------------------------------------------


def majority_vote(
    annotations: Sequence[LabelVector],
    tie_policy: str = "negative",
) -> LabelVector:
    """Per-condition majority over raters; exact ties fall to the policy.

    Positive requires strictly more than half the raters. The conservative
    default resolves even-rater ties to negative (an unproven finding is
    absent); "positive" flips that.
    """
    if not annotations:
        raise ValueError("majority_vote needs at least one annotation")
    if tie_policy not in ("negative", "positive"):
        raise ValueError(f"tie_policy must be 'negative' or 'positive', got {tie_policy!r}")
    votes = np.asarray(annotations, dtype=int)
    n = votes.shape[0]
    positives = votes.sum(axis=0)
    majority = positives * 2 > n
    if tie_policy == "positive":
        majority = majority | (positives * 2 == n)
    return tuple(int(v) for v in majority)


def per_condition_mcc(
    predicted: Mapping[Item, LabelVector],
    truth: Mapping[Item, LabelVector],
    n_conditions: int,
) -> list[float]:
    """MCC per condition over the shared items (0 for degenerate columns)."""
    items = sorted(set(predicted) & set(truth))
    scores = []
    for index in range(n_conditions):
        pred = [predicted[item][index] for item in items]
        actual = [truth[item][index] for item in items]
        scores.append(mcc(confusion_from_predictions(pred, actual)))
    return scores


@dataclass
class RaterScore:
    rater_id: str
    group: str
    per_condition: list[float]

    @property
    def average(self) -> float:
        return float(np.mean(self.per_condition))


@dataclass
class ConsensusEvaluation:
    """Leave-one-out expert scores plus all-expert-consensus scores."""

    expert_scores: list[RaterScore]
    other_scores: list[RaterScore]
    consensus: dict[Item, LabelVector]
    rounds: list[str] = field(default_factory=list)  # excluded expert per round

    def all_scores(self) -> list[RaterScore]:
        return self.expert_scores + self.other_scores


def leave_one_out_eval(
    expert_annotations: Mapping[str, Mapping[Item, LabelVector]],
    n_conditions: int,
    others: Mapping[str, tuple[str, Mapping[Item, LabelVector]]] | None = None,
    tie_policy: str = "negative",
) -> ConsensusEvaluation:
    """Score each expert against the consensus of the remaining experts.

    Non-expert predictors (students, the model) are scored against the
    all-expert consensus. Every expert must have annotated every item.
    """
    experts = sorted(expert_annotations)
    if len(experts) < 2:
        raise ValueError("leave-one-out evaluation needs at least 2 experts")
    items = sorted({item for labels in expert_annotations.values() for item in labels})
    missing = [
        (expert, item)
        for expert in experts
        for item in items
        if item not in expert_annotations[expert]
    ]
    if missing:
        raise IncompleteAnnotations(missing)

    def consensus_of(subset: Sequence[str]) -> dict[Item, LabelVector]:
        return {
            item: majority_vote([expert_annotations[e][item] for e in subset], tie_policy)
            for item in items
        }

    expert_scores = []
    rounds = []
    for expert in experts:
        rest = [e for e in experts if e != expert]
        truth = consensus_of(rest)
        rounds.append(expert)
        expert_scores.append(
            RaterScore(
                rater_id=expert,
                group="expert",
                per_condition=per_condition_mcc(expert_annotations[expert], truth, n_conditions),
            )
        )

    full_consensus = consensus_of(experts)
    other_scores = []
    for rater_id, (group, predicted) in sorted((others or {}).items()):
        other_scores.append(
            RaterScore(
                rater_id=rater_id,
                group=group,
                per_condition=per_condition_mcc(predicted, full_consensus, n_conditions),
            )
        )
    return ConsensusEvaluation(
        expert_scores=expert_scores,
        other_scores=other_scores,
        consensus=full_consensus,
        rounds=rounds,
    )


def group_average(
    per_rater: Mapping[str, float],
    groups: Mapping[str, str],
) -> dict[str, float]:
    """Arithmetic mean of per-rater averages within each group."""
    buckets: dict[str, list[float]] = defaultdict(list)
    for rater_id, value in per_rater.items():
        buckets[groups[rater_id]].append(value)
    if not buckets:
        raise EmptyGroup("no raters supplied")
    for name, values in buckets.items():
        if not values:
            raise EmptyGroup(f"group {name} has no raters")
    return {name: float(np.mean(values)) for name, values in sorted(buckets.items())}


# --- per-condition agreement/performance table -------------------------------


@dataclass
class ConditionAnalysisRow:
    condition_index: int
    positive_frequency: int
    kappa: float | None
    kappa_degenerate: bool
    mcc_by_group: dict[str, dict[str, float]]  # group -> {"per_rater_mean", "pooled"}

    def to_dict(self) -> dict:
        return {
            "condition_index": self.condition_index,
            "positive_frequency": self.positive_frequency,
            "kappa": self.kappa,
            "kappa_degenerate": self.kappa_degenerate,
            "mcc_by_group": self.mcc_by_group,
        }


def per_condition_analysis(
    consensus: Mapping[Item, LabelVector],
    predictions_by_group: Mapping[str, Mapping[str, Mapping[Item, LabelVector]]],
    expert_annotations: Mapping[str, Mapping[Item, LabelVector]],
    n_conditions: int,
) -> list[ConditionAnalysisRow]:
    """Per condition: consensus positives, expert Fleiss' kappa, group MCCs.

    Group MCC is reported two ways: the mean of per-rater MCCs against the
    consensus, and the pooled MCC over all of the group's ratings stacked
    together. Degenerate kappa columns are flagged, not fatal.
    """
    items = sorted(consensus)
    experts = sorted(expert_annotations)
    rows = []
    for index in range(1, n_conditions + 1):
        positives = sum(consensus[item][index - 1] for item in items)

        kappa: float | None = None
        degenerate = False
        if len(experts) >= 2:
            votes = [
                sum(expert_annotations[e][item][index - 1] for e in experts) for item in items
            ]
            table = AgreementTable.from_binary_votes(votes, n_raters=len(experts))
            try:
                kappa = fleiss_kappa(table)
            except DegenerateAgreement:
                degenerate = True

        mcc_by_group: dict[str, dict[str, float]] = {}
        for group, raters in sorted(predictions_by_group.items()):
            per_rater = []
            pooled_pred: list[int] = []
            pooled_truth: list[int] = []
            for rater_id in sorted(raters):
                predicted = raters[rater_id]
                pred = [predicted[item][index - 1] for item in items if item in predicted]
                actual = [consensus[item][index - 1] for item in items if item in predicted]
                per_rater.append(mcc(confusion_from_predictions(pred, actual)))
                pooled_pred.extend(pred)
                pooled_truth.extend(actual)
            mcc_by_group[group] = {
                "per_rater_mean": float(np.mean(per_rater)) if per_rater else 0.0,
                "pooled": mcc(confusion_from_predictions(pooled_pred, pooled_truth))
                if pooled_pred
                else 0.0,
            }
        rows.append(
            ConditionAnalysisRow(
                condition_index=index,
                positive_frequency=int(positives),
                kappa=kappa,
                kappa_degenerate=degenerate,
                mcc_by_group=mcc_by_group,
            )
        )
    return rows


def trend_fits(rows: Sequence[ConditionAnalysisRow], group: str = "model") -> dict:
    """Scatter-ready OLS fits: kappa -> MCC and (kappa, frequency) -> MCC.

    Degenerate-kappa conditions are left out of the fits. Returns the
    computed R^2 values; reported values from prior studies can be attached
    by the caller for side-by-side output.
    """
    usable = [r for r in rows if r.kappa is not None]
    kappa = np.array([r.kappa for r in usable])
    freq = np.array([r.positive_frequency for r in usable], dtype=float)
    target = np.array([r.mcc_by_group[group]["pooled"] for r in usable])
    single = ols_fit(kappa.reshape(-1, 1), target)
    double = ols_fit(np.column_stack([kappa, freq]), target)
    return {
        "n_points": len(usable),
        "kappa_r_squared": single.r_squared,
        "kappa_coefficients": single.coefficients.tolist(),
        "kappa_and_frequency_r_squared": double.r_squared,
        "kappa_and_frequency_coefficients": double.coefficients.tolist(),
    }
