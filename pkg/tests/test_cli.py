import json
import time
from pathlib import Path

import pytest
from click.testing import CliRunner

from panodent.cli import cli
from panodent.fileio import read_jsonl, write_jsonl
from panodent.linkage import LabelMatrix
from panodent.reports import ingest_corpus
from panodent.synthetic import (
    generate_corpus,
    generate_images,
    generate_segmentation_manifest,
    predictions_from_labels,
    study_predictions,
)
from panodent.vocabulary import ConditionVocabulary


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, vocabulary):
    """A generated 50-report corpus with matching segmentation and images."""
    root = tmp_path_factory.mktemp("pipeline")
    manifest = generate_corpus(root / "reports", vocabulary, n_reports=50, seed=11)
    (root / "corpus_manifest.json").write_text(json.dumps(manifest))
    reports = ingest_corpus(root / "reports", manifest=manifest)
    segmentation = generate_segmentation_manifest(reports, root / "segmentation.json", seed=11)
    generate_images(segmentation, root / "images", seed=11)
    return root


def run(args, **kwargs):
    runner = CliRunner()
    result = runner.invoke(cli, args, catch_exceptions=False, **kwargs)
    assert result.exit_code == 0, result.output
    return result


class TestEndToEndOffline:
    def test_full_pipeline_under_a_minute(self, workspace):
        started = time.monotonic()
        root = workspace
        run(["parse-reports", "--reports", str(root / "reports"),
             "--manifest", str(root / "corpus_manifest.json"),
             "--out", str(root / "corpus.jsonl")])
        run(["extract-phrases", "--corpus", str(root / "corpus.jsonl"),
             "--strategy", "rules", "--cache", str(root / "cache.jsonl"),
             "--out", str(root / "phrases.jsonl")])
        run(["build-vocab", "--corpus", str(root / "corpus.jsonl"),
             "--phrases", str(root / "phrases.jsonl"), "--min-count", "3",
             "--out", str(root / "vocab.json"),
             "--freq-csv", str(root / "freq.csv"),
             "--figure", str(root / "freq.png")])
        run(["link-labels", "--corpus", str(root / "corpus.jsonl"),
             "--phrases", str(root / "phrases.jsonl"), "--vocab", str(root / "vocab.json"),
             "--segmentation", str(root / "segmentation.json"),
             "--out", str(root / "labels.jsonl"), "--summary", str(root / "summary.json")])
        run(["make-crops", "--manifest", str(root / "segmentation.json"),
             "--images", str(root / "images"), "--out-dir", str(root / "crops"),
             "--specs", str(root / "specs.jsonl"), "--human-dir", str(root / "human")])
        run(["split", "--specs", str(root / "specs.jsonl"), "--seed", "7",
             "--out", str(root / "split.jsonl")])

        vocabulary = ConditionVocabulary.load(root / "vocab.json")
        matrix = LabelMatrix.load(root / "labels.jsonl", vocabulary)
        write_jsonl(predictions_from_labels(matrix), root / "predictions.jsonl")
        run(["oversample", "--split", str(root / "split.jsonl"),
             "--labels", str(root / "labels.jsonl"), "--vocab", str(root / "vocab.json"),
             "--condition", "1", "--factor", "10",
             "--out", str(root / "split_oversampled.jsonl")])
        run(["evaluate", "--predictions", str(root / "predictions.jsonl"),
             "--labels", str(root / "labels.jsonl"), "--vocab", str(root / "vocab.json"),
             "--out", str(root / "eval.json"), "--csv", str(root / "eval.csv")])
        elapsed = time.monotonic() - started

        report = json.loads((root / "eval.json").read_text())
        assert report["average_mcc"] == pytest.approx(1.0)
        for row in report["per_condition"]:
            assert row["mcc"] == pytest.approx(1.0)
        assert (root / "freq.png").exists()
        assert (root / "crops").is_dir()
        assert elapsed < 60, f"pipeline took {elapsed:.1f}s"

    def test_vocabulary_covers_all_conditions(self, workspace, vocabulary):
        built = ConditionVocabulary.load(workspace / "vocab.json")
        assert set(built.names()) == set(vocabulary.names())

    def test_crops_match_specs(self, workspace):
        specs = read_jsonl(workspace / "specs.jsonl")
        crop_files = {p.name for p in (workspace / "crops").glob("*.png")}
        assert len(crop_files) == len(specs)
        for spec in specs[:10]:
            assert spec["crop_id"].replace(":", "_") + ".png" in crop_files

    def test_human_crops_are_380(self, workspace):
        from PIL import Image

        path = next(iter(sorted((workspace / "human").glob("*.png"))))
        assert Image.open(path).size == (380, 380)

    def test_split_determinism(self, workspace, tmp_path):
        out_a = tmp_path / "a.jsonl"
        out_b = tmp_path / "b.jsonl"
        for out in (out_a, out_b):
            run(["split", "--specs", str(workspace / "specs.jsonl"),
                 "--ratios", "0.7,0.15,0.15", "--seed", "7", "--out", str(out)])
        assert out_a.read_text() == out_b.read_text()

    def test_expert_set_cli(self, workspace, tmp_path):
        vocabulary = ConditionVocabulary.load(workspace / "vocab.json")
        matrix = LabelMatrix.load(workspace / "labels.jsonl", vocabulary)
        predictions_path = tmp_path / "study_predictions.jsonl"
        write_jsonl(study_predictions(matrix, seed=5), predictions_path)
        out = tmp_path / "expert_set.json"
        result = run(["sample-expert-set", "--predictions", str(predictions_path),
                      "--labels", str(workspace / "labels.jsonl"),
                      "--vocab", str(workspace / "vocab.json"),
                      "--seed", "5", "--out", str(out)])
        assert "78" in result.output
        payload = json.loads(out.read_text())
        assert len(payload["items"]) == 78


class TestFitTrend:
    def test_reference_frequency_trend(self, tmp_path):
        run(["fit-trend", "--reference", "frequency", "--out-dir", str(tmp_path),
             "--prefix", "freq"])
        summary = json.loads((tmp_path / "freq.json").read_text())
        assert summary["computed_r_squared"] == pytest.approx(0.575, abs=0.005)
        assert summary["reported_r_squared"] == 0.575
        assert (tmp_path / "freq.png").exists()
        assert (tmp_path / "freq.csv").read_text().startswith("point,frequency,test_mcc")

    def test_reference_kappa_trends_emit_both_values(self, tmp_path):
        run(["fit-trend", "--reference", "kappa", "--out-dir", str(tmp_path),
             "--prefix", "kappa"])
        single = json.loads((tmp_path / "kappa.json").read_text())
        assert single["reported_r_squared"] == 0.521
        assert single["computed_r_squared"] == pytest.approx(0.663, abs=0.005)
        assert "note" in single  # discrepancy documented, not forced

        run(["fit-trend", "--reference", "kappa+frequency", "--out-dir", str(tmp_path),
             "--prefix", "kf"])
        double = json.loads((tmp_path / "kf.json").read_text())
        assert double["reported_r_squared"] == 0.769
        assert double["computed_r_squared"] >= single["computed_r_squared"]

    def test_custom_csv_data(self, tmp_path):
        data = tmp_path / "points.csv"
        data.write_text("x,y\n1,2\n2,4\n3,6\n4,8.2\n")
        run(["fit-trend", "--data", str(data), "--x", "x", "--y", "y",
             "--out-dir", str(tmp_path), "--prefix", "custom"])
        summary = json.loads((tmp_path / "custom.json").read_text())
        assert summary["computed_r_squared"] > 0.99
        assert summary["reported_r_squared"] is None


class TestCliBehavior:
    def test_version_embeds_asset_hashes(self):
        result = run(["--version"])
        assert "panodent" in result.output
        assert result.output.count("sha256:") == 3

    def test_dry_run_writes_nothing(self, workspace, tmp_path):
        out = tmp_path / "corpus.jsonl"
        result = run(["--dry-run", "parse-reports", "--reports", str(workspace / "reports"),
                      "--out", str(out)])
        assert not out.exists()
        plan = json.loads(result.output)
        assert plan["command"] == "parse-reports"

    def test_validation_error_exit_code_one(self, workspace, tmp_path):
        runner = CliRunner()
        result = runner.invoke(
            cli,
            ["split", "--specs", str(workspace / "specs.jsonl"),
             "--ratios", "0.5,0.5,0.5", "--out", str(tmp_path / "s.jsonl")],
        )
        assert result.exit_code != 0

    def test_main_maps_validation_errors(self, workspace, tmp_path, monkeypatch, capsys):
        import panodent.cli as cli_module

        monkeypatch.setattr(
            "sys.argv",
            ["panodent", "split", "--specs", str(workspace / "specs.jsonl"),
             "--ratios", "0.5,0.5,0.5", "--out", str(tmp_path / "s.jsonl")],
        )
        with pytest.raises(SystemExit) as excinfo:
            cli_module.main()
        assert excinfo.value.code == 1
        error = json.loads(capsys.readouterr().err)
        assert error["error"] == "BadRatios"

    def test_main_maps_runtime_errors(self, workspace, tmp_path, monkeypatch, capsys):
        import panodent.cli as cli_module

        # predictions referencing no shared items -> EmptyCounts at runtime
        empty_preds = tmp_path / "none.jsonl"
        write_jsonl(
            [{"image_id": "GHOST", "fdi": 36, "condition_index": 1,
              "probability": 0.9, "prediction": 1}],
            empty_preds,
        )
        monkeypatch.setattr(
            "sys.argv",
            ["panodent", "evaluate", "--predictions", str(empty_preds),
             "--labels", str(workspace / "labels.jsonl"),
             "--vocab", str(workspace / "vocab.json"),
             "--out", str(tmp_path / "eval.json")],
        )
        with pytest.raises(SystemExit) as excinfo:
            cli_module.main()
        assert excinfo.value.code == 2

    def test_consensus_eval_command(self, workspace, tmp_path, vocabulary):
        from random import Random

        from panodent.study import AnnotationRecord, write_annotations

        rng = Random(4)
        items = [(f"IMG{i:03d}", 36) for i in range(24)]
        truth = {}
        for index, item in enumerate(items):
            labels = [0] * vocabulary.size
            labels[index % 5] = 1
            truth[item] = labels
        records = []
        for group, prefix, noise in (("expert", "expert", 0.05), ("student", "student", 0.2)):
            for i in range(1, 6):
                for item in items:
                    labels = [
                        bit if rng.random() >= noise else 1 - bit for bit in truth[item]
                    ]
                    records.append(
                        AnnotationRecord(f"{prefix}{i}", group, item[0], item[1], tuple(labels))
                    )
        annotations_path = tmp_path / "annotations.jsonl"
        write_annotations(records, annotations_path)
        vocab_path = tmp_path / "vocab.json"
        vocabulary.save(vocab_path)
        out_dir = tmp_path / "consensus"
        run(["consensus-eval", "--annotations", str(annotations_path),
             "--vocab", str(vocab_path), "--out-dir", str(out_dir)])
        for name in ("rater_scores.csv", "group_means.csv", "per_condition.csv",
                     "kappa_trend.json", "group_bars.png"):
            assert (out_dir / name).exists(), name
        scores = (out_dir / "rater_scores.csv").read_text().splitlines()
        assert len(scores) == 11  # header + 10 raters
        means = dict(
            line.split(",") for line in (out_dir / "group_means.csv").read_text().splitlines()[1:]
        )
        assert float(means["expert"]) > float(means["student"])

    def test_kappa_command(self, workspace, tmp_path, vocabulary):
        from panodent.study import AnnotationRecord, write_annotations

        items = [(f"IMG{i:03d}", 36) for i in range(6)]
        records = []
        for rater in ("expert1", "expert2", "expert3"):
            for index, item in enumerate(items):
                labels = [0] * vocabulary.size
                labels[index % 3] = 1
                records.append(
                    AnnotationRecord(rater, "expert", item[0], item[1], tuple(labels))
                )
        annotations_path = tmp_path / "annotations.jsonl"
        write_annotations(records, annotations_path)
        # reuse the bundled vocabulary file format
        vocab_path = tmp_path / "vocab.json"
        vocabulary.save(vocab_path)
        out = tmp_path / "kappa.csv"
        run(["kappa", "--annotations", str(annotations_path), "--vocab", str(vocab_path),
             "--out", str(out), "--json", str(tmp_path / "kappa.json")])
        lines = out.read_text().splitlines()
        assert lines[0] == "condition_index,name,kappa,degenerate"
        assert len(lines) == 14
        payload = json.loads((tmp_path / "kappa.json").read_text())
        assert payload["complete_raters"] == ["expert1", "expert2", "expert3"]
        by_index = {row["condition_index"]: row for row in payload["kappa"]}
        assert by_index[1]["kappa"] == pytest.approx(1.0)
        assert by_index[13]["degenerate"] is True
