"""Command-line entry point.

Subcommands compose through files (JSON / JSON Lines / CSV / PNG): each one
reads declared inputs, writes declared outputs atomically, and never
mutates its inputs. Reporting commands render a matplotlib figure next to
their delimited output. Exit codes: 0 success, 1 validation error,
2 runtime error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, figures, reference
from .config import PipelineConfig
from .crops import (
    SplitManifest,
    extract_crop,
    extract_window,
    load_segmentation_manifest,
    oversample_positives,
    plan_crops,
    split_dataset,
)
from .errors import ConfigError, ConfigurationError, PanodentError
from .fileio import read_jsonl, sha256_file, write_csv, write_json, write_jsonl
from .linkage import LabelMatrix, build_label_matrix
from .metrics import confusion_from_predictions, mcc, ols_fit
from .phrases import (
    PROMPT_ASSET,
    EndpointConfig,
    ExtractionCache,
    NounPhrase,
    RemoteExtractor,
    extract_corpus,
)
from .reports import ingest_corpus, read_corpus
from .study import (
    annotations_by_rater,
    group_average,
    leave_one_out_eval,
    per_condition_analysis,
    per_condition_mcc,
    read_annotations,
    sample_expert_set,
    trend_fits,
)
from .vocabulary import (
    ConditionVocabulary,
    build_vocabulary,
    count_phrases,
    load_allowlist,
    load_synonym_map,
)

ASSETS = Path(__file__).parent / "assets"


def _version_message() -> str:
    lines = [f"panodent {__version__}"]
    for asset in ("extraction_prompt.txt", "synonym_map.json", "allowlist.json"):
        lines.append(f"  asset {asset} sha256:{sha256_file(ASSETS / asset)[:12]}")
    return "\n".join(lines)


def _print_version(ctx, param, value):
    if not value or ctx.resilient_parsing:
        return
    click.echo(_version_message())
    ctx.exit()


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Pipeline config JSON; flags override it.")
@click.option("--dry-run", is_flag=True, help="Print the plan without writing outputs.")
@click.option("--version", is_flag=True, callback=_print_version, expose_value=False,
              is_eager=True, help="Show version and config-asset hashes.")
@click.pass_context
def cli(ctx, config_path, dry_run):
    """Labeling and evaluation pipeline for dental panoramic radiographs."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = PipelineConfig.load(config_path) if config_path else PipelineConfig()
    ctx.obj["dry_run"] = dry_run


def _plan(ctx, command: str, inputs: dict, outputs: dict) -> bool:
    """When --dry-run is set, print the plan and skip execution."""
    if ctx.obj.get("dry_run"):
        click.echo(json.dumps(
            {"command": command, "inputs": inputs, "outputs": outputs}, indent=2
        ))
        return True
    return False


def _load_vocabulary(path: str) -> ConditionVocabulary:
    return ConditionVocabulary.load(path)


def _predictions_to_vectors(rows, n_conditions: int) -> dict[tuple[str, int], tuple[int, ...]]:
    """Group prediction rows into per-item hard label vectors."""
    vectors: dict[tuple[str, int], list[int]] = {}
    for row in rows:
        item = (row["image_id"], row["fdi"])
        vectors.setdefault(item, [0] * n_conditions)[row["condition_index"] - 1] = int(
            row["prediction"]
        )
    return {item: tuple(bits) for item, bits in vectors.items()}


# --- corpus ------------------------------------------------------------------


@cli.command("synthesize")
@click.option("--out-dir", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--reports", "n_reports", type=int, default=50)
@click.option("--seed", type=int, default=0)
@click.pass_context
def synthesize(ctx, out_dir, n_reports, seed):
    """Generate a synthetic corpus, segmentation manifest, and radiographs
    (the real dataset is private; demos and offline tests run on these)."""
    from .synthetic import generate_corpus, generate_images, generate_segmentation_manifest
    from .vocabulary import default_vocabulary

    if _plan(ctx, "synthesize", {"reports": n_reports, "seed": seed}, {"out_dir": out_dir}):
        return
    out_dir = Path(out_dir)
    vocabulary = default_vocabulary()
    manifest = generate_corpus(out_dir / "reports", vocabulary, n_reports=n_reports, seed=seed)
    write_json(manifest, out_dir / "corpus_manifest.json")
    reports = ingest_corpus(out_dir / "reports", manifest=manifest)
    segmentation = generate_segmentation_manifest(
        reports, out_dir / "segmentation.json", seed=seed
    )
    generate_images(segmentation, out_dir / "images", seed=seed)
    click.echo(f"{n_reports} reports, segmentation manifest, and images -> {out_dir}")


@cli.command("parse-reports")
@click.option("--reports", "reports_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON mapping report_id -> image_id.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--exclude-pattern", "patterns", multiple=True,
              help="Presence-sentence regex (repeatable); defaults built in.")
@click.pass_context
def parse_reports(ctx, reports_dir, manifest_path, out_path, patterns):
    """Parse a directory of .txt reports into a corpus JSONL."""
    if _plan(ctx, "parse-reports",
             {"reports": reports_dir, "manifest": manifest_path},
             {"corpus": out_path}):
        return
    manifest = None
    if manifest_path:
        manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    kwargs = {"exclusion_patterns": list(patterns)} if patterns else {}
    reports = ingest_corpus(reports_dir, manifest=manifest, **kwargs)
    write_jsonl((r.to_dict() for r in reports), out_path)
    click.echo(f"parsed {len(reports)} reports -> {out_path}")


@cli.command("extract-phrases")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--strategy", type=click.Choice(["rules", "remote", "remote-then-rules"]),
              default=None, help="Extractor strategy; config default is 'rules'.")
@click.option("--cache", "cache_path", type=click.Path(dir_okay=False), default=None)
@click.option("--base-url", default=None, help="Chat-completion endpoint base URL.")
@click.option("--model", default=None)
@click.option("--per-sentence", is_flag=True,
              help="One remote request per sentence instead of per report.")
@click.pass_context
def extract_phrases(ctx, corpus_path, out_path, strategy, cache_path, base_url, model,
                    per_sentence):
    """Extract noun phrases for every non-excluded corpus line."""
    settings = ctx.obj["config"].extraction
    strategy = strategy or settings.strategy
    cache_path = cache_path or settings.cache_path
    if _plan(ctx, "extract-phrases",
             {"corpus": corpus_path, "strategy": strategy, "cache": cache_path},
             {"phrases": out_path}):
        return
    remote = None
    resolved_url = base_url or settings.base_url
    if strategy in ("remote", "remote-then-rules"):
        if not resolved_url:
            raise ConfigError(f"strategy {strategy!r} needs --base-url or config extraction.base_url")
        remote = RemoteExtractor(
            EndpointConfig(
                base_url=resolved_url,
                model=model or settings.model or "gpt-4",
                api_key_env=settings.api_key_env,
                timeout=settings.timeout,
                max_concurrent=settings.max_concurrent,
            )
        )
    reports = read_corpus(corpus_path)
    cache = ExtractionCache(cache_path)
    extracted = extract_corpus(reports, strategy, cache, remote, per_sentence=per_sentence)
    rows = [
        {
            "report_id": report_id,
            "topic_number": topic,
            "phrases": [p.to_dict() for p in phrases],
        }
        for (report_id, topic), phrases in sorted(extracted.items())
    ]
    write_jsonl(rows, out_path)
    click.echo(f"extracted phrases for {len(rows)} lines -> {out_path}")


def _load_phrase_rows(path) -> dict[tuple[str, int], list[NounPhrase]]:
    return {
        (row["report_id"], row["topic_number"]): [
            NounPhrase.from_dict(p) for p in row["phrases"]
        ]
        for row in read_jsonl(path)
    }


@cli.command("build-vocab")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--phrases", "phrases_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--min-count", type=int, default=None, help="Strict frequency threshold.")
@click.option("--synonyms", "synonyms_path", type=click.Path(exists=True), default=None)
@click.option("--allowlist", "allowlist_path", type=click.Path(exists=True), default=None)
@click.option("--freq-csv", "freq_csv", type=click.Path(dir_okay=False), default=None)
@click.option("--figure", "figure_path", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def build_vocab(ctx, corpus_path, phrases_path, out_path, min_count, synonyms_path,
                allowlist_path, freq_csv, figure_path):
    """Count phrases, apply the threshold and allowlist, write the vocabulary."""
    settings = ctx.obj["config"].vocabulary
    min_count = settings.min_count if min_count is None else min_count
    if _plan(ctx, "build-vocab",
             {"corpus": corpus_path, "phrases": phrases_path, "min_count": min_count},
             {"vocabulary": out_path, "freq_csv": freq_csv, "figure": figure_path}):
        return
    synonym_map = load_synonym_map(synonyms_path or settings.synonym_map_path)
    allowlist = load_allowlist(allowlist_path or settings.allowlist_path)
    reports = read_corpus(corpus_path)
    phrase_rows = _load_phrase_rows(phrases_path)
    pairs = [
        (line, phrase_rows.get((report.report_id, line.topic_number), []))
        for report in reports
        for line in report.lines
    ]
    counts = count_phrases(pairs, synonym_map)
    vocabulary = build_vocabulary(counts, min_count=min_count, allowlist=allowlist,
                                  synonym_map=synonym_map)
    vocabulary.save(out_path)
    if freq_csv:
        retained = set(vocabulary.names())
        rows = [
            (name, count, int(name in retained))
            for name, count in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        ]
        write_csv(rows, ["phrase", "count", "retained"], freq_csv)
    if figure_path:
        figures.plot_frequency_bars(counts, set(vocabulary.names()), figure_path)
    click.echo(f"vocabulary of {vocabulary.size} conditions -> {out_path}")


@cli.command("link-labels")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--phrases", "phrases_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--segmentation", "segmentation_path", type=click.Path(exists=True), default=None,
              help="Segmentation manifest; segmented teeth get all-zero records.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--summary", "summary_path", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def link_labels(ctx, corpus_path, phrases_path, vocab_path, segmentation_path, out_path,
                summary_path):
    """Apply the tooth-condition linkage and write the label matrix."""
    if _plan(ctx, "link-labels",
             {"corpus": corpus_path, "phrases": phrases_path, "vocab": vocab_path,
              "segmentation": segmentation_path},
             {"labels": out_path, "summary": summary_path}):
        return
    vocabulary = _load_vocabulary(vocab_path)
    reports = read_corpus(corpus_path)
    phrase_rows = _load_phrase_rows(phrases_path)
    segmented = None
    if segmentation_path:
        threshold = ctx.obj["config"].crops.score_threshold
        instances, _ = load_segmentation_manifest(segmentation_path, threshold)
        segmented = {}
        for instance in instances:
            segmented.setdefault(instance.image_id, []).append(instance.tooth)
    matrix = build_label_matrix(
        reports, vocabulary, phrase_rows, segmented_teeth=segmented,
        provenance={"corpus": str(corpus_path), "phrases": str(phrases_path)},
    )
    matrix.save(out_path, summary_path)
    click.echo(f"{len(matrix.records)} label records -> {out_path}")


# --- crops -------------------------------------------------------------------


@cli.command("ingest-segmentation")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--threshold", type=float, default=None, help="Detection score threshold.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def ingest_segmentation(ctx, manifest_path, threshold, out_path):
    """Filter a segmentation manifest into a tooth-instance JSONL."""
    threshold = ctx.obj["config"].crops.score_threshold if threshold is None else threshold
    if _plan(ctx, "ingest-segmentation",
             {"manifest": manifest_path, "threshold": threshold},
             {"instances": out_path}):
        return
    instances, dimensions = load_segmentation_manifest(manifest_path, threshold)
    header = {"dimensions": {k: list(v) for k, v in dimensions.items()},
              "score_threshold": threshold}
    write_jsonl([header] + [i.to_dict() for i in instances], out_path)
    click.echo(f"{len(instances)} instances -> {out_path}")


@cli.command("make-crops")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--images", "images_dir", required=True, type=click.Path(file_okay=False))
@click.option("--out-dir", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--specs", "specs_path", required=True, type=click.Path(dir_okay=False))
@click.option("--kinds", default="less,more", help="Comma-separated: less,more.")
@click.option("--human-dir", "human_dir", type=click.Path(file_okay=False), default=None,
              help="Also write unresized more-context windows for human viewing.")
@click.option("--threshold", type=float, default=None)
@click.pass_context
def make_crops(ctx, manifest_path, images_dir, out_dir, specs_path, kinds, human_dir, threshold):
    """Extract tooth crops as PNGs and write the crop-spec JSONL."""
    from PIL import Image

    threshold = ctx.obj["config"].crops.score_threshold if threshold is None else threshold
    kind_list = [k.strip() for k in kinds.split(",") if k.strip()]
    if _plan(ctx, "make-crops",
             {"manifest": manifest_path, "images": images_dir, "kinds": kind_list},
             {"crops": out_dir, "specs": specs_path, "human": human_dir}):
        return
    instances, dimensions = load_segmentation_manifest(manifest_path, threshold)
    specs = plan_crops(instances, dimensions, kinds=kind_list)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if human_dir:
        Path(human_dir).mkdir(parents=True, exist_ok=True)

    rasters = {}
    for image_id in sorted(dimensions):
        path = Path(images_dir) / f"{image_id}.png"
        rasters[image_id] = np.asarray(Image.open(path).convert("L"))
    for spec in specs:
        crop = extract_crop(rasters[spec.image_id], spec)
        name = spec.crop_id.replace(":", "_") + ".png"
        Image.fromarray(crop, mode="L").save(out_dir / name)
        if human_dir and spec.kind == "more":
            window = extract_window(rasters[spec.image_id], spec)
            Image.fromarray(window, mode="L").save(
                Path(human_dir) / f"{spec.image_id}_{spec.tooth.code}.png"
            )
    write_jsonl((s.to_dict() for s in specs), specs_path)
    click.echo(f"{len(specs)} crops -> {out_dir}")


@cli.command("split")
@click.option("--specs", "specs_path", required=True, type=click.Path(exists=True))
@click.option("--ratios", default=None, help="train,val,test fractions; default 0.7,0.15,0.15.")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def split(ctx, specs_path, ratios, seed, out_path):
    """Assign crops to train/val/test at the image level."""
    settings = ctx.obj["config"].crops
    ratio_tuple = (
        tuple(float(r) for r in ratios.split(",")) if ratios else settings.ratios
    )
    seed = settings.seed if seed is None else seed
    if _plan(ctx, "split", {"specs": specs_path, "ratios": list(ratio_tuple), "seed": seed},
             {"split": out_path}):
        return
    from .crops import CropSpec

    specs = [CropSpec.from_dict(row) for row in read_jsonl(specs_path)]
    manifest = split_dataset(specs, ratios=ratio_tuple, seed=seed)
    manifest.save(out_path)
    sizes = {name: len(entries) for name, entries in manifest.by_split().items()}
    click.echo(f"split {sizes} -> {out_path}")


@cli.command("oversample")
@click.option("--split", "split_path", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--condition", "condition_index", required=True, type=int)
@click.option("--factor", type=int, default=None)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def oversample(ctx, split_path, labels_path, vocab_path, condition_index, factor, out_path):
    """Repeat train-split positives of one condition in the split manifest."""
    factor = ctx.obj["config"].crops.oversample_factor if factor is None else factor
    if _plan(ctx, "oversample",
             {"split": split_path, "labels": labels_path, "condition": condition_index,
              "factor": factor},
             {"split": out_path}):
        return
    vocabulary = _load_vocabulary(vocab_path)
    manifest = SplitManifest.load(split_path)
    labels = LabelMatrix.load(labels_path, vocabulary)
    oversampled = oversample_positives(manifest, labels, condition_index, factor)
    oversampled.save(out_path)
    click.echo(
        f"expanded train size {oversampled.expanded_size()} "
        f"(was {len(manifest.entries)}) -> {out_path}"
    )


# --- evaluation --------------------------------------------------------------


@cli.command("evaluate")
@click.option("--predictions", "predictions_path", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def evaluate(ctx, predictions_path, labels_path, vocab_path, out_path, csv_path):
    """Per-condition confusion counts and MCC of a prediction file."""
    if _plan(ctx, "evaluate",
             {"predictions": predictions_path, "labels": labels_path},
             {"report": out_path, "csv": csv_path}):
        return
    vocabulary = _load_vocabulary(vocab_path)
    labels = LabelMatrix.load(labels_path, vocabulary)
    truth = {(r.image_id, r.tooth.code): r.labels for r in labels.records}
    predicted = _predictions_to_vectors(read_jsonl(predictions_path), vocabulary.size)

    items = sorted(set(truth) & set(predicted))
    per_condition = []
    for condition in vocabulary.conditions:
        index = condition.index
        pred = [predicted[item][index - 1] for item in items]
        actual = [truth[item][index - 1] for item in items]
        counts = confusion_from_predictions(pred, actual)
        per_condition.append(
            {
                "condition_index": index,
                "name": condition.name,
                "tp": counts.tp,
                "fp": counts.fp,
                "fn": counts.fn,
                "tn": counts.tn,
                "mcc": mcc(counts),
            }
        )
    report = {
        "n_items": len(items),
        "per_condition": per_condition,
        "average_mcc": float(np.mean([row["mcc"] for row in per_condition])),
    }
    write_json(report, out_path)
    if csv_path:
        write_csv(
            [
                (r["condition_index"], r["name"], int(r["tp"]), int(r["fp"]),
                 int(r["fn"]), int(r["tn"]), f"{r['mcc']:.6f}")
                for r in per_condition
            ],
            ["condition_index", "name", "tp", "fp", "fn", "tn", "mcc"],
            csv_path,
        )
    click.echo(f"average MCC {report['average_mcc']:.4f} over {len(items)} items -> {out_path}")


@cli.command("kappa")
@click.option("--annotations", "annotations_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--json", "json_path", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def kappa_command(ctx, annotations_path, vocab_path, out_path, json_path):
    """Per-condition Fleiss' kappa over raters who completed all items."""
    from .metrics import AgreementTable, fleiss_kappa
    from .errors import DegenerateAgreement

    if _plan(ctx, "kappa", {"annotations": annotations_path}, {"csv": out_path}):
        return
    vocabulary = _load_vocabulary(vocab_path)
    by_rater = annotations_by_rater(read_annotations(annotations_path))
    items = sorted({item for labels in by_rater.values() for item in labels})
    complete = sorted(r for r, labels in by_rater.items() if len(labels) == len(items))
    rows = []
    for condition in vocabulary.conditions:
        value, degenerate = None, False
        if len(complete) >= 2:
            votes = [
                sum(by_rater[r][item][condition.index - 1] for r in complete) for item in items
            ]
            try:
                value = fleiss_kappa(
                    AgreementTable.from_binary_votes(votes, n_raters=len(complete))
                )
            except DegenerateAgreement:
                degenerate = True
        rows.append((condition.index, condition.name,
                     "" if value is None else f"{value:.6f}", int(degenerate)))
    write_csv(rows, ["condition_index", "name", "kappa", "degenerate"], out_path)
    if json_path:
        write_json(
            {
                "complete_raters": complete,
                "n_items": len(items),
                "kappa": [
                    {"condition_index": idx, "name": name,
                     "kappa": (None if value == "" else float(value)),
                     "degenerate": bool(flag)}
                    for idx, name, value, flag in rows
                ],
            },
            json_path,
        )
    click.echo(f"kappa over {len(complete)} complete raters -> {out_path}")


REFERENCE_TRENDS = ("frequency", "kappa", "kappa+frequency")


@cli.command("fit-trend")
@click.option("--reference", "reference_kind", type=click.Choice(REFERENCE_TRENDS), default=None,
              help="Fit one of the bundled reference tables.")
@click.option("--data", "data_path", type=click.Path(exists=True), default=None,
              help="CSV with regressor/response columns (alternative to --reference).")
@click.option("--x", "x_cols", multiple=True, help="Regressor column name(s) for --data.")
@click.option("--y", "y_col", default=None, help="Response column name for --data.")
@click.option("--out-dir", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--prefix", default="trend")
@click.pass_context
def fit_trend(ctx, reference_kind, data_path, x_cols, y_col, out_dir, prefix):
    """OLS trend fit; writes CSV + JSON + scatter figure."""
    import csv as csv_module

    if reference_kind is None and data_path is None:
        reference_kind = "frequency"
    if _plan(ctx, "fit-trend",
             {"reference": reference_kind, "data": data_path},
             {"out_dir": out_dir, "prefix": prefix}):
        return

    reported = None
    if reference_kind is not None:
        reported_map = reference.reported_r_squared()
        if reference_kind == "frequency":
            x_values, y_values = reference.frequency_and_test_mcc()
            X = np.array(x_values).reshape(-1, 1)
            columns = ["frequency"]
            y_name = "test_mcc"
            reported = reported_map["frequency_vs_test_mcc"]
        else:
            freq, kappa_values, model_mcc = reference.expert_set_table()
            y_values = model_mcc
            y_name = "model_mcc"
            if reference_kind == "kappa":
                X = np.array(kappa_values).reshape(-1, 1)
                columns = ["kappa"]
                reported = reported_map["kappa_vs_model_mcc"]
            else:
                X = np.column_stack([kappa_values, freq])
                columns = ["kappa", "frequency"]
                reported = reported_map["kappa_and_frequency_vs_model_mcc"]
        labels = [str(i) for i in range(1, len(y_values) + 1)]
    else:
        if not x_cols or not y_col:
            raise ConfigError("--data requires --x column(s) and --y column")
        with open(data_path, encoding="utf-8") as handle:
            rows = list(csv_module.DictReader(handle))
        try:
            X = np.array([[float(row[c]) for c in x_cols] for row in rows])
            y_values = [float(row[y_col]) for row in rows]
        except KeyError as exc:
            raise ConfigError(f"column {exc} not in {data_path}") from exc
        columns = list(x_cols)
        y_name = y_col
        labels = [str(i) for i in range(1, len(rows) + 1)]

    y = np.array(y_values)
    fit = ols_fit(X, y)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    fitted = fit.fitted
    csv_rows = [
        (labels[i], *[f"{X[i, j]:.6g}" for j in range(X.shape[1])],
         f"{y[i]:.6f}", f"{fitted[i]:.6f}", f"{y[i] - fitted[i]:.6f}")
        for i in range(len(y))
    ]
    write_csv(csv_rows, ["point", *columns, y_name, "fitted", "residual"],
              out_dir / f"{prefix}.csv")

    summary = {
        "regressors": columns,
        "response": y_name,
        "n_points": int(len(y)),
        "coefficients": fit.coefficients.tolist(),
        "computed_r_squared": fit.r_squared,
        "reported_r_squared": reported,
    }
    if reported is not None and abs(fit.r_squared - reported) > 0.01:
        summary["note"] = (
            "computed R^2 differs from the reported value; the reference rows "
            "are printed at 3 decimals, so exact agreement is not forced"
        )
    write_json(summary, out_dir / f"{prefix}.json")

    if X.shape[1] == 1:
        figures.plot_trend(X[:, 0], y, fit, out_dir / f"{prefix}.png",
                           xlabel=columns[0], ylabel=y_name, point_labels=labels)
    else:
        figures.plot_two_regressor_fit(X[:, 0], X[:, 1], y, fit, out_dir / f"{prefix}.png",
                                       xlabel=columns[0])
    click.echo(
        f"R^2 = {fit.r_squared:.4f}"
        + (f" (reported {reported})" if reported is not None else "")
        + f" -> {out_dir / (prefix + '.json')}"
    )


# --- expert study ------------------------------------------------------------


@cli.command("sample-expert-set")
@click.option("--predictions", "predictions_path", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--per-stratum", type=int, default=2, help="Items per TP/FP/FN stratum.")
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def sample_expert_set_command(ctx, predictions_path, labels_path, vocab_path, per_stratum,
                              seed, out_path):
    """Draw the stratified TP/FP/FN expert-study items."""
    if _plan(ctx, "sample-expert-set",
             {"predictions": predictions_path, "labels": labels_path, "seed": seed},
             {"expert_set": out_path}):
        return
    vocabulary = _load_vocabulary(vocab_path)
    labels = LabelMatrix.load(labels_path, vocabulary)
    truth = {(r.image_id, r.tooth.code): r.labels for r in labels.records}
    predicted = _predictions_to_vectors(read_jsonl(predictions_path), vocabulary.size)
    dataset = sample_expert_set(
        predicted, truth, n_conditions=vocabulary.size,
        per_condition={"TP": per_stratum, "FP": per_stratum, "FN": per_stratum},
        seed=seed,
    )
    dataset.save(out_path)
    click.echo(f"{len(dataset.items)} expert-set items -> {out_path}")


@cli.command("consensus-eval")
@click.option("--annotations", "annotations_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--model-predictions", "model_path", type=click.Path(exists=True), default=None)
@click.option("--report-labels", "report_labels_path", type=click.Path(exists=True), default=None,
              help="Label matrix for the initial report-ground-truth scoring.")
@click.option("--tie-policy", type=click.Choice(["negative", "positive"]), default="negative")
@click.option("--out-dir", "out_dir", required=True, type=click.Path(file_okay=False))
@click.pass_context
def consensus_eval(ctx, annotations_path, vocab_path, model_path, report_labels_path,
                   tie_policy, out_dir):
    """Consensus ground truth, leave-one-out expert scores, group means,
    per-condition agreement table, and the kappa trend fits."""
    if _plan(ctx, "consensus-eval",
             {"annotations": annotations_path, "model": model_path},
             {"out_dir": out_dir}):
        return
    vocabulary = _load_vocabulary(vocab_path)
    records = read_annotations(annotations_path)
    by_rater = annotations_by_rater(records)
    rater_groups = {r.rater_id: r.group for r in records}

    experts = {r: labels for r, labels in by_rater.items() if rater_groups[r] == "expert"}
    others = {
        r: (rater_groups[r], labels)
        for r, labels in by_rater.items()
        if rater_groups[r] != "expert"
    }
    if model_path:
        model_vectors = _predictions_to_vectors(read_jsonl(model_path), vocabulary.size)
        others["model"] = ("model", model_vectors)

    evaluation = leave_one_out_eval(
        experts, n_conditions=vocabulary.size, others=others, tie_policy=tie_policy
    )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    scores = evaluation.all_scores()
    write_csv(
        [(s.rater_id, s.group, f"{s.average:.6f}") for s in scores],
        ["rater_id", "group", "average_mcc"],
        out_dir / "rater_scores.csv",
    )
    means = group_average(
        {s.rater_id: s.average for s in scores}, {s.rater_id: s.group for s in scores}
    )
    write_csv(
        [(group, f"{value:.6f}") for group, value in means.items()],
        ["group", "average_mcc"],
        out_dir / "group_means.csv",
    )

    if report_labels_path:
        labels = LabelMatrix.load(report_labels_path, vocabulary)
        truth = {(r.image_id, r.tooth.code): r.labels for r in labels.records}
        initial = []
        for rater_id, rated in sorted(by_rater.items()):
            shared = {item: rated[item] for item in rated if item in truth}
            per_cond = per_condition_mcc(shared, truth, vocabulary.size)
            initial.append((rater_id, rater_groups[rater_id], float(np.mean(per_cond))))
        if model_path:
            shared = {it: v for it, v in model_vectors.items() if it in truth}
            per_cond = per_condition_mcc(shared, truth, vocabulary.size)
            initial.append(("model", "model", float(np.mean(per_cond))))
        write_csv(
            [(r, g, f"{v:.6f}") for r, g, v in initial],
            ["rater_id", "group", "average_mcc"],
            out_dir / "initial_scores.csv",
        )
        initial_means = group_average(
            {r: v for r, _, v in initial}, {r: g for r, g, _ in initial}
        )
        write_csv(
            [(group, f"{value:.6f}") for group, value in initial_means.items()],
            ["group", "average_mcc"],
            out_dir / "initial_group_means.csv",
        )

    predictions_by_group: dict[str, dict[str, dict]] = {"expert": experts}
    for rater_id, (group, vectors) in others.items():
        predictions_by_group.setdefault(group, {})[rater_id] = vectors
    rows = per_condition_analysis(
        evaluation.consensus, predictions_by_group, experts, n_conditions=vocabulary.size
    )
    groups = sorted(predictions_by_group)
    header = ["condition_index", "name", "positive_frequency", "kappa", "degenerate"]
    for group in groups:
        header += [f"{group}_mean_mcc", f"{group}_pooled_mcc"]
    csv_rows = []
    for row in rows:
        entry = [
            row.condition_index,
            vocabulary.condition(row.condition_index).name,
            row.positive_frequency,
            "" if row.kappa is None else f"{row.kappa:.6f}",
            int(row.kappa_degenerate),
        ]
        for group in groups:
            cell = row.mcc_by_group.get(group, {"per_rater_mean": 0.0, "pooled": 0.0})
            entry += [f"{cell['per_rater_mean']:.6f}", f"{cell['pooled']:.6f}"]
        csv_rows.append(tuple(entry))
    write_csv(csv_rows, header, out_dir / "per_condition.csv")

    trend_group = "model" if "model" in predictions_by_group else groups[0]
    trend_summary = {"group": trend_group}
    try:
        trend_summary.update(trend_fits(rows, group=trend_group))
        trend_summary["reported_r_squared"] = reference.reported_r_squared()
    except PanodentError as exc:
        trend_summary["fit_error"] = str(exc)
    write_json(trend_summary, out_dir / "kappa_trend.json")

    usable = [r for r in rows if r.kappa is not None]
    if "kappa_r_squared" in trend_summary and len(usable) >= 3:
        kappa_values = [r.kappa for r in usable]
        target = [r.mcc_by_group[trend_group]["pooled"] for r in usable]
        fit = ols_fit(np.array(kappa_values).reshape(-1, 1), np.array(target))
        figures.plot_trend(kappa_values, target, fit, out_dir / "kappa_trend.png",
                           xlabel="Fleiss' kappa", ylabel=f"{trend_group} MCC",
                           point_labels=[str(r.condition_index) for r in usable])
    figures.plot_group_bars(
        {
            row.condition_index: {
                group: row.mcc_by_group[group]["per_rater_mean"] for group in groups
            }
            for row in rows
        },
        out_dir / "group_bars.png",
    )
    click.echo(f"consensus evaluation -> {out_dir}")


# --- service -----------------------------------------------------------------


@cli.command("serve")
@click.option("--expert-set", "expert_set_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--crops-dir", "crops_dir", required=True, type=click.Path(file_okay=False))
@click.option("--log", "log_path", required=True, type=click.Path(dir_okay=False))
@click.option("--raters", "raters_path", type=click.Path(exists=True), default=None,
              help="JSON list of {id, group}; defaults to config service.raters.")
@click.option("--ui-dir", "ui_dir", type=click.Path(file_okay=False), default=None)
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_context
def serve(ctx, expert_set_path, vocab_path, crops_dir, log_path, raters_path, ui_dir,
          host, port):
    """Run the live annotation service."""
    import uvicorn

    from .service import ServiceConfig, create_app
    from .study import ExpertImageDataset

    settings = ctx.obj["config"].service
    raters = settings.raters
    if raters_path:
        raters = json.loads(Path(raters_path).read_text(encoding="utf-8"))
    if not raters:
        raise ConfigError("no raters provisioned; supply --raters or config service.raters")
    if _plan(ctx, "serve", {"expert_set": expert_set_path, "raters": len(raters)},
             {"log": log_path}):
        return
    app = create_app(
        ServiceConfig(
            dataset=ExpertImageDataset.load(expert_set_path),
            vocabulary=_load_vocabulary(vocab_path),
            crops_dir=Path(crops_dir),
            log_path=Path(log_path),
            raters=raters,
            cors_origin=settings.cors_origin,
            ui_dir=Path(ui_dir) if ui_dir else None,
        )
    )
    uvicorn.run(app, host=host or settings.host, port=port or settings.port)


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except ConfigurationError as exc:
        click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
        sys.exit(1)
    except PanodentError as exc:
        click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()
