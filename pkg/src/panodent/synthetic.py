"""Synthetic fixtures: report corpora, segmentation manifests, radiographs.

The real radiograph/report dataset is private, so demos and the offline
test suite run on generated stand-ins. Report sentences follow the corpus
style (numbered topics, FDI digits, condition phrases) and are built from
templates the rule-based extractor handles, so the full pipeline links
them without a network call.
"""

from __future__ import annotations

import json
import zlib
from pathlib import Path
from random import Random

import numpy as np
from PIL import Image

from .linkage import LabelMatrix
from .vocabulary import ConditionVocabulary

IMAGE_SIZE = (640, 480)  # small but still larger than the widest crop window

PERMANENT_TEETH = [q * 10 + p for q in range(1, 5) for p in range(1, 9)]

NOISE_SENTENCES = [
    "Calcification of the right and left stylohyoid ligament complex.",
    "Anatomical modification of the mandible condyle.",
    "Mild bone loss in the region of the present teeth.",
]

PRESENCE_SENTENCES = [
    "Missing teeth: 18 and 28.",
    "Absence of tooth 48.",
]

# wording variants per canonical condition; resolvable through the synonym map
VARIANTS = {
    "unfilled root canals": ["unfilled root canals", "partially filled root canals"],
    "included and impacted": ["included and impacted"],
}


def generate_corpus(
    out_dir: str | Path,
    vocabulary: ConditionVocabulary,
    n_reports: int = 50,
    seed: int = 0,
    lines_per_report: tuple[int, int] = (3, 6),
) -> dict[str, str]:
    """Write ``n_reports`` synthetic .txt reports; returns report->image map.

    Conditions are assigned round-robin so every condition accumulates
    positives even in small corpora.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = Random(seed)
    manifest = {}
    condition_cursor = 0
    for report_index in range(n_reports):
        report_id = f"R{report_index:04d}"
        image_id = f"IMG{report_index:04d}"
        manifest[report_id] = image_id
        teeth_pool = rng.sample(PERMANENT_TEETH, k=10)
        lines = []
        topic = 0
        for _ in range(rng.randint(*lines_per_report)):
            topic += 1
            roll = rng.random()
            if roll < 0.15:
                lines.append(f"{topic:02d}: {rng.choice(NOISE_SENTENCES)}")
            elif roll < 0.25:
                lines.append(f"{topic:02d}: {rng.choice(PRESENCE_SENTENCES)}")
            else:
                condition = vocabulary.conditions[condition_cursor % vocabulary.size]
                condition_cursor += 1
                surface = rng.choice(VARIANTS.get(condition.name, [condition.name]))
                if rng.random() < 0.5:
                    tooth = rng.choice(teeth_pool)
                    lines.append(f"{topic:02d}: Tooth {tooth}: {surface}.")
                else:
                    first, second = rng.sample(teeth_pool, k=2)
                    lines.append(f"{topic:02d}: Teeth {first} and {second}: {surface}.")
        (out_dir / f"{report_id}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def generate_segmentation_manifest(
    reports,
    path: str | Path,
    seed: int = 0,
    extra_teeth: int = 4,
    image_size: tuple[int, int] = IMAGE_SIZE,
) -> dict:
    """Segmentation manifest covering every mentioned tooth plus extras.

    Teeth from non-excluded report lines always get a confident instance so
    labeled teeth have crops; extra teeth provide implicit negatives. A few
    low-score detections exercise the threshold filter.
    """
    rng = Random(seed)
    width, height = image_size
    images = []
    for report in reports:
        mentioned = {
            tooth.code
            for line in report.lines
            if not line.excluded
            for tooth in line.teeth
        }
        extras = [c for c in rng.sample(PERMANENT_TEETH, k=len(PERMANENT_TEETH)) if c not in mentioned]
        instances = []
        for code in sorted(mentioned) + extras[:extra_teeth]:
            w = rng.randint(50, 70)
            h = rng.randint(80, 100)
            x = rng.randint(0, width - w - 1)
            y = rng.randint(0, height - h - 1)
            instances.append(
                {"image_id": report.image_id, "fdi": code, "score": round(rng.uniform(0.55, 0.99), 3),
                 "bbox": [x, y, w, h]}
            )
        # sub-threshold detection that the loader must drop
        if extras[extra_teeth:]:
            code = extras[extra_teeth]
            instances.append(
                {"image_id": report.image_id, "fdi": code, "score": 0.2, "bbox": [10, 10, 40, 60]}
            )
        images.append(
            {
                "image_id": report.image_id,
                "width": width,
                "height": height,
                "instances": [
                    {k: v for k, v in inst.items() if k != "image_id"} for inst in instances
                ],
            }
        )
    data = {"images": images}
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    return data


def generate_images(
    manifest: dict,
    images_dir: str | Path,
    seed: int = 0,
) -> list[Path]:
    """Deterministic grayscale PNG per manifest image (smooth gradient + noise)."""
    images_dir = Path(images_dir)
    images_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for entry in manifest["images"]:
        width, height = entry["width"], entry["height"]
        rng = np.random.RandomState(seed + zlib.crc32(entry["image_id"].encode()) % 10_000)
        yy, xx = np.mgrid[0:height, 0:width]
        gradient = (xx / max(width - 1, 1) * 160 + yy / max(height - 1, 1) * 60).astype(np.float64)
        noise = rng.normal(0, 12, size=(height, width))
        pixels = np.clip(gradient + noise + 20, 0, 255).astype(np.uint8)
        path = images_dir / f"{entry['image_id']}.png"
        Image.fromarray(pixels, mode="L").save(path)
        paths.append(path)
    return paths


def study_predictions(
    matrix: LabelMatrix,
    per_stratum: int = 3,
    seed: int = 0,
) -> list[dict]:
    """Predictions that guarantee populated TP/FP/FN strata per condition.

    Starting from perfect predictions, flips ``per_stratum`` positives to
    misses (FN) and ``per_stratum`` negatives to false alarms (FP) for each
    condition, never reusing an item for two conditions' flips.
    """
    rng = Random(seed)
    truth = matrix.by_key()
    predicted = {key: list(record.labels) for key, record in truth.items()}
    used: set = set()
    for index in range(1, matrix.vocabulary.size + 1):
        positives = [k for k in sorted(truth) if truth[k].labels[index - 1] == 1 and k not in used]
        negatives = [k for k in sorted(truth) if truth[k].labels[index - 1] == 0 and k not in used]
        if len(positives) < 2 * per_stratum or len(negatives) < per_stratum:
            raise ValueError(
                f"condition {index} too sparse for study predictions "
                f"({len(positives)} positives, {len(negatives)} negatives)"
            )
        for key in rng.sample(positives, per_stratum):
            predicted[key][index - 1] = 0
            used.add(key)
        for key in rng.sample(negatives, per_stratum):
            predicted[key][index - 1] = 1
            used.add(key)
    rows = []
    for (image_id, fdi), bits in sorted(predicted.items()):
        for index, value in enumerate(bits, start=1):
            rows.append(
                {
                    "image_id": image_id,
                    "fdi": fdi,
                    "condition_index": index,
                    "probability": 0.9 if value else 0.1,
                    "prediction": value,
                }
            )
    return rows


def predictions_from_labels(
    matrix: LabelMatrix,
    flip_rate: float = 0.0,
    seed: int = 0,
) -> list[dict]:
    """Prediction rows mirroring a label matrix, optionally with label noise.

    Probabilities are 0.9/0.1 around the hard prediction so the rows also
    exercise probability-based metrics.
    """
    rng = Random(seed)
    rows = []
    for record in matrix.records:
        for index, bit in enumerate(record.labels, start=1):
            value = bit
            if flip_rate > 0 and rng.random() < flip_rate:
                value = 1 - value
            rows.append(
                {
                    "image_id": record.image_id,
                    "fdi": record.tooth.code,
                    "condition_index": index,
                    "probability": 0.9 if value else 0.1,
                    "prediction": value,
                }
            )
    return rows
