"""Tooth crop geometry, extraction, and split/oversampling manifests.

Crops come in two flavors: "less context" copies a 224x224 window centered
on the tooth; "more context" takes a 380x380 window and downsamples it to
224x224 (bilinear, for reproducibility). Windows are clamped to stay fully
inside the image rather than padded, so border crops keep real pixels at
the cost of some center deviation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from random import Random
from typing import Iterable, Mapping, Sequence

import numpy as np
from PIL import Image

from .errors import (
    BadRatios,
    DimensionMismatch,
    ImageTooSmall,
    ManifestParseError,
    MissingImageDimensions,
    UnknownCondition,
)
from .fdi import FdiTooth
from .linkage import LabelMatrix

LESS_CONTEXT_SIDE = 224
MORE_CONTEXT_SIDE = 380
OUTPUT_SIDE = 224
DEFAULT_SCORE_THRESHOLD = 0.5
DEFAULT_RATIOS = (0.70, 0.15, 0.15)
SPLIT_NAMES = ("train", "val", "test")
DEFAULT_OVERSAMPLE_FACTOR = 10


def polygon_centroid(points: Sequence[Sequence[float]]) -> tuple[float, float]:
    """Area-weighted centroid of a simple polygon (mean of vertices if degenerate)."""
    xs = np.asarray([p[0] for p in points], dtype=float)
    ys = np.asarray([p[1] for p in points], dtype=float)
    x_next = np.roll(xs, -1)
    y_next = np.roll(ys, -1)
    cross = xs * y_next - x_next * ys
    area = cross.sum() / 2.0
    if abs(area) < 1e-9:
        return float(xs.mean()), float(ys.mean())
    cx = float(np.sum((xs + x_next) * cross) / (6.0 * area))
    cy = float(np.sum((ys + y_next) * cross) / (6.0 * area))
    return cx, cy


@dataclass(frozen=True)
class ToothInstance:
    """One segmented tooth: location, confidence, and image of origin."""

    image_id: str
    tooth: FdiTooth
    score: float
    bbox: tuple[float, float, float, float]
    centroid: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "fdi": self.tooth.code,
            "score": self.score,
            "bbox": list(self.bbox),
            "centroid": list(self.centroid),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ToothInstance":
        return cls(
            image_id=data["image_id"],
            tooth=FdiTooth(data["fdi"]),
            score=data["score"],
            bbox=tuple(data["bbox"]),
            centroid=tuple(data["centroid"]),
        )


def load_segmentation_manifest(
    path: str | Path,
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
) -> tuple[list[ToothInstance], dict[str, tuple[int, int]]]:
    """Load tooth instances from a segmentation manifest.

    Returns the kept instances plus {image_id: (width, height)}. Instances
    below the detection threshold are dropped; duplicate (image, tooth)
    detections keep the highest score; labeled ground-truth entries without
    a score count as 1.0.
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ManifestParseError(f"cannot parse segmentation manifest {path}: {exc}") from exc
    if not isinstance(data, dict) or "images" not in data:
        raise ManifestParseError(f"{path}: expected a top-level 'images' list")

    best: dict[tuple[str, int], ToothInstance] = {}
    dimensions: dict[str, tuple[int, int]] = {}
    for image in data["images"]:
        try:
            image_id = image["image_id"]
        except (TypeError, KeyError) as exc:
            raise ManifestParseError(f"{path}: image entry lacks image_id") from exc
        if "width" not in image or "height" not in image:
            raise MissingImageDimensions(f"{path}: image {image_id} lacks width/height")
        width, height = int(image["width"]), int(image["height"])
        dimensions[image_id] = (width, height)
        for raw in image.get("instances", []):
            try:
                tooth = FdiTooth(int(raw["fdi"]))
                x, y, w, h = (float(v) for v in raw["bbox"])
            except (TypeError, KeyError, ValueError) as exc:
                raise ManifestParseError(
                    f"{path}: bad instance in image {image_id}: {exc}"
                ) from exc
            score = float(raw.get("score", 1.0))
            if not 0.0 <= score <= 1.0:
                raise ManifestParseError(
                    f"{path}: score {score} outside [0, 1] for tooth {tooth} in {image_id}"
                )
            if not (0 <= x and 0 <= y and x + w <= width and y + h <= height):
                raise ManifestParseError(
                    f"{path}: bbox {x, y, w, h} outside image {image_id} ({width}x{height})"
                )
            if score < score_threshold:
                continue
            if "polygon" in raw and raw["polygon"]:
                centroid = polygon_centroid(raw["polygon"])
            else:
                centroid = (x + w / 2.0, y + h / 2.0)
            instance = ToothInstance(
                image_id=image_id, tooth=tooth, score=score, bbox=(x, y, w, h), centroid=centroid
            )
            key = (image_id, tooth.code)
            if key not in best or score > best[key].score:
                best[key] = instance
    instances = [best[key] for key in sorted(best)]
    return instances, dimensions


@dataclass(frozen=True)
class CropSpec:
    """A planned crop window; always resolves to a 224x224 output."""

    image_id: str
    tooth: FdiTooth
    origin: tuple[int, int]
    window_side: int
    kind: str  # "less" | "more"
    output_side: int = OUTPUT_SIDE

    @property
    def crop_id(self) -> str:
        return f"{self.image_id}:{self.tooth.code}:{self.kind}"

    def to_dict(self) -> dict:
        return {
            "crop_id": self.crop_id,
            "image_id": self.image_id,
            "fdi": self.tooth.code,
            "origin": list(self.origin),
            "window_side": self.window_side,
            "kind": self.kind,
            "output_side": self.output_side,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CropSpec":
        return cls(
            image_id=data["image_id"],
            tooth=FdiTooth(data["fdi"]),
            origin=tuple(data["origin"]),
            window_side=data["window_side"],
            kind=data["kind"],
            output_side=data["output_side"],
        )


def window_origin(
    centroid: tuple[float, float],
    window_side: int,
    image_dims: tuple[int, int],
) -> tuple[int, int]:
    """Top-left corner of a window centered on the tooth, clamped in-bounds."""
    width, height = image_dims
    if width < window_side or height < window_side:
        raise ImageTooSmall(
            f"image {width}x{height} cannot hold a {window_side}x{window_side} window"
        )
    x0 = int(round(centroid[0] - window_side / 2.0))
    y0 = int(round(centroid[1] - window_side / 2.0))
    x0 = min(max(x0, 0), width - window_side)
    y0 = min(max(y0, 0), height - window_side)
    return x0, y0


def crop_window(
    instance: ToothInstance,
    kind: str,
    image_dims: tuple[int, int],
) -> CropSpec:
    """Plan the crop window for one tooth instance."""
    if kind not in ("less", "more"):
        raise ValueError(f"kind must be 'less' or 'more', got {kind!r}")
    side = LESS_CONTEXT_SIDE if kind == "less" else MORE_CONTEXT_SIDE
    return CropSpec(
        image_id=instance.image_id,
        tooth=instance.tooth,
        origin=window_origin(instance.centroid, side, image_dims),
        window_side=side,
        kind=kind,
    )


def extract_window(image: np.ndarray, spec: CropSpec) -> np.ndarray:
    """The raw window pixels (no resizing); used for human-facing crops."""
    height, width = image.shape[:2]
    x0, y0 = spec.origin
    if x0 + spec.window_side > width or y0 + spec.window_side > height:
        raise DimensionMismatch(
            f"window {spec.crop_id} at {spec.origin} side {spec.window_side} "
            f"does not fit a {width}x{height} raster"
        )
    return image[y0 : y0 + spec.window_side, x0 : x0 + spec.window_side].copy()


def extract_crop(image: np.ndarray, spec: CropSpec) -> np.ndarray:
    """Extract the model-facing crop: direct copy or bilinear downsample."""
    window = extract_window(image, spec)
    if spec.window_side == spec.output_side:
        return window
    resized = Image.fromarray(window).resize(
        (spec.output_side, spec.output_side), Image.BILINEAR
    )
    return np.asarray(resized)


def plan_crops(
    instances: Iterable[ToothInstance],
    dimensions: Mapping[str, tuple[int, int]],
    kinds: Sequence[str] = ("less", "more"),
) -> list[CropSpec]:
    specs = []
    for instance in instances:
        dims = dimensions[instance.image_id]
        for kind in kinds:
            specs.append(crop_window(instance, kind, dims))
    return specs


# --- split and oversampling manifests ---------------------------------------


@dataclass(frozen=True)
class SplitEntry:
    crop_id: str
    image_id: str
    fdi: int
    split: str
    repetition: int = 1

    def to_dict(self) -> dict:
        return {
            "crop_id": self.crop_id,
            "image_id": self.image_id,
            "fdi": self.fdi,
            "split": self.split,
            "repetition": self.repetition,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SplitEntry":
        return cls(data["crop_id"], data["image_id"], data["fdi"], data["split"], data["repetition"])


@dataclass
class SplitManifest:
    entries: list[SplitEntry]
    seed: int
    ratios: tuple[float, float, float]

    def by_split(self) -> dict[str, list[SplitEntry]]:
        groups: dict[str, list[SplitEntry]] = {name: [] for name in SPLIT_NAMES}
        for entry in self.entries:
            groups[entry.split].append(entry)
        return groups

    def expanded_size(self) -> int:
        return sum(entry.repetition for entry in self.entries)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(json.dumps({"seed": self.seed, "ratios": list(self.ratios)}) + "\n")
            for entry in self.entries:
                handle.write(json.dumps(entry.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SplitManifest":
        with open(path, encoding="utf-8") as handle:
            header = json.loads(handle.readline())
            entries = [SplitEntry.from_dict(json.loads(line)) for line in handle if line.strip()]
        return cls(entries=entries, seed=header["seed"], ratios=tuple(header["ratios"]))


def _allocate(n_images: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder allocation; each count within 1 of ratio * n."""
    raw = [r * n_images for r in ratios]
    counts = [int(v) for v in raw]
    remainders = sorted(
        range(len(ratios)), key=lambda i: (raw[i] - counts[i], -i), reverse=True
    )
    for i in range(n_images - sum(counts)):
        counts[remainders[i]] += 1
    return counts


def split_dataset(
    crops: Sequence[CropSpec],
    ratios: Sequence[float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> SplitManifest:
    """Assign crops to train/val/test by seeded shuffle at the image level.

    All crops of one radiograph share a split so a patient's teeth never
    leak across splits.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios must be three positive values summing to 1, got {ratios}")

    images = sorted({crop.image_id for crop in crops})
    rng = Random(seed)
    rng.shuffle(images)
    counts = _allocate(len(images), ratios)
    assignment: dict[str, str] = {}
    cursor = 0
    for split_name, count in zip(SPLIT_NAMES, counts):
        for image_id in images[cursor : cursor + count]:
            assignment[image_id] = split_name
        cursor += count

    entries = [
        SplitEntry(
            crop_id=crop.crop_id,
            image_id=crop.image_id,
            fdi=crop.tooth.code,
            split=assignment[crop.image_id],
        )
        for crop in crops
    ]
    return SplitManifest(entries=entries, seed=seed, ratios=ratios)


def oversample_positives(
    manifest: SplitManifest,
    labels: LabelMatrix,
    condition_index: int,
    factor: int = DEFAULT_OVERSAMPLE_FACTOR,
) -> SplitManifest:
    """Repeat train-split crops positive for one condition ``factor`` times.

    Validation and test entries always keep repetition 1.
    """
    if not 1 <= condition_index <= labels.vocabulary.size:
        raise UnknownCondition(
            f"condition index {condition_index} outside 1..{labels.vocabulary.size}"
        )
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    by_key = labels.by_key()
    entries = []
    for entry in manifest.entries:
        record = by_key.get((entry.image_id, entry.fdi))
        positive = record is not None and record.labels[condition_index - 1] == 1
        repetition = factor if (positive and entry.split == "train") else 1
        entries.append(replace(entry, repetition=repetition))
    return SplitManifest(entries=entries, seed=manifest.seed, ratios=manifest.ratios)
