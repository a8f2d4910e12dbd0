"""HTTP annotation service for the rater study.

Raters step through their seeded permutation of the expert-set items, see
the unresized more-context crop for each one, and submit a condition bit
vector (all-zero means "none"). Every submission is appended to a JSON
Lines log; the latest record per (rater, crop) wins, so resubmission is
idempotent and the whole state is rebuildable from the log alone.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from random import Random

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse
from pydantic import BaseModel

from .errors import CacheCorrupt, DegenerateAgreement
from .metrics import AgreementTable, fleiss_kappa
from .study import AnnotationRecord, ExpertImageDataset
from .vocabulary import ConditionVocabulary

DEFAULT_SESSION_SEED = 1729


def crop_id_for(image_id: str, fdi: int) -> str:
    return f"{image_id}_{fdi}"


@dataclass
class ServiceConfig:
    dataset: ExpertImageDataset
    vocabulary: ConditionVocabulary
    crops_dir: Path
    log_path: Path
    raters: list[dict]  # [{"id": ..., "group": ...}]
    cors_origin: str = "*"
    ui_dir: Path | None = None
    session_seed: int = DEFAULT_SESSION_SEED


class AnnotationStore:
    """Append-only annotation log with a derived current-state index."""

    def __init__(self, log_path: Path):
        self.log_path = Path(log_path)
        self._lock = threading.Lock()
        # (rater_id, crop_id) -> stored row; replaying the log rebuilds this
        self.current: dict[tuple[str, str], dict] = {}
        if self.log_path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self.log_path, encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                    key = (row["rater_id"], row["crop_id"])
                except (ValueError, KeyError) as exc:
                    raise CacheCorrupt(
                        f"{self.log_path}:{line_number}: unreadable annotation entry: {exc}"
                    ) from exc
                self.current[key] = row

    def append(self, row: dict) -> dict:
        with self._lock:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.log_path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(row) + "\n")
            self.current[(row["rater_id"], row["crop_id"])] = row
        return row

    def labeled_crops(self, rater_id: str) -> set[str]:
        return {crop for rater, crop in self.current if rater == rater_id}


class AnnotationBody(BaseModel):
    rater: str
    crop_id: str
    labels: list[int]


def create_app(config: ServiceConfig) -> FastAPI:
    if config.vocabulary.size == 0:
        raise ValueError("vocabulary is empty; refusing to start")
    app = FastAPI(title="panodent annotation service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[config.cors_origin],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    raters = {entry["id"]: entry.get("group", "expert") for entry in config.raters}
    items = config.dataset.items
    crop_ids = [crop_id_for(entry.image_id, entry.fdi) for entry in items]
    crop_index = {
        crop_id_for(entry.image_id, entry.fdi): entry for entry in items
    }
    store = AnnotationStore(config.log_path)

    # each rater sees every item exactly once, in a seeded per-rater order
    def session_order(rater_id: str) -> list[str]:
        order = list(dict.fromkeys(crop_ids))
        Random(f"{config.session_seed}:{rater_id}").shuffle(order)
        return order

    def require_rater(rater_id: str) -> str:
        if rater_id not in raters:
            raise HTTPException(status_code=404, detail=f"unknown rater {rater_id!r}")
        return rater_id

    @app.get("/conditions")
    def conditions():
        return [
            {"index": condition.index, "name": condition.name}
            for condition in config.vocabulary.conditions
        ]

    @app.get("/tasks/next")
    def next_task(rater: str):
        require_rater(rater)
        done = store.labeled_crops(rater)
        order = session_order(rater)
        total = len(order)
        for crop_id in order:
            if crop_id not in done:
                return {
                    "done": False,
                    "crop_id": crop_id,
                    "image_url": f"/crops/{crop_id}.png",
                    "progress": {"done": len(done & set(order)), "total": total},
                }
        return {"done": True, "count": total}

    @app.post("/annotations")
    def submit(body: AnnotationBody):
        require_rater(body.rater)
        entry = crop_index.get(body.crop_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown crop {body.crop_id!r}")
        if len(body.labels) != config.vocabulary.size:
            raise HTTPException(
                status_code=422,
                detail=f"label vector length {len(body.labels)} != {config.vocabulary.size}",
            )
        if any(bit not in (0, 1) for bit in body.labels):
            raise HTTPException(status_code=422, detail="labels must be 0/1")
        record = AnnotationRecord(
            rater_id=body.rater,
            group=raters[body.rater],
            image_id=entry.image_id,
            fdi=entry.fdi,
            labels=tuple(body.labels),
        )
        row = record.to_dict()
        row["crop_id"] = body.crop_id
        row["timestamp"] = time.time()
        return {"stored": store.append(row)}

    @app.get("/agreement")
    def agreement():
        total = len(set(crop_ids))
        completion = {
            rater_id: len(store.labeled_crops(rater_id)) for rater_id in sorted(raters)
        }
        complete = [r for r, count in completion.items() if count == total]
        response: dict = {"completion": completion, "total_items": total,
                          "complete_raters": complete}
        if len(complete) >= 2:
            unique_crops = sorted(set(crop_ids))
            per_condition = []
            for condition in config.vocabulary.conditions:
                votes = [
                    sum(
                        store.current[(r, crop)]["labels"][condition.index - 1]
                        for r in complete
                    )
                    for crop in unique_crops
                ]
                table = AgreementTable.from_binary_votes(votes, n_raters=len(complete))
                try:
                    value = fleiss_kappa(table)
                    per_condition.append(
                        {"condition_index": condition.index, "name": condition.name,
                         "kappa": value, "degenerate": False}
                    )
                except DegenerateAgreement:
                    per_condition.append(
                        {"condition_index": condition.index, "name": condition.name,
                         "kappa": None, "degenerate": True}
                    )
            response["kappa"] = per_condition
        return response

    @app.get("/crops/{crop_id}.png")
    def crop_image(crop_id: str):
        if crop_id not in crop_index:
            raise HTTPException(status_code=404, detail=f"unknown crop {crop_id!r}")
        path = config.crops_dir / f"{crop_id}.png"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"crop raster missing for {crop_id!r}")
        return FileResponse(path, media_type="image/png")

    if config.ui_dir is not None and Path(config.ui_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=config.ui_dir, html=True), name="ui")

    return app
