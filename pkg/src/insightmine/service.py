"""Annotation and calibration HTTP service.

Serves scored (verbatim, image) pairs for labelling, appends annotations to
a single append-only JSONL log (writes serialized through one lock), and
exposes live agreement and threshold-curve views computed by the same code
paths as the offline CLI, so the two stay byte-identical on equal labels.
"""

from __future__ import annotations

import itertools
import json
import os
import threading
import time
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import calibration as cal
from .corpus import load_corpus, load_pairs
from .pipeline import PipelineConfig, Workdir

GUIDELINES = [
    "Object relevance: an object discussed in the text appears in the image in any form.",
    "OCR relevance: an entity discussed in the text is shown as text inside the image.",
    "Semantic relevance: the information in the text is contextually represented in the image.",
]


class LabelBody(BaseModel):
    pair_id: str
    annotator: str = Field(min_length=1)
    label: str
    guideline_tag: Optional[str] = None
    overwrite: bool = False


class PolicyBody(BaseModel):
    kind: str
    value: Optional[float] = None
    grid: Optional[str] = None


def create_app(workdir: str | Path, config: PipelineConfig | None = None) -> FastAPI:
    wd = Workdir(workdir)
    cfg = config or PipelineConfig(workdir=str(workdir))
    app = FastAPI(title="insightmine annotation service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    pairs = {p.pair_id: p for p in load_pairs(wd.path("scored_pairs.jsonl"))}
    reviews = {r.review_id: r for r in load_corpus(wd.path("corpus.jsonl"))}
    categories = {rid: r.category for rid, r in reviews.items()}
    total_categories = len(set(categories.values()))
    sample_path = wd.path("sample.json")
    if sample_path.exists():
        with open(sample_path, "r", encoding="utf-8") as fh:
            queue_ids = [pid for pid in json.load(fh)["pair_ids"] if pid in pairs]
    else:
        queue_ids = list(pairs)
    log_path = wd.path("annotations.jsonl")
    write_lock = threading.Lock()

    def annotations() -> list[cal.AnnotationRecord]:
        return cal.load_annotations(log_path)

    def two_way_conflicts(records) -> list[str]:
        votes: dict[str, set[str]] = {}
        for (pair_id, _), rec in cal.latest_by_annotator(records).items():
            votes.setdefault(pair_id, set()).add(rec.label)
        resolved = cal.resolve_annotations(records)
        return sorted(p for p, labs in votes.items() if len(labs) > 1 and p not in resolved)

    @app.get("/api/health")
    def health():
        return {"status": "ok", "pairs": len(pairs), "queue": len(queue_ids)}

    @app.get("/api/pairs/next")
    def next_pair(annotator: str, conflicts: bool = False):
        records = annotations()
        seen = {pid for (pid, who) in cal.latest_by_annotator(records) if who == annotator}
        candidates = two_way_conflicts(records) if conflicts else queue_ids
        for pair_id in candidates:
            if pair_id in seen:
                continue
            p = pairs[pair_id]
            remaining = sum(1 for q in candidates if q not in seen)
            return {
                "pair_id": p.pair_id,
                "verbatim": p.verbatim,
                "review_id": p.review_id,
                "category": categories.get(p.review_id, ""),
                "score": p.score,
                "image_url": f"/api/images/{p.image_path}",
                "guidelines": GUIDELINES,
                "remaining": remaining,
            }
        return {"pair_id": None, "remaining": 0}

    @app.get("/api/images/{path:path}")
    def image(path: str):
        full = wd.path(path)
        if not full.is_file() or full.suffix != ".ppm":
            raise HTTPException(status_code=404, detail=f"no image at {path}")
        return Response(content=full.read_bytes(), media_type="image/x-portable-pixmap")

    @app.post("/api/labels")
    def post_label(body: LabelBody):
        if body.label not in (cal.RELEVANT, cal.NOT_RELEVANT):
            raise HTTPException(400, f"label must be {cal.RELEVANT} or {cal.NOT_RELEVANT}")
        if body.guideline_tag is not None and body.guideline_tag not in cal.GUIDELINE_TAGS:
            raise HTTPException(400, f"guideline_tag must be one of {cal.GUIDELINE_TAGS}")
        if body.pair_id not in pairs:
            raise HTTPException(400, f"unknown pair_id {body.pair_id!r}")
        with write_lock:
            existing = cal.latest_by_annotator(annotations())
            if (body.pair_id, body.annotator) in existing and not body.overwrite:
                raise HTTPException(
                    409, f"{body.annotator} already labelled {body.pair_id}; pass overwrite"
                )
            record = cal.AnnotationRecord(
                pair_id=body.pair_id,
                annotator_id=body.annotator,
                label=body.label,
                guideline_tag=body.guideline_tag,
                timestamp=time.time(),
            )
            cal.append_annotations([record], log_path)
        return {"ok": True, "pair_id": body.pair_id, "annotator": body.annotator}

    @app.get("/api/agreement")
    def agreement():
        records = annotations()
        annotators = sorted({r.annotator_id for r in records})
        best = None
        for a, b in itertools.combinations(annotators, 2):
            view = cal.latest_by_annotator(records)
            common = {p for (p, w) in view if w == a} & {p for (p, w) in view if w == b}
            if common and (best is None or len(common) > best[2]):
                best = (a, b, len(common))
        if best is None:
            return {"kappa": None, "annotators": annotators, "conflicts": [],
                    "co_annotated": 0}
        kappa = cal.cohens_kappa(records, best[0], best[1])
        return {
            "kappa": kappa,
            "annotators": [best[0], best[1]],
            "co_annotated": best[2],
            "conflicts": two_way_conflicts(records),
        }

    def curve_points(grid: str):
        records = annotations()
        resolved = cal.resolve_annotations(records)
        scored = cal.pairs_to_scored(list(pairs.values()), resolved, categories)
        return cal.sweep_thresholds(scored, cal.parse_grid(grid), total_categories)

    @app.get("/api/curves")
    def curves(grid: str = Query(default=None), format: str = "json"):
        points = curve_points(grid or cfg.grid)
        if format == "csv":
            return Response(content=cal.curve_csv_text(points), media_type="text/csv")
        return {"points": [p.to_json() for p in points]}

    @app.post("/api/threshold")
    def set_threshold(body: PolicyBody):
        policy = cal.SelectionPolicy(kind=body.kind, value=body.value)
        points = curve_points(body.grid or cfg.grid)
        try:
            threshold = cal.select_threshold(points, policy)
        except cal.CalibrationError as e:
            raise HTTPException(400, str(e))
        with open(wd.path("threshold.json"), "w", encoding="utf-8") as fh:
            json.dump({"format_version": 1, "threshold": threshold,
                       "policy": policy.to_json()}, fh, sort_keys=True)
        return {"threshold": threshold, "policy": policy.to_json()}

    ui_dist = Path(
        os.environ.get("MINE_UI_DIST", Path(__file__).resolve().parents[2] / "frontend" / "dist")
    )
    if ui_dist.is_dir():
        app.mount("/", StaticFiles(directory=ui_dist, html=True), name="ui")

    return app
