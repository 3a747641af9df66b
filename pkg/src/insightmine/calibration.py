"""Human-in-the-loop threshold calibration.

Stratified sampling over (verbatim cluster, product category) cells, an
append-only annotation log with two-annotator resolution and third-annotator
conflict breaking, Cohen's kappa, threshold sweeps producing
precision/recall/F1/category-coverage curves, and selection policies.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .corpus import PairRecord
from .matcher import ClusterAssignment

RELEVANT = "relevant"
NOT_RELEVANT = "not_relevant"
GUIDELINE_TAGS = ("object", "ocr", "semantic")


class CalibrationError(ValueError):
    pass


@dataclass
class AnnotationRecord:
    pair_id: str
    annotator_id: str
    label: str  # relevant | not_relevant
    guideline_tag: Optional[str] = None  # object | ocr | semantic
    timestamp: float = 0.0

    def to_json(self) -> dict:
        d = {
            "pair_id": self.pair_id,
            "annotator_id": self.annotator_id,
            "label": self.label,
            "timestamp": self.timestamp,
        }
        if self.guideline_tag is not None:
            d["guideline_tag"] = self.guideline_tag
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "AnnotationRecord":
        return cls(
            pair_id=obj["pair_id"],
            annotator_id=obj["annotator_id"],
            label=obj["label"],
            guideline_tag=obj.get("guideline_tag"),
            timestamp=float(obj.get("timestamp", 0.0)),
        )


def append_annotations(records: Iterable[AnnotationRecord], path: str | Path) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json()) + "\n")


def load_annotations(path: str | Path) -> list[AnnotationRecord]:
    out = []
    p = Path(path)
    if not p.exists():
        return out
    with open(p, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(AnnotationRecord.from_json(json.loads(line)))
    return out


def latest_by_annotator(records: Sequence[AnnotationRecord]) -> dict[tuple[str, str], AnnotationRecord]:
    """Last-write-wins view keyed by (pair_id, annotator_id); log order breaks ties."""
    view: dict[tuple[str, str], AnnotationRecord] = {}
    for r in records:
        view[(r.pair_id, r.annotator_id)] = r
    return view


def resolve_annotations(records: Sequence[AnnotationRecord]) -> dict[str, str]:
    """pair_id -> resolved label.

    Two agreeing annotators resolve directly; a 2-way conflict is settled by
    a strict majority once a third annotator weighs in; anything else stays
    unresolved and is dropped from downstream curves.
    """
    votes: dict[str, list[str]] = {}
    for (pair_id, _), rec in latest_by_annotator(records).items():
        votes.setdefault(pair_id, []).append(rec.label)
    resolved: dict[str, str] = {}
    for pair_id, labels in votes.items():
        if len(labels) < 2:
            continue
        counts = {lab: labels.count(lab) for lab in set(labels)}
        best = max(counts.values())
        winners = [lab for lab, c in counts.items() if c == best]
        if len(winners) == 1 and best > len(labels) - best:
            resolved[pair_id] = winners[0]
    return resolved


def cohens_kappa(records: Sequence[AnnotationRecord], annotator_a: str, annotator_b: str) -> float:
    """Chance-corrected agreement over the pairs both annotators labelled."""
    view = latest_by_annotator(records)
    a_labels: dict[str, str] = {}
    b_labels: dict[str, str] = {}
    for (pair_id, annot), rec in view.items():
        if annot == annotator_a:
            a_labels[pair_id] = rec.label
        elif annot == annotator_b:
            b_labels[pair_id] = rec.label
    common = sorted(set(a_labels) & set(b_labels))
    if not common:
        raise CalibrationError("no co-annotated pairs")
    n = len(common)
    agree = sum(1 for p in common if a_labels[p] == b_labels[p])
    p_o = agree / n
    labels = (RELEVANT, NOT_RELEVANT)
    p_e = sum(
        (sum(1 for p in common if a_labels[p] == lab) / n)
        * (sum(1 for p in common if b_labels[p] == lab) / n)
        for lab in labels
    )
    if p_e >= 1.0:
        return 1.0  # degenerate single-label marginals imply perfect agreement
    return (p_o - p_e) / (1.0 - p_e)


def kappa_from_table(table: Sequence[Sequence[int]]) -> float:
    """Kappa straight from a 2x2 agreement table [[both_rel, a_rel_b_not], ...]."""
    t = np.asarray(table, dtype=float)
    n = t.sum()
    p_o = np.trace(t) / n
    p_e = float(sum(t[i, :].sum() * t[:, i].sum() for i in range(t.shape[0])) / n**2)
    if p_e >= 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


# ---------------------------------------------------------------------------
# stratified sampling
# ---------------------------------------------------------------------------


def stratified_sample(
    clusters: ClusterAssignment,
    categories: dict[str, str],
    total_categories: int,
    k: int,
    seed: int,
) -> list[str]:
    """Fixed-size subsample from every (cluster, category) cell.

    For each cluster c and each category d present in it, draws
    min(floor(k / total_categories), |cell|) verbatims uniformly without
    replacement. The per-cell quota deliberately ignores the cluster count,
    so the union size grows with clusters x categories.
    """
    if k < 0:
        raise CalibrationError("sample size must be >= 0")
    if total_categories < 1:
        raise CalibrationError("need at least one category")
    rng = np.random.default_rng(seed)
    quota = k // total_categories
    sample: list[str] = []
    for cid in sorted(clusters.members):
        cells: dict[str, list[str]] = {}
        for vid in clusters.members[cid]:
            cells.setdefault(categories[vid], []).append(vid)
        for cat in sorted(cells):
            cell = sorted(cells[cat])
            take = min(quota, len(cell))
            if take:
                picks = rng.choice(len(cell), size=take, replace=False)
                sample.extend(cell[i] for i in sorted(picks))
    return sample


# ---------------------------------------------------------------------------
# threshold curves
# ---------------------------------------------------------------------------


@dataclass
class ThresholdCurvePoint:
    threshold: float
    precision: float
    recall: float
    f1: float
    coverage: float
    tp: int = 0
    fp: int = 0
    fn: int = 0
    flags: list[str] = field(default_factory=list)

    @classmethod
    def from_counts(
        cls, threshold: float, tp: int, fp: int, fn: int, coverage: float
    ) -> "ThresholdCurvePoint":
        flags = []
        if tp + fp == 0:
            precision = 0.0
            flags.append("no_predicted_positives")
        else:
            precision = tp / (tp + fp)
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls(threshold, precision, recall, f1, coverage, tp, fp, fn, flags)

    def to_json(self) -> dict:
        return {
            "threshold": self.threshold,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "coverage": self.coverage,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "flags": self.flags,
        }


def sweep_thresholds(
    scored: Sequence[tuple[float, bool, str]],
    grid: Sequence[float],
    total_categories: int | None = None,
) -> list[ThresholdCurvePoint]:
    """Curve points over `grid` for (score, gold_is_relevant, category) triples.

    Predicted-positive means score >= threshold; coverage is the fraction of
    all categories keeping at least one predicted-positive pair.
    """
    grid = list(grid)
    if any(b >= a for a, b in zip(grid[1:], grid[:-1])):
        raise CalibrationError("grid must be strictly increasing")
    cats = sorted({c for _, _, c in scored})
    n_cats = total_categories if total_categories is not None else max(1, len(cats))
    points = []
    for t in grid:
        tp = fp = fn = 0
        covered: set[str] = set()
        for score, gold, cat in scored:
            predicted = score >= t
            if predicted:
                covered.add(cat)
                if gold:
                    tp += 1
                else:
                    fp += 1
            elif gold:
                fn += 1
        points.append(
            ThresholdCurvePoint.from_counts(t, tp, fp, fn, len(covered) / n_cats)
        )
    return points


def pairs_to_scored(
    pairs: Sequence[PairRecord],
    gold: dict[str, str],
    categories: dict[str, str],
) -> list[tuple[float, bool, str]]:
    """Join scored pairs with resolved labels; unresolved pairs are excluded."""
    out = []
    for p in pairs:
        if p.pair_id not in gold:
            continue
        out.append((p.score, gold[p.pair_id] == RELEVANT, categories.get(p.review_id, "")))
    return out


CURVE_CSV_HEADER = ["threshold", "precision", "recall", "f1", "coverage", "tp", "fp", "fn"]


def curve_csv_text(points: Sequence[ThresholdCurvePoint]) -> str:
    rows = [",".join(CURVE_CSV_HEADER)]
    for p in points:
        rows.append(
            f"{p.threshold:.6g},{p.precision:.6g},{p.recall:.6g},"
            f"{p.f1:.6g},{p.coverage:.6g},{p.tp},{p.fp},{p.fn}"
        )
    return "\n".join(rows) + "\n"


def write_curve_csv(points: Sequence[ThresholdCurvePoint], path: str | Path) -> None:
    # shares the exact serialization with the HTTP service's CSV view
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(curve_csv_text(points))


# ---------------------------------------------------------------------------
# selection policies
# ---------------------------------------------------------------------------


@dataclass
class SelectionPolicy:
    kind: str  # precision_floor | max_f1 | fixed
    value: float | None = None  # p_min for precision_floor, t for fixed

    @classmethod
    def from_json(cls, obj: dict) -> "SelectionPolicy":
        return cls(kind=obj["kind"], value=obj.get("value"))

    def to_json(self) -> dict:
        return {"kind": self.kind, "value": self.value}


def select_threshold(points: Sequence[ThresholdCurvePoint], policy: SelectionPolicy) -> float:
    """Resolve a policy to a unique threshold; ties prefer the higher threshold."""
    if not points:
        raise CalibrationError("empty curve")
    if policy.kind == "fixed":
        if policy.value is None:
            raise CalibrationError("fixed policy needs a threshold value")
        return float(policy.value)
    if policy.kind == "precision_floor":
        if policy.value is None:
            raise CalibrationError("precision_floor policy needs a minimum precision")
        eligible = [p for p in sorted(points, key=lambda p: p.threshold) if p.precision >= policy.value]
        if not eligible:
            best = max(p.precision for p in points)
            raise CalibrationError(
                f"precision floor {policy.value} unattainable; max achieved precision {best:.4f}"
            )
        return eligible[0].threshold
    if policy.kind == "max_f1":
        best = max(points, key=lambda p: (p.f1, p.threshold))
        return best.threshold
    raise CalibrationError(f"unknown policy kind {policy.kind!r}")


def parse_grid(spec: str | Sequence[float]) -> list[float]:
    """Grid from 'start:stop:step' or a comma list; endpoints inclusive."""
    if not isinstance(spec, str):
        return [float(x) for x in spec]
    if ":" in spec:
        start_s, stop_s, step_s = spec.split(":")
        start, stop, step = float(start_s), float(stop_s), float(step_s)
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(n)]
    return [float(x) for x in spec.split(",") if x.strip()]


DEFAULT_GRID = parse_grid("0.19:0.31:0.01")
