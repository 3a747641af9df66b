"""Run-level metrics: completeness, correctness/precision, recall, F1.

Generated verbatims are matched to gold image-relevant verbatims under an
explicit policy (exact after normalization, or token-overlap F1 above a
threshold), with one-to-one greedy crediting so a repeated prediction cannot
inflate both precision and recall. Completeness is a substring proxy: a
prediction counts as complete when it occurs contiguously in its source
feedback and has at least two tokens.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import normalize_text, tokenize_text


@dataclass
class MatchPolicy:
    mode: str = "exact_normalized"  # exact_normalized | token_f1
    threshold: float = 0.8

    def __post_init__(self):
        if self.mode not in ("exact_normalized", "token_f1"):
            raise ValueError(f"unknown match mode {self.mode!r}")
        if self.mode == "token_f1" and not 0.0 < self.threshold <= 1.0:
            raise ValueError("token_f1 threshold must be in (0, 1]")

    def score(self, prediction: str, gold: str) -> float:
        a, b = normalize_text(prediction), normalize_text(gold)
        if self.mode == "exact_normalized":
            return 1.0 if a == b else 0.0
        ta, tb = tokenize_text(a), tokenize_text(b)
        if not ta or not tb:
            return 0.0
        overlap = 0
        remaining = list(tb)
        for tok in ta:
            if tok in remaining:
                remaining.remove(tok)
                overlap += 1
        f1 = 2 * overlap / (len(ta) + len(tb))
        return f1 if f1 >= self.threshold else 0.0


@dataclass
class ImageOutcome:
    """Predictions and gold for one (review, image) context."""

    review_id: str
    image_path: str
    category: str
    source_text: str
    predictions: list[str]
    gold_relevant: list[str]


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    completeness: float
    n_predictions: int
    n_correct: int
    n_gold: int
    n_complete: int
    per_category: dict[str, dict[str, float]] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "completeness": self.completeness,
            "counts": {
                "predictions": self.n_predictions,
                "correct": self.n_correct,
                "gold": self.n_gold,
                "complete": self.n_complete,
            },
            "per_category": self.per_category,
            "flags": self.flags,
        }


def greedy_assignment(
    predictions: Sequence[str], gold: Sequence[str], policy: MatchPolicy
) -> list[tuple[int, int, float]]:
    """One-to-one (prediction, gold) matches, best scores first."""
    scored = []
    for i, p in enumerate(predictions):
        for j, g in enumerate(gold):
            s = policy.score(p, g)
            if s > 0.0:
                scored.append((s, i, j))
    scored.sort(key=lambda x: (-x[0], x[1], x[2]))
    used_p: set[int] = set()
    used_g: set[int] = set()
    matches = []
    for s, i, j in scored:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        matches.append((i, j, s))
    return matches


def completeness(predictions: Sequence[str], source_texts: Sequence[str]) -> tuple[float, int, list[str]]:
    """Fraction of predictions occurring contiguously in their own source."""
    flags: list[str] = []
    if not predictions:
        return 0.0, 0, ["no_predictions"]
    n_complete = 0
    for pred, source in zip(predictions, source_texts):
        p = normalize_text(pred)
        if len(tokenize_text(p)) >= 2 and p in normalize_text(source):
            n_complete += 1
    return n_complete / len(predictions), n_complete, flags


def correctness_precision(
    outcomes: Sequence[ImageOutcome], policy: MatchPolicy
) -> tuple[float, int, int, list[str]]:
    n_pred = sum(len(o.predictions) for o in outcomes)
    if n_pred == 0:
        return 0.0, 0, 0, ["no_predictions"]
    n_correct = sum(len(greedy_assignment(o.predictions, o.gold_relevant, policy)) for o in outcomes)
    return n_correct / n_pred, n_correct, n_pred, []


def recall(
    outcomes: Sequence[ImageOutcome], policy: MatchPolicy
) -> tuple[float, int, int, list[str]]:
    n_gold = sum(len(o.gold_relevant) for o in outcomes)
    if n_gold == 0:
        return 1.0, 0, 0, ["no_gold_relevant"]  # vacuously recalled everything
    n_matched = sum(len(greedy_assignment(o.predictions, o.gold_relevant, policy)) for o in outcomes)
    return n_matched / n_gold, n_matched, n_gold, []


def evaluate_run(outcomes: Sequence[ImageOutcome], policy: MatchPolicy) -> EvalReport:
    p, n_correct, n_pred, p_flags = correctness_precision(outcomes, policy)
    r, _, n_gold, r_flags = recall(outcomes, policy)
    preds = [pred for o in outcomes for pred in o.predictions]
    sources = [o.source_text for o in outcomes for _ in o.predictions]
    comp, n_complete, c_flags = completeness(preds, sources)
    f1 = 2 * p * r / (p + r) if p + r else 0.0

    per_category: dict[str, dict[str, float]] = {}
    for cat in sorted({o.category for o in outcomes}):
        subset = [o for o in outcomes if o.category == cat]
        cp, _, _, _ = correctness_precision(subset, policy)
        cr, _, _, _ = recall(subset, policy)
        cpreds = [pred for o in subset for pred in o.predictions]
        csources = [o.source_text for o in subset for _ in o.predictions]
        ccomp, _, _ = completeness(cpreds, csources)
        per_category[cat] = {
            "precision": cp,
            "recall": cr,
            "f1": 2 * cp * cr / (cp + cr) if cp + cr else 0.0,
            "completeness": ccomp,
        }

    return EvalReport(
        precision=p,
        recall=r,
        f1=f1,
        completeness=comp,
        n_predictions=n_pred,
        n_correct=n_correct,
        n_gold=n_gold,
        n_complete=n_complete,
        per_category=per_category,
        flags=sorted(set(p_flags + r_flags + c_flags)),
    )


EVAL_CSV_HEADER = ["model", "prompt_kind", "decode_method", "precision", "recall", "f1", "completeness"]


def write_report(
    report: EvalReport,
    json_path: str | Path,
    csv_path: str | Path | None = None,
    model: str = "mine",
    prompt_kind: str = "mse",
    decode_method: str = "beam",
) -> None:
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(EVAL_CSV_HEADER)
            w.writerow(
                [
                    model, prompt_kind, decode_method,
                    f"{report.precision:.4f}", f"{report.recall:.4f}",
                    f"{report.f1:.4f}", f"{report.completeness:.4f}",
                ]
            )
