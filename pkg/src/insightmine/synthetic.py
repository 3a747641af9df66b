"""Seeded synthetic feedback corpus with programmatic images and gold labels.

Each review is assembled from templated clause segments. Every image renders
the (color, part, defect) triple its complaint segment mentions: the left
half is a solid color field, the top-right quadrant encodes the part id as a
binary block pattern and the bottom-right quadrant encodes the defect id.
The generator records a gold relevance label for every (actionable segment,
image) pair, so the whole pipeline can be scored against ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import ReviewRecord, normalize_text
from .images import ImageRaster

COLORS: dict[str, tuple[int, int, int]] = {
    "red": (220, 40, 40),
    "blue": (40, 70, 220),
    "green": (40, 180, 70),
    "yellow": (230, 210, 50),
    "purple": (150, 50, 200),
    "orange": (240, 140, 30),
}

CATEGORY_PARTS: dict[str, list[str]] = {
    "handbags": ["strap", "zipper", "buckle", "handle"],
    "shoes": ["heel", "sole", "lace", "insole"],
    "jewelry": ["clasp", "chain", "stone", "band"],
    "kitchen": ["lid", "spout", "base", "knob"],
}

ALL_PARTS: list[str] = sorted({p for parts in CATEGORY_PARTS.values() for p in parts})

DEFECTS: list[str] = ["was torn", "looked faded", "was cracked", "was scratched"]

PRAISE: list[str] = ["felt sturdy", "looked lovely", "was perfect", "felt comfortable"]

NEUTRAL_FILLERS: list[str] = [
    "i bought this last month",
    "this was my second order",
    "my sister has the same one",
    "it arrived on a tuesday",
]


@dataclass
class SyntheticSpec:
    n_reviews: int = 200
    categories: list[str] = field(default_factory=lambda: list(CATEGORY_PARTS))
    seed: int = 7
    image_size: int = 32
    positive_fraction: float = 0.25  # gold positives per (verbatim, image) grid
    two_image_fraction: float = 0.3


@dataclass
class GoldPair:
    review_id: str
    image_path: str
    verbatim_norm: str
    label: str  # positive | negative


@dataclass
class SyntheticCorpus:
    reviews: list[ReviewRecord]
    images: dict[str, ImageRaster]  # path -> raster
    gold: list[GoldPair]


def _hue_palette(n: int) -> list[tuple[int, int, int]]:
    """n maximally hue-spaced saturated colors, alternating brightness."""
    import colorsys

    out = []
    for i in range(n):
        value = 0.95 if i % 2 == 0 else 0.55
        r, g, b = colorsys.hsv_to_rgb(i / n, 1.0, value)
        out.append((int(r * 255), int(g * 255), int(b * 255)))
    return out


PART_PALETTE = dict(zip(ALL_PARTS, _hue_palette(len(ALL_PARTS))))
DEFECT_PALETTE = dict(zip(DEFECTS, [(15, 15, 15), (235, 235, 235), (200, 30, 160), (30, 200, 200)]))


def render_attribute_image(color: str, part: str, defect: str, size: int = 32) -> ImageRaster:
    """Deterministic raster: the left half carries the part code color (the
    largest attribute space gets the most pixels), the top-right quadrant
    the color attribute itself, the bottom-right the defect code color with
    a stripe-count glyph overlaid."""
    px = np.full((size, size, 3), 255, dtype=np.uint8)
    half = size // 2
    px[:, :half] = PART_PALETTE[part]
    px[:half, half:] = COLORS[color]
    px[half:, half:] = DEFECT_PALETTE[defect]
    d = DEFECTS.index(defect)
    stripe = max(1, size // 16)
    for k in range(d + 1):  # defect index doubled as a stripe-count glyph
        r = half + 1 + k * 2 * stripe
        px[r : r + stripe, half + 1 : size - 1] = (90, 90, 90)
    return ImageRaster(px)


def _complaint(color: str, part: str, defect: str) -> str:
    return f"the {color} {part} {defect}"


def generate_synthetic_corpus(spec: SyntheticSpec) -> SyntheticCorpus:
    """Build `spec.n_reviews` templated reviews with images and gold labels.

    Deterministic under spec.seed; each image's complaint segment is its only
    gold-positive verbatim, distractor segments are gold-negative for every
    image, and neutral fillers never enter the gold grid.
    """
    rng = np.random.default_rng(spec.seed)
    segments_per_review = max(2, round(1.0 / spec.positive_fraction))
    reviews: list[ReviewRecord] = []
    images: dict[str, ImageRaster] = {}
    gold: list[GoldPair] = []

    for i in range(spec.n_reviews):
        review_id = f"r{i:05d}"
        category = spec.categories[int(rng.integers(len(spec.categories)))]
        parts_pool = CATEGORY_PARTS.get(category, ALL_PARTS)
        n_images = 2 if rng.random() < spec.two_image_fraction else 1
        n_images = min(n_images, len(parts_pool) - 1, len(COLORS) - 1)

        img_parts = list(rng.choice(parts_pool, size=n_images, replace=False))
        img_colors = list(rng.choice(list(COLORS), size=n_images, replace=False))
        img_defects = [DEFECTS[int(rng.integers(len(DEFECTS)))] for _ in range(n_images)]

        image_paths = []
        complaints = []
        for k in range(n_images):
            path = f"images/{review_id}_{k}.ppm"
            images[path] = render_attribute_image(
                img_colors[k], img_parts[k], img_defects[k], spec.image_size
            )
            image_paths.append(path)
            complaints.append(_complaint(img_colors[k], img_parts[k], img_defects[k]))

        # distractors are actionable but never describe a rendered image
        n_distract = max(0, segments_per_review - n_images)
        free_parts = [p for p in ALL_PARTS if p not in img_parts]
        free_colors = [c for c in COLORS if c not in img_colors]
        distractors = []
        for d in range(n_distract):
            part = free_parts[int(rng.integers(len(free_parts)))]
            free_parts.remove(part)
            if rng.random() < 0.5:
                distractors.append(f"the {part} {PRAISE[int(rng.integers(len(PRAISE)))]}")
            else:
                color = free_colors[int(rng.integers(len(free_colors)))]
                defect = DEFECTS[int(rng.integers(len(DEFECTS)))]
                distractors.append(f"the {color} {part} {defect}")

        actionable = complaints + distractors
        order = list(rng.permutation(len(actionable)))
        ordered = [actionable[j] for j in order]
        if rng.random() < 0.5:
            filler = NEUTRAL_FILLERS[int(rng.integers(len(NEUTRAL_FILLERS)))]
            ordered.insert(int(rng.integers(len(ordered) + 1)), filler)
        text = ". ".join(s.capitalize() for s in ordered) + "."

        reviews.append(
            ReviewRecord(
                review_id=review_id,
                text=text,
                image_paths=image_paths,
                category=category,
            )
        )
        for seg_idx, seg in enumerate(actionable):
            for k, path in enumerate(image_paths):
                label = "positive" if seg_idx == k else "negative"
                gold.append(GoldPair(review_id, path, normalize_text(seg), label))

    return SyntheticCorpus(reviews=reviews, images=images, gold=gold)


def gold_index(gold: list[GoldPair]) -> dict[tuple[str, str, str], str]:
    """(review_id, image_path, verbatim_norm) -> label lookup."""
    return {(g.review_id, g.image_path, g.verbatim_norm): g.label for g in gold}


def relevant_verbatims_by_image(gold: list[GoldPair]) -> dict[tuple[str, str], list[str]]:
    """(review_id, image_path) -> gold-positive normalized verbatim texts."""
    out: dict[tuple[str, str], list[str]] = {}
    for g in gold:
        key = (g.review_id, g.image_path)
        out.setdefault(key, [])
        if g.label == "positive":
            out[key].append(g.verbatim_norm)
    return out
