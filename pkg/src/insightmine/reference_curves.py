"""Bundled reference threshold-study curves and a replayable labelled set.

Two studies ship with the package: a precision/category-coverage sweep used
to pick a high-precision weak-labelling threshold, and a
precision/recall/F1 sweep used to balance the final training-data cut. The
plotted series are kept verbatim for display and selection demos; for
end-to-end sweep tests, `build_prf_replay_set` constructs a concrete
labelled set whose counts reproduce the precision/recall coordinates at
plot precision (two decimals).

Note the plotted F1 series is not exactly the harmonic mean of the plotted
precision/recall at every threshold (it was rounded independently), so the
replay set matches precision/recall everywhere and attains its F1 maximum
at threshold 0.21, consistent with the study's selected value.
"""

from __future__ import annotations

from .calibration import ThresholdCurvePoint

# (threshold, precision, category coverage)
PRECISION_COVERAGE_STUDY: list[tuple[float, float, float]] = [
    (0.19, 0.74, 0.99),
    (0.20, 0.74, 0.98),
    (0.21, 0.76, 0.97),
    (0.22, 0.79, 0.96),
    (0.23, 0.83, 0.95),
    (0.24, 0.87, 0.92),
    (0.25, 0.89, 0.89),
    (0.26, 0.90, 0.84),
    (0.27, 0.93, 0.81),
    (0.28, 0.93, 0.74),
    (0.29, 0.93, 0.68),
    (0.30, 0.95, 0.61),
    (0.31, 1.00, 0.50),
]

# (threshold, precision, recall, plotted f1)
PRF_STUDY: list[tuple[float, float, float, float]] = [
    (0.19, 0.74, 0.99, 0.85),
    (0.20, 0.74, 0.98, 0.84),
    (0.21, 0.76, 0.95, 0.85),
    (0.22, 0.79, 0.89, 0.84),
    (0.23, 0.83, 0.79, 0.81),
    (0.24, 0.87, 0.65, 0.74),
    (0.25, 0.89, 0.53, 0.66),
    (0.26, 0.92, 0.41, 0.56),
    (0.27, 0.91, 0.29, 0.44),
    (0.28, 0.94, 0.20, 0.32),
    (0.29, 0.94, 0.11, 0.20),
]

# Realizable confusion counts for the PRF study with 300 gold positives:
# true positives at each threshold are exactly 300 * recall, and the
# predicted-positive totals below make every precision round to the plotted
# two-decimal value.
PRF_REPLAY_GOLD_POSITIVES = 300
PRF_REPLAY_TRUE_POSITIVES = [297, 294, 285, 267, 237, 195, 159, 123, 87, 60, 33]
PRF_REPLAY_PREDICTED_POSITIVES = [404, 399, 373, 338, 285, 224, 179, 134, 96, 64, 35]


def precision_coverage_points() -> list[ThresholdCurvePoint]:
    """The precision/coverage study as curve points (recall not recorded)."""
    return [
        ThresholdCurvePoint(threshold=t, precision=p, recall=0.0, f1=0.0, coverage=c)
        for t, p, c in PRECISION_COVERAGE_STUDY
    ]


def prf_points() -> list[ThresholdCurvePoint]:
    """The PRF study exactly as plotted (including its rounded F1 series)."""
    return [
        ThresholdCurvePoint(threshold=t, precision=p, recall=r, f1=f, coverage=0.0)
        for t, p, r, f in PRF_STUDY
    ]


def realize_counts(
    grid: list[float],
    true_positives: list[int],
    predicted_positives: list[int],
    total_gold: int,
    category: str = "all",
) -> list[tuple[float, bool, str]]:
    """Place (score, gold, category) triples so a sweep reproduces the counts.

    Scores sit exactly on their cell's threshold (so two-decimal score
    serialization cannot move them across cells); pairs below the grid floor
    carry the difference between total_gold and the first TP count.
    """
    step = grid[1] - grid[0] if len(grid) > 1 else 0.01
    scored: list[tuple[float, bool, str]] = []
    tp = list(true_positives) + [0]
    fp = [p - t for p, t in zip(predicted_positives, true_positives)] + [0]
    scored.extend([(round(grid[0] - step, 10), True, category)] * (total_gold - tp[0]))
    for i, t in enumerate(grid):
        scored.extend([(t, True, category)] * (tp[i] - tp[i + 1]))
        scored.extend([(t, False, category)] * (fp[i] - fp[i + 1]))
    return scored


def build_prf_replay_set() -> list[tuple[float, bool, str]]:
    grid = [row[0] for row in PRF_STUDY]
    return realize_counts(
        grid,
        PRF_REPLAY_TRUE_POSITIVES,
        PRF_REPLAY_PREDICTED_POSITIVES,
        PRF_REPLAY_GOLD_POSITIVES,
    )
