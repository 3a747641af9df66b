import numpy as np
import pytest

from insightmine.calibration import (
    AnnotationRecord,
    CalibrationError,
    SelectionPolicy,
    ThresholdCurvePoint,
    append_annotations,
    cohens_kappa,
    kappa_from_table,
    load_annotations,
    parse_grid,
    resolve_annotations,
    select_threshold,
    stratified_sample,
    sweep_thresholds,
)
from insightmine.matcher import ClusterAssignment
from insightmine.reference_curves import (
    PRF_STUDY,
    build_prf_replay_set,
    precision_coverage_points,
    prf_points,
)


def ann(pair, who, label, ts=0.0):
    return AnnotationRecord(pair_id=pair, annotator_id=who, label=label, timestamp=ts)


class TestStratifiedSample:
    def make_clusters(self, n_clusters, n_cats, per_cell):
        clusters = ClusterAssignment()
        categories = {}
        for c in range(n_clusters):
            clusters.members[c] = []
            for d in range(n_cats):
                for j in range(per_cell):
                    vid = f"c{c}d{d}v{j}"
                    clusters.members[c].append(vid)
                    clusters.verbatim_to_cluster[vid] = c
                    categories[vid] = f"cat{d}"
        return clusters, categories

    def test_k_zero_empty(self):
        clusters, cats = self.make_clusters(2, 2, 3)
        assert stratified_sample(clusters, cats, 2, 0, seed=0) == []

    def test_two_by_two_quota(self):
        # 2 clusters x 2 categories, cells >= 2, K=4 over 2 categories: 2 per cell
        clusters, cats = self.make_clusters(2, 2, 3)
        s = stratified_sample(clusters, cats, 2, 4, seed=0)
        assert len(s) == 8
        for c in range(2):
            for d in range(2):
                assert sum(1 for v in s if v.startswith(f"c{c}d{d}")) == 2

    def test_small_cell_taken_whole_no_duplicates(self):
        clusters, cats = self.make_clusters(1, 1, 1)
        s = stratified_sample(clusters, cats, 1, 5, seed=0)
        assert s == ["c0d0v0"]

    def test_deterministic_under_seed(self):
        clusters, cats = self.make_clusters(3, 2, 5)
        a = stratified_sample(clusters, cats, 2, 4, seed=9)
        b = stratified_sample(clusters, cats, 2, 4, seed=9)
        assert a == b
        assert len(set(a)) == len(a)


class TestResolution:
    def test_agreement(self):
        recs = [ann("p", "A", "relevant"), ann("p", "B", "relevant")]
        assert resolve_annotations(recs) == {"p": "relevant"}

    def test_majority_with_third(self):
        recs = [ann("p", "A", "relevant"), ann("p", "B", "not_relevant"),
                ann("p", "C", "not_relevant")]
        assert resolve_annotations(recs) == {"p": "not_relevant"}

    def test_two_way_conflict_unresolved(self):
        recs = [ann("p", "A", "relevant"), ann("p", "B", "not_relevant")]
        assert resolve_annotations(recs) == {}

    def test_single_annotator_unresolved(self):
        assert resolve_annotations([ann("p", "A", "relevant")]) == {}

    def test_last_write_wins_per_annotator(self):
        recs = [ann("p", "A", "relevant", 1), ann("p", "B", "relevant", 2),
                ann("p", "A", "not_relevant", 3), ann("p", "B", "not_relevant", 4)]
        assert resolve_annotations(recs) == {"p": "not_relevant"}

    def test_log_round_trip(self, tmp_path):
        path = tmp_path / "log.jsonl"
        recs = [ann("p1", "A", "relevant", 1.5), ann("p2", "B", "not_relevant", 2.5)]
        append_annotations(recs, path)
        append_annotations([ann("p3", "C", "relevant", 3.5)], path)
        assert load_annotations(path) == recs + [ann("p3", "C", "relevant", 3.5)]


class TestKappa:
    def test_perfect_agreement_mixed(self):
        recs = [ann("p1", "A", "relevant"), ann("p1", "B", "relevant"),
                ann("p2", "A", "not_relevant"), ann("p2", "B", "not_relevant")]
        assert cohens_kappa(recs, "A", "B") == pytest.approx(1.0)

    def test_chance_agreement_zero(self):
        # marginals 50/50 each, observed agreement exactly 50%
        labs_a = ["relevant", "relevant", "not_relevant", "not_relevant"]
        labs_b = ["relevant", "not_relevant", "relevant", "not_relevant"]
        recs = []
        for i, (a, b) in enumerate(zip(labs_a, labs_b)):
            recs += [ann(f"p{i}", "A", a), ann(f"p{i}", "B", b)]
        assert cohens_kappa(recs, "A", "B") == pytest.approx(0.0)

    def test_hand_computed_table(self):
        assert kappa_from_table([[20, 5], [10, 15]]) == pytest.approx(0.4, abs=1e-12)

    def test_degenerate_marginals_convention(self):
        recs = [ann("p1", "A", "relevant"), ann("p1", "B", "relevant"),
                ann("p2", "A", "relevant"), ann("p2", "B", "relevant")]
        assert cohens_kappa(recs, "A", "B") == 1.0

    def test_bounds_random(self):
        rng = np.random.default_rng(0)
        for trial in range(20):
            recs = []
            for i in range(30):
                for who in "AB":
                    lab = "relevant" if rng.random() < 0.5 else "not_relevant"
                    recs.append(ann(f"p{i}", who, lab))
            k = cohens_kappa(recs, "A", "B")
            assert -1.0 - 1e-12 <= k <= 1.0 + 1e-12

    def test_no_common_pairs_rejected(self):
        with pytest.raises(CalibrationError):
            cohens_kappa([ann("p1", "A", "relevant"), ann("p2", "B", "relevant")], "A", "B")


class TestSweep:
    def test_all_positive_above_threshold(self):
        scored = [(0.9, True, "c"), (0.8, True, "c")]
        pts = sweep_thresholds(scored, [0.5])
        assert pts[0].precision == pts[0].recall == pts[0].f1 == 1.0

    def test_recall_one_at_low_threshold(self):
        scored = [(0.2, True, "c"), (-0.5, True, "c"), (0.1, False, "c")]
        pts = sweep_thresholds(scored, [-1.0])
        assert pts[0].recall == 1.0

    def test_zero_predictions_flagged(self):
        pts = sweep_thresholds([(0.1, True, "c")], [0.5])
        assert pts[0].precision == 0.0
        assert "no_predicted_positives" in pts[0].flags

    def test_monotone_properties(self):
        rng = np.random.default_rng(1)
        scored = [(float(rng.uniform(-1, 1)), bool(rng.random() < 0.4), f"c{rng.integers(3)}")
                  for _ in range(200)]
        pts = sweep_thresholds(scored, [round(-1 + 0.1 * i, 2) for i in range(21)], 3)
        for a, b in zip(pts, pts[1:]):
            assert a.recall >= b.recall
            assert a.coverage >= b.coverage
            assert a.tp + a.fp >= b.tp + b.fp

    def test_f1_identity(self):
        scored = [(0.5, True, "c"), (0.4, False, "c"), (0.2, True, "c")]
        for p in sweep_thresholds(scored, [0.1, 0.3, 0.45]):
            if p.precision + p.recall:
                assert p.f1 == pytest.approx(
                    2 * p.precision * p.recall / (p.precision + p.recall), abs=1e-15
                )

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            n = int(rng.integers(1, 200))
            scored = [
                (float(rng.uniform(-1, 1)), bool(rng.random() < 0.5), f"c{rng.integers(4)}")
                for _ in range(n)
            ]
            grid = sorted(set(round(float(g), 3) for g in rng.uniform(-1, 1, size=5)))
            pts = sweep_thresholds(scored, grid, 4)
            for p in pts:
                tp = sum(1 for s, g, _ in scored if s >= p.threshold and g)
                fp = sum(1 for s, g, _ in scored if s >= p.threshold and not g)
                fn = sum(1 for s, g, _ in scored if s < p.threshold and g)
                cov = len({c for s, _, c in scored if s >= p.threshold}) / 4
                assert (p.tp, p.fp, p.fn) == (tp, fp, fn)
                assert p.coverage == pytest.approx(cov, abs=1e-15)


class TestSelection:
    def test_precision_floor_on_reference_study(self):
        pts = precision_coverage_points()
        t = select_threshold(pts, SelectionPolicy("precision_floor", 0.93))
        assert t == pytest.approx(0.27)
        at = next(p for p in pts if p.threshold == t)
        assert at.precision == pytest.approx(0.93) and at.coverage == pytest.approx(0.81)

    def test_max_f1_on_plotted_study_tie_breaks_high(self):
        t = select_threshold(prf_points(), SelectionPolicy("max_f1"))
        assert t == pytest.approx(0.21)  # f1 0.85 at 0.19 and 0.21; prefer higher

    def test_fixed(self):
        assert select_threshold(prf_points(), SelectionPolicy("fixed", 0.225)) == 0.225

    def test_single_point(self):
        pt = ThresholdCurvePoint(0.3, 0.9, 0.5, 0.64, 1.0)
        assert select_threshold([pt], SelectionPolicy("max_f1")) == 0.3

    def test_unattainable_floor_reports_max(self):
        with pytest.raises(CalibrationError, match="max achieved precision"):
            select_threshold(precision_coverage_points(), SelectionPolicy("precision_floor", 1.01))

    def test_empty_curve(self):
        with pytest.raises(CalibrationError):
            select_threshold([], SelectionPolicy("max_f1"))


class TestReferenceReplay:
    def test_replay_reproduces_precision_recall_at_plot_precision(self):
        scored = build_prf_replay_set()
        grid = [row[0] for row in PRF_STUDY]
        pts = sweep_thresholds(scored, grid, 1)
        for p, (t, prec, rec, _) in zip(pts, PRF_STUDY):
            assert p.threshold == pytest.approx(t)
            assert abs(p.precision - prec) < 0.005, (t, p.precision, prec)
            assert p.recall == pytest.approx(rec, abs=1e-12)

    def test_replay_cited_points(self):
        scored = build_prf_replay_set()
        pts = sweep_thresholds(scored, [row[0] for row in PRF_STUDY], 1)
        p22 = next(p for p in pts if abs(p.threshold - 0.22) < 1e-9)
        assert round(p22.precision, 2) == 0.79
        assert round(p22.recall, 2) == 0.89
        assert round(p22.f1, 2) == 0.84
        p23 = next(p for p in pts if abs(p.threshold - 0.23) < 1e-9)
        assert (round(p23.precision, 2), round(p23.recall, 2), round(p23.f1, 2)) == (0.83, 0.79, 0.81)

    def test_replay_max_f1_selects_021(self):
        scored = build_prf_replay_set()
        pts = sweep_thresholds(scored, [row[0] for row in PRF_STUDY], 1)
        assert select_threshold(pts, SelectionPolicy("max_f1")) == pytest.approx(0.21)


def test_parse_grid_forms():
    assert parse_grid("0.19:0.21:0.01") == [0.19, 0.2, 0.21]
    assert parse_grid("0.1,0.5") == [0.1, 0.5]
    assert parse_grid([0.1, 0.2]) == [0.1, 0.2]
