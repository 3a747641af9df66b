import itertools

import pytest

from insightmine.evaluation import (
    ImageOutcome,
    MatchPolicy,
    completeness,
    correctness_precision,
    evaluate_run,
    greedy_assignment,
    recall,
)


def outcome(preds, gold, source="", category="c", rid="r0", img="i.ppm"):
    return ImageOutcome(rid, img, category, source, list(preds), list(gold))


EXACT = MatchPolicy("exact_normalized")


class TestCompleteness:
    def test_all_verbatim_copies(self):
        src = "The red strap was torn. The box arrived late."
        preds = ["the red strap was torn", "The box arrived late"]
        frac, n, flags = completeness(preds, [src, src])
        assert frac == 1.0 and n == 2 and flags == []

    def test_three_of_four(self):
        src = "alpha beta gamma delta"
        preds = ["alpha beta", "beta gamma", "gamma delta", "made up words"]
        frac, n, _ = completeness(preds, [src] * 4)
        assert frac == 0.75 and n == 3

    def test_paraphrase_counted_incomplete(self):
        frac, n, _ = completeness(["strap tore badly"], ["the red strap was torn"])
        assert frac == 0.0

    def test_single_token_incomplete(self):
        frac, _, _ = completeness(["strap"], ["the strap broke"])
        assert frac == 0.0

    def test_zero_predictions_flagged(self):
        frac, n, flags = completeness([], [])
        assert frac == 0.0 and "no_predictions" in flags


class TestPrecisionRecall:
    def test_exact_match_full_scores(self):
        o = outcome(["the strap broke"], ["The strap broke."])
        p, _, _, _ = correctness_precision([o], EXACT)
        r, _, _, _ = recall([o], EXACT)
        assert p == 1.0 and r == 1.0

    def test_half_precision(self):
        o = outcome(["the strap broke", "invented text"], ["the strap broke"])
        p, n_correct, n_pred, _ = correctness_precision([o], EXACT)
        assert (p, n_correct, n_pred) == (0.5, 1, 2)

    def test_duplicate_prediction_credits_once(self):
        o = outcome(["the strap broke", "the strap broke"], ["the strap broke"])
        p, n_correct, _, _ = correctness_precision([o], EXACT)
        assert p == 0.5 and n_correct == 1

    def test_half_recall(self):
        o = outcome(["the strap broke"], ["the strap broke", "the lid cracked"])
        r, matched, n_gold, _ = recall([o], EXACT)
        assert (r, matched, n_gold) == (0.5, 1, 2)

    def test_zero_gold_vacuous_recall(self):
        o = outcome(["x y"], [])
        r, _, _, flags = recall([o], EXACT)
        assert r == 1.0 and "no_gold_relevant" in flags

    def test_zero_predictions_flagged(self):
        o = outcome([], ["gold text"])
        p, _, _, flags = correctness_precision([o], EXACT)
        assert p == 0.0 and "no_predictions" in flags

    def test_greedy_equals_optimal_bipartite_on_exact_matching(self):
        # exact matching partitions the graph into bicliques, where greedy
        # attains maximum matching; verify against brute force on <= 8x8
        import numpy as np

        rng = np.random.default_rng(0)
        names = ["a a", "b b", "c c", "d d"]
        for _ in range(40):
            preds = [names[i] for i in rng.integers(0, 4, size=rng.integers(0, 8))]
            gold = [names[i] for i in rng.integers(0, 4, size=rng.integers(0, 8))]
            got = len(greedy_assignment(preds, gold, EXACT))
            best = 0
            k = min(len(preds), len(gold))
            for size in range(k, -1, -1):
                found = False
                for p_idx in itertools.permutations(range(len(preds)), size):
                    for g_idx in itertools.combinations(range(len(gold)), size):
                        if all(EXACT.score(preds[i], gold[j]) > 0
                               for i, j in zip(p_idx, g_idx)):
                            found = True
                            break
                    if found:
                        break
                if found:
                    best = size
                    break
            assert got == best


class TestExactPolicyProperties:
    def test_symmetric_and_transitive_on_normalized_strings(self):
        texts = ["The strap broke.", "the strap broke", "THE STRAP  BROKE", "the lid fell"]
        for a in texts:
            for b in texts:
                assert EXACT.score(a, b) == EXACT.score(b, a)
                for c in texts:
                    if EXACT.score(a, b) and EXACT.score(b, c):
                        assert EXACT.score(a, c) == 1.0


class TestTokenF1Policy:
    def test_fuzzy_match_above_threshold(self):
        pol = MatchPolicy("token_f1", 0.5)
        assert pol.score("the red strap was torn", "red strap torn") > 0

    def test_below_threshold_zero(self):
        pol = MatchPolicy("token_f1", 0.9)
        assert pol.score("the red strap was torn", "lid cracked") == 0.0

    def test_invalid_threshold(self):
        with pytest.raises(ValueError):
            MatchPolicy("token_f1", 1.5)


class TestEvaluateRun:
    def test_perfect_run(self):
        o = outcome(["the strap broke"], ["the strap broke"], source="The strap broke.")
        rep = evaluate_run([o], EXACT)
        assert (rep.precision, rep.recall, rep.f1, rep.completeness) == (1, 1, 1, 1)

    def test_hand_built_scenario(self):
        # 5 predictions over two images: 3 correct, gold totals 4
        o1 = outcome(
            ["the strap broke", "the lid cracked", "junk one"],
            ["the strap broke", "the lid cracked"],
            source="The strap broke. The lid cracked. Junk one here.",
        )
        o2 = outcome(
            ["the stone fell", "other junk"],
            ["the stone fell", "the band bent"],
            source="The stone fell. The band bent.",
            img="j.ppm",
        )
        rep = evaluate_run([o1, o2], EXACT)
        assert rep.precision == pytest.approx(3 / 5)
        assert rep.recall == pytest.approx(3 / 4)
        assert rep.n_correct == 3 and rep.n_predictions == 5 and rep.n_gold == 4
        # "junk one" appears in source 1, "other junk" does not appear in source 2
        assert rep.completeness == pytest.approx(4 / 5)

    def test_f1_identity(self):
        o = outcome(["the strap broke", "x y"], ["the strap broke", "the lid cracked"])
        rep = evaluate_run([o], EXACT)
        assert rep.f1 == pytest.approx(
            2 * rep.precision * rep.recall / (rep.precision + rep.recall), abs=1e-12
        )

    def test_reorder_invariance(self):
        o1 = outcome(["a b", "c d"], ["a b"], source="a b c d")
        o2 = outcome(["c d", "a b"], ["a b"], source="a b c d")
        r1 = evaluate_run([o1], EXACT)
        r2 = evaluate_run([o2], EXACT)
        assert (r1.precision, r1.recall, r1.completeness) == (
            r2.precision, r2.recall, r2.completeness)

    def test_per_category_breakdown(self):
        o1 = outcome(["a b"], ["a b"], source="a b", category="bags")
        o2 = outcome(["x y"], ["w z"], source="x y", category="shoes")
        rep = evaluate_run([o1, o2], EXACT)
        assert rep.per_category["bags"]["precision"] == 1.0
        assert rep.per_category["shoes"]["precision"] == 0.0

    def test_metrics_in_unit_interval(self):
        o = outcome(["a b", "zz qq"], ["a b", "c d", "e f"], source="a b")
        rep = evaluate_run([o], EXACT)
        for v in (rep.precision, rep.recall, rep.f1, rep.completeness):
            assert 0.0 <= v <= 1.0


def test_write_report_files(tmp_path):
    o = outcome(["a b"], ["a b"], source="a b")
    rep = evaluate_run([o], EXACT)
    from insightmine.evaluation import write_report

    write_report(rep, tmp_path / "r.json", tmp_path / "r.csv",
                 model="mine", prompt_kind="mse", decode_method="beam")
    import json

    obj = json.loads((tmp_path / "r.json").read_text())
    assert obj["precision"] == 1.0
    lines = (tmp_path / "r.csv").read_text().strip().splitlines()
    assert lines[0] == "model,prompt_kind,decode_method,precision,recall,f1,completeness"
    assert lines[1].startswith("mine,mse,beam,1.0000")
