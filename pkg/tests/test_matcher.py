import math

import numpy as np
import pytest

import insightmine.tensor as T
from insightmine.corpus import PairRecord, Verbatim, build_vocabulary
from insightmine.matcher import (
    DualEncoder,
    DualEncoderConfig,
    LogitsMatrix,
    MatcherTrainConfig,
    cluster_verbatims,
    finetune,
    l2_normalize,
    label_pairs,
    score_pairs,
    similarity_logits,
    symmetric_loss,
)
from insightmine.synthetic import SyntheticSpec, generate_synthetic_corpus
from insightmine.tensor import Tensor

from helpers import gradcheck


def tiny_model(seed=0, **overrides):
    cfg = DualEncoderConfig(
        embed_dim=16, d_model=32, n_layers=1, n_heads=4, patch_size=8, image_size=32,
        max_text_len=12, **overrides,
    )
    vocab = build_vocabulary(["the red strap was torn", "the blue zipper looked faded",
                              "the green buckle was cracked", "it felt sturdy"])
    return DualEncoder(cfg, vocab, seed=seed)


def direct_symmetric_loss(logits: np.ndarray, labels: list[int]) -> float:
    """Independent slow evaluation of the symmetric contrastive loss."""
    n, m = logits.shape
    inverse = [0] * n
    for i, t in enumerate(labels):
        inverse[t] = i
    loss_i = 0.0
    for i in range(n):
        denom = sum(math.exp(logits[i, t]) for t in range(m))
        loss_i += -math.log(math.exp(logits[i, labels[i]]) / denom)
    loss_t = 0.0
    for t in range(m):
        denom = sum(math.exp(logits[j, t]) for j in range(n))
        loss_t += -math.log(math.exp(logits[inverse[t], t]) / denom)
    return 0.5 * (loss_i / n + loss_t / m)


class TestEncoders:
    def test_text_embedding_unit_norm(self):
        m = tiny_model()
        for text in ["the red strap was torn", "it felt sturdy"]:
            e = m.encode_text(text)
            assert abs(np.linalg.norm(e.data) - 1.0) < 1e-9

    def test_identical_strings_identical_vectors(self):
        m = tiny_model()
        a = m.encode_text("the red strap was torn").data
        b = m.encode_text("the red strap was torn").data
        assert (a == b).all()

    def test_cosine_bounded(self):
        m = tiny_model()
        a = m.encode_text("the red strap was torn").data
        b = m.encode_text("the blue zipper looked faded").data
        assert -1.0 <= float(a @ b) <= 1.0

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            tiny_model().encode_text("")

    def test_image_embedding_unit_norm(self):
        from insightmine.synthetic import render_attribute_image

        m = tiny_model()
        e = m.encode_image(render_attribute_image("red", "strap", "was torn"))
        assert abs(np.linalg.norm(e.data) - 1.0) < 1e-9

    def test_scale_invariance_of_cosine(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.normal(size=5))
        y = l2_normalize(Tensor(rng.normal(size=5))).data
        c1 = float(l2_normalize(x).data @ y)
        c2 = float(l2_normalize(x * 3.7).data @ y)
        assert abs(c1 - c2) < 1e-12


class TestSimilarityLogits:
    def test_same_vector_tau_one(self):
        e = l2_normalize(Tensor([1.0, 2.0, 2.0]))
        lm = similarity_logits([e], [e], tau=1.0)
        assert np.allclose(lm.logits.data, [[1.0]])

    def test_orthogonal_scaling(self):
        a = Tensor([1.0, 0.0])
        b = Tensor([0.0, 1.0])
        lm = similarity_logits([a, b], [a, b], tau=0.5)
        assert np.allclose(lm.logits.data, [[2.0, 0.0], [0.0, 2.0]])

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            l2_normalize(Tensor([0.0, 0.0]))

    def test_entries_bounded_by_inverse_tau(self):
        rng = np.random.default_rng(1)
        es = [l2_normalize(Tensor(rng.normal(size=6))) for _ in range(4)]
        lm = similarity_logits(es, es, tau=0.25)
        assert (np.abs(lm.logits.data) <= 4.0 + 1e-12).all()


class TestSymmetricLoss:
    def test_single_pair_zero(self):
        lm = LogitsMatrix(Tensor([[3.3]]), [0])
        assert symmetric_loss(lm).item() == 0.0

    def test_two_pair_identity_value(self):
        lm = LogitsMatrix(Tensor(np.eye(2)), [0, 1])
        expect = math.log(1 + math.exp(-1))
        assert abs(symmetric_loss(lm).item() - expect) < 1e-5

    def test_transpose_symmetry_exact(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            logits = rng.normal(size=(5, 5))
            a = symmetric_loss(LogitsMatrix(Tensor(logits), list(range(5)))).item()
            b = symmetric_loss(LogitsMatrix(Tensor(logits.T), list(range(5)))).item()
            assert abs(a - b) <= 1e-12

    def test_matches_direct_oracle_on_random_5x5(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            logits = rng.normal(size=(5, 5))
            labels = list(rng.permutation(5))
            mine = symmetric_loss(LogitsMatrix(Tensor(logits), labels)).item()
            oracle = direct_symmetric_loss(logits, labels)
            assert abs(mine - oracle) <= 1e-10

    def test_rectangular_batch_rejected(self):
        with pytest.raises(T.ContractError):
            symmetric_loss(LogitsMatrix(Tensor(np.zeros((2, 3))), [0, 1]))

    def test_temperature_monotonicity(self):
        rng = np.random.default_rng(4)
        cos = rng.uniform(-0.2, 0.2, size=(4, 4))
        np.fill_diagonal(cos, 0.9)
        losses = []
        for tau in (1.0, 0.5, 0.25, 0.1):
            lm = LogitsMatrix(Tensor(cos / tau), list(range(4)))
            losses.append(symmetric_loss(lm).item())
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_gradient_through_embeddings_and_tau(self):
        rng = np.random.default_rng(5)
        raw_i = [Tensor(rng.normal(size=6), requires_grad=True) for _ in range(3)]
        raw_t = [Tensor(rng.normal(size=6), requires_grad=True) for _ in range(3)]
        log_tau = Tensor(np.asarray(math.log(0.3)), requires_grad=True)

        def loss():
            tau = T.clamp_min(T.exp(log_tau), 0.01)
            lm = similarity_logits(
                [l2_normalize(e) for e in raw_i], [l2_normalize(e) for e in raw_t], tau
            )
            return symmetric_loss(lm)

        gradcheck(loss, raw_i + raw_t + [log_tau], rtol=1e-4)


class TestFinetune:
    def setup_method(self):
        corpus = generate_synthetic_corpus(SyntheticSpec(n_reviews=40, seed=13))
        self.pairs = []
        by_review = {r.review_id: r for r in corpus.reviews}
        for g in corpus.gold:
            if g.label == "positive":
                self.pairs.append((g.verbatim_norm, corpus.images[g.image_path]))
        texts = [r.text for r in by_review.values()] + [p[0] for p in self.pairs]
        self.vocab = build_vocabulary(texts)

    def model(self, seed=0):
        cfg = DualEncoderConfig(embed_dim=16, d_model=32, n_layers=1, n_heads=4,
                                max_text_len=12)
        return DualEncoder(cfg, self.vocab, seed=seed)

    def test_single_pair_batch_loss_zero(self):
        m = self.model()
        trace = finetune(m, self.pairs[:1], MatcherTrainConfig(steps=3, batch_size=1))
        assert all(v == 0.0 for v in trace)

    def test_loss_drops_on_synthetic_pairs(self):
        m = self.model()
        trace = finetune(m, self.pairs[:64], MatcherTrainConfig(steps=200, batch_size=16, seed=1))
        assert trace[-1] < 0.2 * trace[0]

    def test_same_seed_identical_traces(self):
        t1 = finetune(self.model(seed=3), self.pairs[:24],
                      MatcherTrainConfig(steps=12, batch_size=8, seed=5))
        t2 = finetune(self.model(seed=3), self.pairs[:24],
                      MatcherTrainConfig(steps=12, batch_size=8, seed=5))
        assert t1 == t2


class TestScoreAndLabel:
    def test_record_count_and_bounds(self):
        m = tiny_model()
        from insightmine.synthetic import render_attribute_image

        verbs = [Verbatim(f"v{i}", "r0", t, (0, len(t))) for i, t in enumerate(
            ["the red strap was torn", "the blue zipper looked faded", "it felt sturdy"]
        )]
        images = [("a.ppm", render_attribute_image("red", "strap", "was torn")),
                  ("b.ppm", render_attribute_image("blue", "zipper", "looked faded"))]
        recs = score_pairs(m, verbs, images)
        assert len(recs) == len(verbs) * len(images)
        assert all(-1.0 <= r.score <= 1.0 for r in recs)

    def test_empty_verbatims(self):
        m = tiny_model()
        assert score_pairs(m, [], [("a.ppm", None)]) == []

    def test_unreadable_image_gives_error_records(self):
        m = tiny_model()
        verbs = [Verbatim("v0", "r0", "the red strap was torn", (0, 22))]

        def boom():
            raise IOError("unreadable")

        recs = score_pairs(m, verbs, [("bad.ppm", boom)])
        assert len(recs) == 1 and recs[0].score == 0.0 and recs[0].label is None

    def test_serialized_scores_two_decimals(self):
        rec = PairRecord("p", "v", "r", "text", "img.ppm", 0.28734)
        assert rec.to_json()["score"] == 0.29

    def test_reference_scores_threshold(self):
        # six scored verbatims against one image, thresholded at 0.225
        scores = [0.19, 0.12, 0.29, 0.31, 0.13, 0.21]
        pairs = [PairRecord(f"p{i}", f"v{i}", "r", f"t{i}", "img.ppm", s)
                 for i, s in enumerate(scores)]
        label_pairs(pairs, 0.225)
        positives = [p.pair_id for p in pairs if p.label == "positive"]
        assert positives == ["p2", "p3"]

    def test_threshold_extremes(self):
        pairs = [PairRecord("p", "v", "r", "t", "i", 0.5)]
        assert label_pairs(pairs, 1.5)[0].label == "negative"
        assert label_pairs(pairs, -1.5)[0].label == "positive"


class TestClustering:
    def verbs(self, texts):
        return [Verbatim(f"v{i}", "r", t, (0, len(t))) for i, t in enumerate(texts)]

    def test_high_threshold_singletons(self):
        m = tiny_model()
        vs = self.verbs(["the red strap was torn", "it felt sturdy"])
        out = cluster_verbatims(vs, m, link_threshold=1.1)
        assert len(out.members) == len(vs)

    def test_duplicates_share_cluster(self):
        m = tiny_model()
        vs = self.verbs(["the red strap was torn", "the red strap was torn"])
        out = cluster_verbatims(vs, m, link_threshold=0.9)
        assert out.verbatim_to_cluster["v0"] == out.verbatim_to_cluster["v1"]

    def test_partition_property(self):
        m = tiny_model()
        vs = self.verbs(["the red strap was torn", "the blue zipper looked faded",
                         "it felt sturdy", "the red strap was torn"])
        out = cluster_verbatims(vs, m, link_threshold=0.5)
        seen = [vid for mem in out.members.values() for vid in mem]
        assert sorted(seen) == sorted(v.verbatim_id for v in vs)
        assert set(out.verbatim_to_cluster) == {v.verbatim_id for v in vs}
