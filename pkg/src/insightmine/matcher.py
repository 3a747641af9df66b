"""Contrastive dual encoder: align verbatim and image embeddings.

Images and texts are embedded into a shared unit sphere; scaled pairwise
cosines form the logits and training minimizes the symmetric cross-entropy
over both softmax axes with in-batch negatives. Trained models score every
(verbatim, image) pair with a raw cosine in [-1, 1].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .corpus import PairRecord, Verbatim, Vocabulary
from .images import ImageRaster, patchify
from .nn import Embedding, EncoderBlock, LayerNorm, Linear, Module, Parameter
from .optim import AdamW, cosine_lr
from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass
class DualEncoderConfig:
    embed_dim: int = 32
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    patch_size: int = 8
    image_size: int = 32
    max_text_len: int = 16
    tau_init: float = 0.07
    learnable_tau: bool = True  # reparameterized as exp(free scalar), clamped
    tau_floor: float = 0.01


@dataclass
class MatcherTrainConfig:
    steps: int = 300
    batch_size: int = 16
    lr: float = 2e-3
    lr_min: float = 1e-4
    weight_decay: float = 0.01
    seed: int = 0


@dataclass
class LogitsMatrix:
    logits: Tensor  # n images x m texts, cos/tau
    labels: list[int]  # matched text index per image


@dataclass
class ClusterAssignment:
    verbatim_to_cluster: dict[str, int] = field(default_factory=dict)
    members: dict[int, list[str]] = field(default_factory=dict)


def l2_normalize(x: Tensor) -> Tensor:
    norm_sq = (x * x).sum()
    if float(norm_sq.data) < 1e-24:
        raise ValueError("cannot normalize a zero vector (cosine undefined)")
    return x * T.pow(norm_sq, -0.5)


class DualEncoder(Module):
    def __init__(self, config: DualEncoderConfig, vocab: Vocabulary, seed: int = 0):
        rng = np.random.default_rng(seed)
        cfg = config
        if cfg.image_size % cfg.patch_size != 0:
            raise ValueError("image_size must be divisible by patch_size")
        self.n_patches = (cfg.image_size // cfg.patch_size) ** 2

        self.token_embed = Embedding(rng, len(vocab), cfg.d_model)
        self.text_pos = Embedding(rng, cfg.max_text_len, cfg.d_model)
        self.text_blocks = [EncoderBlock(rng, cfg.d_model, cfg.n_heads) for _ in range(cfg.n_layers)]
        self.text_norm = LayerNorm(cfg.d_model)
        self.text_proj = Linear(rng, cfg.d_model, cfg.embed_dim)

        self.patch_embed = Linear(rng, 3 * cfg.patch_size**2, cfg.d_model)
        self.image_cls = Parameter(rng.normal(0.0, cfg.d_model**-0.5, size=(1, cfg.d_model)))
        self.image_pos = Embedding(rng, self.n_patches + 1, cfg.d_model)
        self.image_blocks = [EncoderBlock(rng, cfg.d_model, cfg.n_heads) for _ in range(cfg.n_layers)]
        self.image_norm = LayerNorm(cfg.d_model)
        self.image_proj = Linear(rng, cfg.d_model, cfg.embed_dim)

        self.log_tau = Parameter(np.asarray(np.log(cfg.tau_init)))
        self.config = cfg
        self.vocab = vocab

    def tau(self) -> Tensor:
        if not self.config.learnable_tau:
            return T.constant(self.config.tau_init)
        return T.clamp_min(T.exp(self.log_tau), self.config.tau_floor)

    def encode_text(self, text: str) -> Tensor:
        """Unit-norm embedding of one verbatim; deterministic for fixed weights."""
        ids = self.vocab.encode(text)
        if not ids:
            raise ValueError("cannot encode empty text")
        if len(ids) > self.config.max_text_len:
            log.warning("text of %d tokens truncated to %d", len(ids), self.config.max_text_len)
            ids = ids[: self.config.max_text_len]
        x = self.token_embed(ids) + self.text_pos(list(range(len(ids))))
        for block in self.text_blocks:
            x = block(x)
        pooled = self.text_norm(x).mean(axis=0)
        return l2_normalize(self.text_proj(pooled.reshape(1, -1)).reshape(-1))

    def patchify(self, image: ImageRaster) -> Tensor:
        cfg = self.config
        if image.width != cfg.image_size or image.height != cfg.image_size:
            raise ValueError(
                f"image is {image.width}x{image.height}, expected "
                f"{cfg.image_size}x{cfg.image_size}"
            )
        return T.constant(patchify(image, cfg.patch_size))

    def encode_image(self, image: ImageRaster) -> Tensor:
        x = self.patch_embed(self.patchify(image))
        x = T.concat([self.image_cls, x], axis=0)
        x = x + self.image_pos(list(range(self.n_patches + 1)))
        for block in self.image_blocks:
            x = block(x)
        cls = self.image_norm(x)[0]
        return l2_normalize(self.image_proj(cls.reshape(1, -1)).reshape(-1))


def similarity_logits(
    image_embeds: Sequence[Tensor] | Tensor,
    text_embeds: Sequence[Tensor] | Tensor,
    tau: Tensor | float,
    labels: list[int] | None = None,
) -> LogitsMatrix:
    """Scaled pairwise cosines: logits[i][t] = cos(image_i, text_t) / tau."""
    ei = image_embeds if isinstance(image_embeds, Tensor) else T.stack(list(image_embeds))
    et = text_embeds if isinstance(text_embeds, Tensor) else T.stack(list(text_embeds))
    tau_t = tau if isinstance(tau, Tensor) else T.constant(tau)
    if float(tau_t.data) <= 0:
        raise ValueError("temperature must be positive")
    cos = ei @ T.transpose(et)
    logits = cos * T.pow(tau_t, -1.0)
    if labels is None:
        labels = list(range(ei.shape[0]))
    return LogitsMatrix(logits=logits, labels=labels)


def symmetric_loss(lm: LogitsMatrix) -> Tensor:
    """Mean of the image-axis and text-axis cross-entropies.

    Requires a bijective image-text matching (square logits, permutation
    labels); a single-pair batch yields exactly zero loss and no signal.
    """
    n, m = lm.logits.shape
    labels = lm.labels
    if n != m or sorted(labels) != list(range(m)):
        raise T.ContractError(
            f"symmetric loss needs a bijective matching: {n}x{m} logits, labels {labels}"
        )
    inverse = [0] * n
    for img_idx, txt_idx in enumerate(labels):
        inverse[txt_idx] = img_idx
    loss_images = T.cross_entropy(lm.logits, labels)
    loss_texts = T.cross_entropy(T.transpose(lm.logits), inverse)
    return (loss_images + loss_texts) * 0.5


def finetune(
    model: DualEncoder,
    positive_pairs: Sequence[tuple[str, ImageRaster]],
    config: MatcherTrainConfig,
) -> list[float]:
    """Contrastive fine-tune on (verbatim text, image) positives.

    In-batch negatives with the diagonal as targets; the pool is deduplicated
    by text so a batch never contains two positives for the same caption.
    Returns the per-step loss trace.
    """
    seen: set[str] = set()
    pool: list[tuple[str, ImageRaster]] = []
    for text, img in positive_pairs:
        if text not in seen:
            seen.add(text)
            pool.append((text, img))
    if not pool:
        return []
    rng = np.random.default_rng(config.seed)
    opt = AdamW(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    trace: list[float] = []
    for step in range(config.steps):
        k = min(config.batch_size, len(pool))
        idx = rng.choice(len(pool), size=k, replace=False)
        texts = [model.encode_text(pool[i][0]) for i in idx]
        imgs = [model.encode_image(pool[i][1]) for i in idx]
        loss = symmetric_loss(similarity_logits(imgs, texts, model.tau()))
        value = loss.item()
        if not np.isfinite(value):
            raise FloatingPointError(f"non-finite loss at step {step}")
        trace.append(value)
        model.zero_grads()
        loss.backward()
        opt.step(lr=cosine_lr(step, config.steps, config.lr, config.lr_min))
    return trace


def score_pairs(
    model: DualEncoder,
    verbatims: Sequence[Verbatim],
    images: Sequence[tuple[str, ImageRaster | None]] | Sequence[tuple[str, Callable[[], ImageRaster]]],
) -> list[PairRecord]:
    """One PairRecord per (verbatim, image): raw cosine scores, m x n records.

    `images` is (path, raster-or-loader); a failing load yields an error
    record for each pair touching that image.
    """
    records: list[PairRecord] = []
    with T.no_grad():
        text_cache: dict[str, np.ndarray] = {}
        for v in verbatims:
            if v.text not in text_cache:
                text_cache[v.text] = model.encode_text(v.text).data
        for path, img in images:
            err = None
            img_embed = None
            try:
                raster = img() if callable(img) else img
                if raster is None:
                    raise ValueError("missing image")
                img_embed = model.encode_image(raster).data
            except Exception as e:
                err = str(e)
            for v in verbatims:
                pair_id = f"{v.verbatim_id}|{path}"
                if err is not None:
                    rec = PairRecord(pair_id, v.verbatim_id, v.review_id, v.text, path, 0.0)
                    rec.label = None
                    records.append(rec)
                    log.warning("pair %s skipped: %s", pair_id, err)
                    continue
                score = float(np.dot(img_embed, text_cache[v.text]))
                records.append(
                    PairRecord(pair_id, v.verbatim_id, v.review_id, v.text, path, score)
                )
    return records


def label_pairs(pairs: Sequence[PairRecord], threshold: float) -> list[PairRecord]:
    """positive iff score >= threshold."""
    if not np.isfinite(threshold):
        raise ValueError("threshold must be finite")
    for p in pairs:
        p.label = "positive" if p.score >= threshold else "negative"
    return list(pairs)


def cluster_verbatims(
    verbatims: Sequence[Verbatim], model: DualEncoder, link_threshold: float
) -> ClusterAssignment:
    """Greedy leader clustering in scan order over embedding cosines."""
    assign = ClusterAssignment()
    leaders: list[np.ndarray] = []
    with T.no_grad():
        cache: dict[str, np.ndarray] = {}
        for v in verbatims:
            if v.text not in cache:
                cache[v.text] = model.encode_text(v.text).data
            e = cache[v.text]
            chosen = None
            for cid, leader in enumerate(leaders):
                if float(np.dot(e, leader)) >= link_threshold:
                    chosen = cid
                    break
            if chosen is None:
                chosen = len(leaders)
                leaders.append(e)
                assign.members[chosen] = []
            assign.verbatim_to_cluster[v.verbatim_id] = chosen
            assign.members[chosen].append(v.verbatim_id)
    return assign
