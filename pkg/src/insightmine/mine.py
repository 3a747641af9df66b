"""Fused image-text encoder/decoder for insight extraction.

Three coupled components: a ViT-style image encoder over pixel patches, an
image-grounded text encoder that inserts cross-attention between
self-attention and FFN in every block, and a causal text decoder that
cross-attends to the fused multimodal embedding. The decoder re-uses the
grounded encoder's cross-attention and FFN sublayers (single storage, two
names), while self-attention and embeddings stay per-component.

Training teacher-forces the decoder and minimizes the per-pair sum of token
negative log-likelihoods averaged over pairs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import DEC, ENC, EOS, Vocabulary
from .images import ImageRaster, patchify
from .nn import (
    DecoderBlock,
    Embedding,
    EncoderBlock,
    GroundedBlock,
    LayerNorm,
    Linear,
    Module,
    Parameter,
)
from .optim import AdamW, cosine_lr
from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass
class MINEConfig:
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    patch_size: int = 8
    image_size: int = 32
    max_text_len: int = 64
    vocab_size: int = 0
    dropout: float = 0.0

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.image_size % self.patch_size:
            raise ValueError("image_size must be divisible by patch_size")

    @property
    def n_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2


@dataclass
class MineTrainConfig:
    epochs: int = 40
    batch_size: int = 8
    lr_init: float = 2e-3
    lr_min: float = 1e-4
    weight_decay: float = 0.01
    seed: int = 0


class MINEModel(Module):
    def __init__(self, config: MINEConfig, seed: int = 0):
        if config.vocab_size <= 0:
            raise ValueError("vocab_size must be set")
        rng = np.random.default_rng(seed)
        cfg = config

        # image encoder
        self.patch_embed = Linear(rng, 3 * cfg.patch_size**2, cfg.d_model)
        self.image_cls = Parameter(rng.normal(0.0, cfg.d_model**-0.5, size=(1, cfg.d_model)))
        self.image_pos = Embedding(rng, cfg.n_patches + 1, cfg.d_model)
        self.image_blocks = [EncoderBlock(rng, cfg.d_model, cfg.n_heads) for _ in range(cfg.n_layers)]
        self.image_norm = LayerNorm(cfg.d_model)

        # image-grounded text encoder
        self.enc_embed = Embedding(rng, cfg.vocab_size, cfg.d_model)
        self.enc_pos = Embedding(rng, cfg.max_text_len + 1, cfg.d_model)
        self.grounded_blocks = [
            GroundedBlock(rng, cfg.d_model, cfg.n_heads) for _ in range(cfg.n_layers)
        ]
        self.grounded_norm = LayerNorm(cfg.d_model)

        # decoder: own causal self-attention/embeddings, shared cross + FFN
        self.dec_embed = Embedding(rng, cfg.vocab_size, cfg.d_model)
        self.dec_pos = Embedding(rng, cfg.max_text_len + 1, cfg.d_model)
        self.dec_blocks = [
            DecoderBlock(rng, cfg.d_model, cfg.n_heads, shared=self.grounded_blocks[i])
            for i in range(cfg.n_layers)
        ]
        self.dec_norm = LayerNorm(cfg.d_model)
        self.vocab_proj = Linear(rng, cfg.d_model, cfg.vocab_size)

        self.config = cfg

    # -- encoding ---------------------------------------------------------
    def encode_image(self, image: ImageRaster) -> Tensor:
        """Patch embeddings + positions + [CLS] through the image blocks."""
        cfg = self.config
        if image.width != cfg.image_size or image.height != cfg.image_size:
            raise ValueError(
                f"image is {image.width}x{image.height}, expected "
                f"{cfg.image_size}x{cfg.image_size}"
            )
        x = self.patch_embed(T.constant(patchify(image, cfg.patch_size)))
        x = T.concat([self.image_cls, x], axis=0)
        x = x + self.image_pos(list(range(cfg.n_patches + 1)))
        for block in self.image_blocks:
            x = block(x)
        return self.image_norm(x)

    def encode_grounded(self, prompt_ids: Sequence[int], image_features: Tensor) -> Tensor:
        """Multimodal embedding z; row 0 is the [ENC] position.

        A leading [ENC] is prepended when absent; over-long prompts truncate
        with a warning.
        """
        ids = list(prompt_ids)
        if ids and ids[0] == ENC:
            ids = ids[1:]
        if len(ids) > self.config.max_text_len:
            log.warning("prompt of %d tokens truncated to %d", len(ids), self.config.max_text_len)
            ids = ids[: self.config.max_text_len]
        seq = [ENC] + ids
        x = self.enc_embed(seq) + self.enc_pos(list(range(len(seq))))
        for block in self.grounded_blocks:
            x = block(x, image_features)
        return self.grounded_norm(x)

    # -- decoding ---------------------------------------------------------
    def decode_logits(self, input_ids: Sequence[int], z: Tensor) -> Tensor:
        """(len, vocab) logits from causal self-attention over the prefix,
        cross-attention onto z, shared FFN, then the vocabulary projection."""
        ids = list(input_ids)
        if not ids or ids[0] != DEC:
            raise T.ContractError("decoder input must start with [DEC]")
        if len(ids) > self.config.max_text_len + 1:
            raise ValueError(
                f"decoder position {len(ids) - 1} beyond max length {self.config.max_text_len}"
            )
        x = self.dec_embed(ids) + self.dec_pos(list(range(len(ids))))
        for block in self.dec_blocks:
            x = block(x, z)
        return self.vocab_proj(self.dec_norm(x))

    def decode_step(self, prefix_ids: Sequence[int], z: Tensor) -> Tensor:
        """Next-token distribution after the given [DEC]-prefixed prefix."""
        logits = self.decode_logits(prefix_ids, z)
        return T.softmax(logits[logits.shape[0] - 1], axis=-1)


def training_loss(
    model: MINEModel,
    batch: Sequence[tuple[Sequence[int], ImageRaster, Sequence[int]]],
    z_cache: dict | None = None,
) -> Tensor:
    """Teacher-forced objective: mean over pairs of per-pair summed token NLL.

    Each element is (prompt token ids, image, target token ids ending in
    [EOS]); empty targets are skipped with a warning.
    """
    losses = []
    for prompt_ids, image, target_ids in batch:
        target = list(target_ids)
        if not target:
            log.warning("empty target skipped")
            continue
        if target[-1] != EOS:
            raise T.ContractError("targets must end with [EOS]")
        if len(target) > model.config.max_text_len:
            target = target[: model.config.max_text_len - 1] + [EOS]
        image_features = model.encode_image(image)
        z = model.encode_grounded(prompt_ids, image_features)
        inputs = [DEC] + target[:-1]
        logits = model.decode_logits(inputs, z)
        losses.append(T.cross_entropy(logits, target, reduction="sum"))
    if not losses:
        raise T.ContractError("batch had no usable pairs")
    total = losses[0]
    for extra in losses[1:]:
        total = total + extra
    return total * (1.0 / len(losses))


def train(
    model: MINEModel,
    examples: Sequence[tuple[Sequence[int], ImageRaster, Sequence[int]]],
    config: MineTrainConfig,
) -> list[float]:
    """Epoch loop over shuffled minibatches; returns per-epoch mean loss."""
    from .nn import dropout_mode

    rng = np.random.default_rng(config.seed)
    drop_rng = np.random.default_rng(config.seed + 7919)
    opt = AdamW(model.parameters(), lr=config.lr_init, weight_decay=config.weight_decay)
    usable = [ex for ex in examples if ex[2]]
    if len(usable) < len(examples):
        log.warning("%d empty-target examples dropped", len(examples) - len(usable))
    if not usable:
        return []
    total_steps = config.epochs * max(1, (len(usable) + config.batch_size - 1) // config.batch_size)
    trace: list[float] = []
    step = 0
    for _epoch in range(config.epochs):
        order = rng.permutation(len(usable))
        epoch_losses = []
        for lo in range(0, len(usable), config.batch_size):
            batch = [usable[i] for i in order[lo : lo + config.batch_size]]
            with dropout_mode(model.config.dropout, drop_rng):
                loss = training_loss(model, batch)
            value = loss.item()
            if not np.isfinite(value):
                raise FloatingPointError(f"non-finite loss at step {step}")
            model.zero_grads()
            loss.backward()
            opt.step(lr=cosine_lr(step, total_steps, config.lr_init, config.lr_min))
            epoch_losses.append(value)
            step += 1
        trace.append(float(np.mean(epoch_losses)))
    return trace


# -- persistence -----------------------------------------------------------


def save_mine(model: MINEModel, ckpt_dir: str | Path, vocab: Vocabulary | None = None) -> None:
    ckpt_dir = Path(ckpt_dir)
    save_checkpoint(model, ckpt_dir)
    with open(ckpt_dir / "model_config.json", "w", encoding="utf-8") as fh:
        json.dump(asdict(model.config), fh, sort_keys=True)
    if vocab is not None:
        vocab.save(ckpt_dir / "vocab.json")


def load_mine(ckpt_dir: str | Path) -> tuple[MINEModel, Vocabulary | None]:
    ckpt_dir = Path(ckpt_dir)
    with open(ckpt_dir / "model_config.json", "r", encoding="utf-8") as fh:
        config = MINEConfig(**json.load(fh))
    model = MINEModel(config)
    load_checkpoint(model, ckpt_dir)
    vocab_path = ckpt_dir / "vocab.json"
    vocab = Vocabulary.load(vocab_path) if vocab_path.exists() else None
    return model, vocab
