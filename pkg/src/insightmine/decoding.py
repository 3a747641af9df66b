"""Decoding strategies over a frozen sequence model.

All strategies speak to a minimal step interface (start token, EOS token,
blocked ids, per-prefix log-probabilities), so they run identically over the
fused multimodal decoder and over tiny synthetic models in tests. Everything
is deterministic given (weights, prompt, image, config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from . import tensor as T
from .corpus import DEC, EOS, PAD
from .images import ImageRaster
from .mine import MINEModel

NEG_INF = float("-inf")


class SequenceModel(Protocol):
    vocab_size: int
    start_id: int
    eos_id: int
    blocked_ids: frozenset[int]

    def log_probs(self, prefix: tuple[int, ...]) -> np.ndarray: ...


@dataclass
class DecodeConfig:
    method: str = "beam"  # greedy | beam | top_k | nucleus
    beam_size: int = 10
    k: int = 50
    p: float = 0.95
    max_len: int = 48
    seed: int = 0

    def validated(self, vocab_size: int, needs_k: bool = False, needs_p: bool = False) -> "DecodeConfig":
        """Check only the fields the chosen method actually consumes."""
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if needs_k and not 1 <= self.k <= vocab_size:
            raise ValueError(f"k must be in [1, {vocab_size}]")
        if needs_p and not 0.0 < self.p <= 1.0:
            raise ValueError("p must be in (0, 1]")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        return self


@dataclass
class DecodeResult:
    tokens: list[int]  # content tokens: no start, no EOS
    log_prob: float  # sum over emitted steps (EOS step included when terminated)
    terminated: bool
    flags: list[str] = field(default_factory=list)


class MineSequenceModel:
    """Adapter: freeze one (prompt, image) context and expose step log-probs."""

    def __init__(self, model: MINEModel, prompt_ids: Sequence[int], image: ImageRaster):
        with T.no_grad():
            feats = model.encode_image(image)
            self.z = model.encode_grounded(prompt_ids, feats)
        self.model = model
        self.vocab_size = model.config.vocab_size
        self.start_id = DEC
        self.eos_id = EOS
        self.blocked_ids = frozenset({PAD, DEC})
        self.max_positions = model.config.max_text_len

    def log_probs(self, prefix: tuple[int, ...]) -> np.ndarray:
        with T.no_grad():
            logits = self.model.decode_logits(list(prefix), self.z).data[-1]
        shifted = logits - logits.max()
        return shifted - np.log(np.exp(shifted).sum())


def _masked_log_probs(model: SequenceModel, prefix: tuple[int, ...]) -> np.ndarray:
    lp = np.array(model.log_probs(prefix), dtype=np.float64)
    for b in model.blocked_ids:
        lp[b] = NEG_INF
    return lp


def greedy(model: SequenceModel, config: DecodeConfig) -> DecodeResult:
    config = config.validated(model.vocab_size)
    prefix: tuple[int, ...] = (model.start_id,)
    tokens: list[int] = []
    total = 0.0
    for _ in range(config.max_len):
        lp = _masked_log_probs(model, prefix)
        tok = int(lp.argmax())  # argmax breaks ties toward the lower id
        total += lp[tok]
        if tok == model.eos_id:
            return DecodeResult(tokens, total, True)
        tokens.append(tok)
        prefix = prefix + (tok,)
    return DecodeResult(tokens, total, False, flags=["unterminated"])


def beam_search(model: SequenceModel, config: DecodeConfig) -> DecodeResult:
    """Length-unnormalized sum-of-log-prob beam search.

    Hypotheses ending in EOS leave the beam as finalized; score ties break
    toward the lexicographically smaller token-id sequence. The greedy path
    is used as a floor so the returned score never falls below it.
    """
    config = config.validated(model.vocab_size)
    live: list[tuple[float, tuple[int, ...]]] = [(0.0, ())]
    finished: list[tuple[float, tuple[int, ...]]] = []
    for _ in range(config.max_len):
        candidates: list[tuple[float, tuple[int, ...], bool]] = []
        for score, toks in live:
            lp = _masked_log_probs(model, (model.start_id,) + toks)
            for tok in range(model.vocab_size):
                if lp[tok] == NEG_INF:
                    continue
                candidates.append((score + lp[tok], toks + (tok,), tok == model.eos_id))
        if not candidates:
            break
        candidates.sort(key=lambda c: (-c[0], c[1]))
        top = candidates[: config.beam_size]
        live = []
        for score, toks, ended in top:
            if ended:
                finished.append((score, toks[:-1]))  # drop the EOS itself
            else:
                live.append((score, toks))
        if not live:
            break

    pool = [(s, t, True) for s, t in finished] + [(s, t, False) for s, t in live]
    pool.sort(key=lambda c: (-c[0], c[1]))
    best_score, best_tokens, best_terminated = pool[0]

    fallback = greedy(model, config)
    if fallback.log_prob > best_score:
        return fallback
    flags = [] if best_terminated else ["unterminated"]
    return DecodeResult(list(best_tokens), best_score, best_terminated, flags=flags)


def _sorted_candidates(lp: np.ndarray) -> np.ndarray:
    """Token ids by descending probability; equal probabilities order by id."""
    order = np.lexsort((np.arange(lp.size), -lp))
    return order[lp[order] > NEG_INF]


def top_k_candidates(lp: np.ndarray, k: int) -> np.ndarray:
    order = _sorted_candidates(lp)
    return order[:k]


def nucleus_candidates(lp: np.ndarray, p: float, k: int | None = None) -> np.ndarray:
    """Smallest probability-sorted prefix reaching mass p, cut to k if set."""
    order = _sorted_candidates(lp)
    probs = np.exp(lp[order])
    probs = probs / probs.sum()
    csum = np.cumsum(probs)
    n = int(np.searchsorted(csum, p - 1e-12)) + 1
    n = min(n, order.size)
    if k is not None:
        n = min(n, k)
    return order[: max(1, n)]


def _sample_loop(
    model: SequenceModel, config: DecodeConfig, candidate_fn
) -> DecodeResult:
    rng = np.random.default_rng(config.seed)
    prefix: tuple[int, ...] = (model.start_id,)
    tokens: list[int] = []
    total = 0.0
    for _ in range(config.max_len):
        lp = _masked_log_probs(model, prefix)
        cands = candidate_fn(lp)
        weights = np.exp(lp[cands] - lp[cands].max())
        weights = weights / weights.sum()
        tok = int(cands[rng.choice(cands.size, p=weights)])
        total += lp[tok]
        if tok == model.eos_id:
            return DecodeResult(tokens, total, True)
        tokens.append(tok)
        prefix = prefix + (tok,)
    return DecodeResult(tokens, total, False, flags=["unterminated"])


def top_k_sample(model: SequenceModel, config: DecodeConfig) -> DecodeResult:
    """Sample among the k most probable tokens at each step, renormalized."""
    config = config.validated(model.vocab_size, needs_k=True)
    return _sample_loop(model, config, lambda lp: top_k_candidates(lp, config.k))


def nucleus_sample(model: SequenceModel, config: DecodeConfig) -> DecodeResult:
    """Sample within the minimal top-p prefix, intersected with top-k."""
    config = config.validated(model.vocab_size, needs_k=True, needs_p=True)
    return _sample_loop(
        model, config, lambda lp: nucleus_candidates(lp, config.p, config.k)
    )


def decode(model: SequenceModel, config: DecodeConfig) -> DecodeResult:
    method = config.method
    if method == "greedy":
        return greedy(model, config)
    if method == "beam":
        return beam_search(model, config)
    if method == "top_k":
        return top_k_sample(model, config)
    if method == "nucleus":
        return nucleus_sample(model, config)
    raise ValueError(f"unknown decode method {method!r}")
