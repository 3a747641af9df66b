"""Small transformer building blocks on top of the autodiff tensors.

Modules form a tree; named_parameters() walks it in attribute-insertion order
and yields dotted-path names. A tensor reached through two paths (shared
sublayers) is reported under both names but holds a single storage, which is
exactly how encoder/decoder FFN and cross-attention sharing is expressed.
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import (
    Parameter,
    Tensor,
    constant,
    dropout,
    gelu,
    layer_norm,
    matmul,
    reshape,
    softmax,
    take,
    transpose,
)

_DROPOUT: tuple[float, np.random.Generator] | None = None


class dropout_mode:
    """Enable inverted dropout on sublayer outputs inside this scope.

    Off by default so inference and tests stay deterministic; training loops
    opt in with their own threaded generator.
    """

    def __init__(self, p: float, rng: np.random.Generator):
        self.p = p
        self.rng = rng

    def __enter__(self):
        global _DROPOUT
        self._prev = _DROPOUT
        _DROPOUT = (self.p, self.rng) if self.p > 0.0 else None
        return self

    def __exit__(self, *exc):
        global _DROPOUT
        _DROPOUT = self._prev
        return False


def maybe_dropout(x: Tensor) -> Tensor:
    if _DROPOUT is None:
        return x
    p, rng = _DROPOUT
    return dropout(x, p, rng)


class Module:
    """Base class; parameters and submodules are plain attributes."""

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        out: list[tuple[str, Parameter]] = []
        for key, value in vars(self).items():
            path = f"{prefix}.{key}" if prefix else key
            if isinstance(value, Parameter):
                out.append((path, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(path))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(f"{path}.{i}"))
                    elif isinstance(item, Parameter):
                        out.append((f"{path}.{i}", item))
        return out

    def parameters(self) -> list[Parameter]:
        """Distinct parameter storages, first-seen order."""
        seen: set[int] = set()
        out = []
        for _, p in self.named_parameters():
            if id(p) not in seen:
                seen.add(id(p))
                out.append(p)
        return out

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def _init_weight(rng: np.random.Generator, shape, std: float | None = None) -> np.ndarray:
    # fan-in scaling keeps shallow stacks well conditioned at toy widths
    if std is None:
        std = 1.0 / math.sqrt(shape[0])
    return rng.normal(0.0, std, size=shape)


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True):
        self.w = Parameter(_init_weight(rng, (d_in, d_out)))
        self.b = Parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = matmul(x, self.w) if x.ndim == 2 else _batched_linear(x, self.w)
        if self.b is not None:
            y = y + self.b
        return y


def _batched_linear(x: Tensor, w: Parameter) -> Tensor:
    lead = x.shape[:-1]
    flat = reshape(x, (-1, x.shape[-1]))
    return reshape(matmul(flat, w), lead + (w.shape[1],))


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self.eps)


class Embedding(Module):
    def __init__(self, rng: np.random.Generator, n: int, dim: int):
        self.table = Parameter(_init_weight(rng, (n, dim), std=1.0 / math.sqrt(dim)))

    def __call__(self, ids) -> Tensor:
        return take(self.table, np.asarray(ids, dtype=np.intp))


def causal_mask(n: int) -> np.ndarray:
    """(n, n) additive mask: -inf strictly above the diagonal."""
    m = np.zeros((n, n))
    m[np.triu_indices(n, k=1)] = -np.inf
    return m


class MultiHeadAttention(Module):
    """Scaled dot-product attention; pass memory for cross-attention."""

    def __init__(self, rng: np.random.Generator, d_model: int, n_heads: int):
        if d_model % n_heads != 0:
            raise ValueError(f"d_model {d_model} not divisible by n_heads {n_heads}")
        self.wq = Linear(rng, d_model, d_model)
        self.wk = Linear(rng, d_model, d_model)
        self.wv = Linear(rng, d_model, d_model)
        self.wo = Linear(rng, d_model, d_model)
        self.n_heads = n_heads
        self.d_head = d_model // n_heads

    def _split(self, x: Tensor) -> Tensor:
        t = x.shape[0]
        return transpose(reshape(x, (t, self.n_heads, self.d_head)), (1, 0, 2))

    def __call__(self, x: Tensor, memory: Tensor | None = None, causal: bool = False) -> Tensor:
        kv = x if memory is None else memory
        tq, tk = x.shape[0], kv.shape[0]
        q = self._split(self.wq(x))
        k = self._split(self.wk(kv))
        v = self._split(self.wv(kv))
        scores = matmul(q, transpose(k, (0, 2, 1))) * (1.0 / np.sqrt(self.d_head))
        if causal:
            mask = np.broadcast_to(causal_mask(tq), (self.n_heads, tq, tk)).copy()
            scores = scores + constant(mask)
        attn = softmax(scores, axis=-1)
        ctx = matmul(attn, v)
        merged = reshape(transpose(ctx, (1, 0, 2)), (tq, self.n_heads * self.d_head))
        return self.wo(merged)


class FeedForward(Module):
    def __init__(self, rng: np.random.Generator, d_model: int, d_hidden: int):
        self.w_in = Linear(rng, d_model, d_hidden)
        self.w_out = Linear(rng, d_hidden, d_model)

    def __call__(self, x: Tensor) -> Tensor:
        return self.w_out(gelu(self.w_in(x)))


class SelfAttentionSublayer(Module):
    """Pre-norm residual self-attention."""

    def __init__(self, rng, d_model: int, n_heads: int, causal: bool = False):
        self.norm = LayerNorm(d_model)
        self.attn = MultiHeadAttention(rng, d_model, n_heads)
        self.causal = causal

    def __call__(self, x: Tensor) -> Tensor:
        return x + maybe_dropout(self.attn(self.norm(x), causal=self.causal))


class CrossAttentionSublayer(Module):
    """Pre-norm residual cross-attention; zeroing wo makes it an identity."""

    def __init__(self, rng, d_model: int, n_heads: int):
        self.norm = LayerNorm(d_model)
        self.attn = MultiHeadAttention(rng, d_model, n_heads)

    def __call__(self, x: Tensor, memory: Tensor) -> Tensor:
        return x + maybe_dropout(self.attn(self.norm(x), memory=memory))


class FeedForwardSublayer(Module):
    """Pre-norm residual FFN (GELU)."""

    def __init__(self, rng, d_model: int, d_hidden: int):
        self.norm = LayerNorm(d_model)
        self.ffn = FeedForward(rng, d_model, d_hidden)

    def __call__(self, x: Tensor) -> Tensor:
        return x + maybe_dropout(self.ffn(self.norm(x)))


class EncoderBlock(Module):
    """Self-attention + FFN (image encoder / plain text encoder)."""

    def __init__(self, rng, d_model: int, n_heads: int):
        self.self_attn = SelfAttentionSublayer(rng, d_model, n_heads)
        self.ffn = FeedForwardSublayer(rng, d_model, 4 * d_model)

    def __call__(self, x: Tensor) -> Tensor:
        return self.ffn(self.self_attn(x))


class GroundedBlock(Module):
    """Self-attention, then cross-attention onto image features, then FFN."""

    def __init__(self, rng, d_model: int, n_heads: int):
        self.self_attn = SelfAttentionSublayer(rng, d_model, n_heads)
        self.cross = CrossAttentionSublayer(rng, d_model, n_heads)
        self.ffn = FeedForwardSublayer(rng, d_model, 4 * d_model)

    def __call__(self, x: Tensor, memory: Tensor) -> Tensor:
        return self.ffn(self.cross(self.self_attn(x), memory))


class DecoderBlock(Module):
    """Causal self-attention with cross-attention/FFN borrowed from a twin block."""

    def __init__(self, rng, d_model: int, n_heads: int, shared: GroundedBlock):
        self.self_attn = SelfAttentionSublayer(rng, d_model, n_heads, causal=True)
        self.cross = shared.cross
        self.ffn = shared.ffn

    def __call__(self, x: Tensor, memory: Tensor) -> Tensor:
        return self.ffn(self.cross(self.self_attn(x), memory))
