"""Dense float64 tensors with reverse-mode automatic differentiation.

Numpy arrays are the storage/kernel backend; the graph recording, backward
closures and every gradient rule live here. Training math runs in float64
(checkpoints downcast to float32, see checkpoint.py). Broadcasting is kept
deliberately small: same-shape elementwise, scalar-by-tensor, and a
trailing-axis bias add.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph recording (inference mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class ShapeError(ValueError):
    pass


class ContractError(RuntimeError):
    pass


class Tensor:
    """A dense row-major float64 array plus an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "_backward", "_prev")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad) and _GRAD_ENABLED
        self.grad: np.ndarray | None = None
        self._backward = None
        self._prev: tuple[Tensor, ...] = ()

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # -- graph plumbing ------------------------------------------------
    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Populate .grad on every requires_grad tensor reachable from a scalar.

        Repeated calls accumulate; use zero_grads() between independent
        backward passes.
        """
        if self.data.shape != ():
            raise ContractError(
                f"backward requires a scalar loss, got shape {self.shape}"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for child in node._prev:
                if id(child) not in visited:
                    stack.append((child, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / float(other))
        return mul(self, pow(other, -1.0))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes or None)


class Parameter(Tensor):
    """A named trainable tensor (dotted-path name assigned at registration)."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        # Parameters are trainable even when constructed under no_grad.
        self.requires_grad = True
        self.name = name


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _make(data: np.ndarray, parents: Sequence[Tensor]) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._prev = tuple(parents)
    return out


def zero_grads(tensors: Iterable[Tensor]) -> None:
    """Reset grads so a later backward equals a fresh one (no accumulation)."""
    for t in tensors:
        t.zero_grad()


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    """a + b for same shapes, a scalar operand, or a trailing-axis bias b."""
    a, b = _wrap(a), _wrap(b)
    if a.shape != b.shape:
        bias_ok = b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]
        scalar_ok = a.ndim == 0 or b.ndim == 0
        if not (bias_ok or scalar_ok):
            raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")
    out = _make(a.data + b.data, (a, b))
    if out.requires_grad:

        def _bwd(g):
            if a.requires_grad:
                a._accumulate(_reduce_to(g, a.shape))
            if b.requires_grad:
                b._accumulate(_reduce_to(g, b.shape))

        out._backward = _bwd
    return out


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape` (undo scalar/bias broadcast)."""
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    return g


def neg(a: Tensor) -> Tensor:
    a = _wrap(a)
    out = _make(-a.data, (a,))
    if out.requires_grad:
        out._backward = lambda g: a._accumulate(-g)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; one operand may be a scalar tensor."""
    a, b = _wrap(a), _wrap(b)
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    out = _make(a.data * b.data, (a, b))
    if out.requires_grad:

        def _bwd(g):
            if a.requires_grad:
                a._accumulate(_reduce_to(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_reduce_to(g * a.data, b.shape))

        out._backward = _bwd
    return out


def scale(a: Tensor, c: float) -> Tensor:
    a = _wrap(a)
    out = _make(a.data * c, (a,))
    if out.requires_grad:
        out._backward = lambda g: a._accumulate(g * c)
    return out


def pow(a: Tensor, e: float) -> Tensor:
    a = _wrap(a)
    out = _make(a.data**e, (a,))
    if out.requires_grad:
        out._backward = lambda g: a._accumulate(g * e * a.data ** (e - 1.0))
    return out


def exp(a: Tensor) -> Tensor:
    a = _wrap(a)
    out = _make(np.exp(a.data), (a,))
    if out.requires_grad:
        out._backward = lambda g: a._accumulate(g * out.data)
    return out


def log(a: Tensor) -> Tensor:
    a = _wrap(a)
    out = _make(np.log(a.data), (a,))
    if out.requires_grad:
        out._backward = lambda g: a._accumulate(g / a.data)
    return out


def tanh(a: Tensor) -> Tensor:
    a = _wrap(a)
    out = _make(np.tanh(a.data), (a,))
    if out.requires_grad:
        out._backward = lambda g: a._accumulate(g * (1.0 - out.data**2))
    return out


_GELU_C = math.sqrt(2.0 / math.pi)  # 0.7978845608...
_GELU_A = 0.044715


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation: 0.5x(1 + tanh(c(x + 0.044715 x^3)))."""
    a = _wrap(a)
    x = a.data
    inner = _GELU_C * (x + _GELU_A * x**3)
    t = np.tanh(inner)
    out = _make(0.5 * x * (1.0 + t), (a,))
    if out.requires_grad:

        def _bwd(g):
            sech2 = 1.0 - t**2
            d = 0.5 * (1.0 + t) + 0.5 * x * sech2 * _GELU_C * (1.0 + 3.0 * _GELU_A * x**2)
            a._accumulate(g * d)

        out._backward = _bwd
    return out


def clamp_min(a: Tensor, lo: float) -> Tensor:
    a = _wrap(a)
    out = _make(np.maximum(a.data, lo), (a,))
    if out.requires_grad:
        mask = (a.data > lo).astype(np.float64)
        out._backward = lambda g: a._accumulate(g * mask)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product, 2-D or batched with identical leading dims."""
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = _make(a.data @ b.data, (a, b))
    if out.requires_grad:

        def _bwd(g):
            if a.requires_grad:
                a._accumulate(g @ np.swapaxes(b.data, -1, -2))
            if b.requires_grad:
                b._accumulate(np.swapaxes(a.data, -1, -2) @ g)

        out._backward = _bwd
    return out


def reshape(a: Tensor, shape) -> Tensor:
    a = _wrap(a)
    out = _make(a.data.reshape(shape), (a,))
    if out.requires_grad:
        out._backward = lambda g: a._accumulate(g.reshape(a.shape))
    return out


def transpose(a: Tensor, axes=None) -> Tensor:
    a = _wrap(a)
    out = _make(np.transpose(a.data, axes), (a,))
    if out.requires_grad:
        inv = None if axes is None else np.argsort(axes)
        out._backward = lambda g: a._accumulate(np.transpose(g, inv))
    return out


def take(a: Tensor, idx) -> Tensor:
    """Indexing/gather; integer-array indices scatter-add on backward."""
    a = _wrap(a)
    if isinstance(idx, (list, np.ndarray)):
        idx = np.asarray(idx, dtype=np.intp)
    out = _make(a.data[idx], (a,))
    if out.requires_grad:

        def _bwd(g):
            acc = np.zeros_like(a.data)
            np.add.at(acc, idx, g)
            a._accumulate(acc)

        out._backward = _bwd
    return out


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [_wrap(p) for p in parts]
    out = _make(np.concatenate([p.data for p in parts], axis=axis), parts)
    if out.requires_grad:
        sizes = [p.shape[axis] for p in parts]
        offsets = np.cumsum([0] + sizes)

        def _bwd(g):
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                if p.requires_grad:
                    sl = [slice(None)] * g.ndim
                    sl[axis] = slice(lo, hi)
                    p._accumulate(g[tuple(sl)])

        out._backward = _bwd
    return out


def stack(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [_wrap(p) for p in parts]
    out = _make(np.stack([p.data for p in parts], axis=axis), parts)
    if out.requires_grad:

        def _bwd(g):
            slices = np.moveaxis(g, axis, 0)
            for p, gp in zip(parts, slices):
                if p.requires_grad:
                    p._accumulate(gp)

        out._backward = _bwd
    return out


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    out = _make(a.data.sum(axis=axis, keepdims=keepdims), (a,))
    if out.requires_grad:

        def _bwd(g):
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.shape).copy())
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                a._accumulate(np.broadcast_to(gg, a.shape).copy())

        out._backward = _bwd
    return out


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    n = a.size if axis is None else a.shape[axis]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# fused neural-net ops
# ---------------------------------------------------------------------------


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along `axis`; each slice sums to 1."""
    a = _wrap(a)
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax: axis {axis} invalid for shape {a.shape}")
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _make(y, (a,))
    if out.requires_grad:

        def _bwd(g):
            dot = (g * y).sum(axis=axis, keepdims=True)
            a._accumulate(y * (g - dot))

        out._backward = _bwd
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean/unit variance, then affine."""
    x, gain, bias = _wrap(x), _wrap(gain), _wrap(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain/bias shapes {gain.shape}/{bias.shape} "
            f"do not match last axis {d}"
        )
    if eps <= 0:
        raise ValueError("layer_norm: eps must be > 0")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = _make(xhat * gain.data + bias.data, (x, gain, bias))
    if out.requires_grad:

        def _bwd(g):
            if bias.requires_grad:
                bias._accumulate(g.reshape(-1, d).sum(axis=0))
            if gain.requires_grad:
                gain._accumulate((g * xhat).reshape(-1, d).sum(axis=0))
            if x.requires_grad:
                gy = g * gain.data
                m1 = gy.mean(axis=-1, keepdims=True)
                m2 = (gy * xhat).mean(axis=-1, keepdims=True)
                x._accumulate(inv * (gy - m1 - xhat * m2))

        out._backward = _bwd
    return out


def cross_entropy(logits: Tensor, targets, reduction: str = "mean") -> Tensor:
    """Mean (or sum) over rows of -log softmax(logits)[target]."""
    logits = _wrap(logits)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects n x V logits, got {logits.shape}")
    t = np.asarray(targets, dtype=np.intp)
    n, v = logits.shape
    if t.shape != (n,):
        raise ShapeError(f"cross_entropy: {n} rows but {t.shape} targets")
    if t.size and (t.min() < 0 or t.max() >= v):
        bad = t[(t < 0) | (t >= v)][0]
        raise IndexError(f"cross_entropy: target index {bad} out of range for V={v}")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    nll = -logp[np.arange(n), t]
    total = nll.sum()
    if reduction == "mean":
        total = total / n
    elif reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    out = _make(np.asarray(total), (logits,))
    if out.requires_grad:

        def _bwd(g):
            p = np.exp(logp)
            p[np.arange(n), t] -= 1.0
            if reduction == "mean":
                p /= n
            logits._accumulate(g * p)

        out._backward = _bwd
    return out


def dropout(a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when p == 0."""
    if p <= 0.0:
        return a
    a = _wrap(a)
    keep = (rng.random(a.shape) >= p) / (1.0 - p)
    out = _make(a.data * keep, (a,))
    if out.requires_grad:
        out._backward = lambda g: a._accumulate(g * keep)
    return out


def constant(data) -> Tensor:
    """A non-trainable tensor (masks, pixel patches)."""
    return Tensor(np.asarray(data, dtype=np.float64))
