"""AdamW with decoupled weight decay, plus a cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import Parameter


@dataclass
class AdamWState:
    """Per-run optimizer state; m/v moment shapes mirror their parameters."""

    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.05
    step: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)


class AdamW:
    """Decoupled-weight-decay Adam over named parameters.

    Aliased parameters (several names, one storage) are updated once per step.
    """

    def __init__(
        self,
        params: list[Parameter],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.05,
    ):
        self.lr = lr
        self.state = AdamWState(betas=betas, eps=eps, weight_decay=weight_decay)
        self._params: list[Parameter] = []
        seen: set[int] = set()
        for p in params:
            if id(p) in seen:
                continue
            seen.add(id(p))
            self._params.append(p)

    def zero_grads(self) -> None:
        for p in self._params:
            p.zero_grad()

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        st = self.state
        b1, b2 = st.betas
        st.step += 1
        bc1 = 1.0 - b1**st.step
        bc2 = 1.0 - b2**st.step
        for p in self._params:
            if p.grad is None:
                continue
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(
                    f"non-finite gradient in parameter {p.name!r} at step {st.step}"
                )
            key = id(p)
            if key not in st.m:
                st.m[key] = np.zeros_like(p.data)
                st.v[key] = np.zeros_like(p.data)
            m, v = st.m[key], st.v[key]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            mhat = m / bc1
            vhat = v / bc2
            # decoupled decay acts on the parameter itself, not the gradient
            p.data -= lr * (mhat / (np.sqrt(vhat) + st.eps) + st.weight_decay * p.data)


def cosine_lr(step: int, total_steps: int, lr_init: float, lr_min: float) -> float:
    """lr_min + 0.5 (lr_init - lr_min)(1 + cos(pi step/total)); clamps past the end."""
    if lr_min > lr_init:
        raise ValueError("cosine_lr: lr_min must be <= lr_init")
    if step < 0:
        raise ValueError("cosine_lr: step must be >= 0")
    if total_steps <= 0 or step >= total_steps:
        return lr_min
    return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))
