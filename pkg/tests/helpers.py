"""Shared test utilities: finite-difference gradient oracle."""

from __future__ import annotations

import numpy as np

from insightmine.tensor import Tensor, zero_grads

FD_H = 1e-5


def numeric_grad(f, x: np.ndarray, h: float = FD_H) -> np.ndarray:
    """Central finite differences of a scalar function over every entry of x."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f()
        x[idx] = orig - h
        fm = f()
        x[idx] = orig
        g[idx] = (fp - fm) / (2.0 * h)
        it.iternext()
    return g


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray, atol: float = 1e-7) -> float:
    """Worst relative disagreement, ignoring entries below atol on both sides."""
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    mask = diff > atol
    if not mask.any():
        return 0.0
    return float((diff[mask] / np.maximum(scale[mask], atol)).max())


def gradcheck(build_loss, leaves: list[Tensor], rtol: float = 1e-4, h: float = FD_H) -> float:
    """Compare backward() gradients against finite differences of build_loss().

    build_loss must re-run the forward pass from the leaves' current .data.
    Returns the worst relative error across all leaves.
    """
    zero_grads(leaves)
    loss = build_loss()
    loss.backward()
    worst = 0.0
    for leaf in leaves:
        assert leaf.grad is not None, "leaf did not receive a gradient"
        num = numeric_grad(lambda: build_loss().item(), leaf.data, h=h)
        err = max_rel_err(leaf.grad, num)
        worst = max(worst, err)
        assert err <= rtol, f"gradient mismatch: rel err {err:.3e} > {rtol:.0e}"
    return worst


def sampled_gradcheck(
    build_loss,
    leaves: list[Tensor],
    rng: np.random.Generator,
    n_entries: int = 4,
    rtol: float = 1e-4,
    h: float = FD_H,
) -> float:
    """Like gradcheck but finite-differences only a few entries per leaf."""
    zero_grads(leaves)
    loss = build_loss()
    loss.backward()
    worst = 0.0
    for leaf in leaves:
        assert leaf.grad is not None
        flat = leaf.data.reshape(-1)
        gflat = leaf.grad.reshape(-1)
        k = min(n_entries, flat.size)
        picks = rng.choice(flat.size, size=k, replace=False)
        for j in picks:
            orig = flat[j]
            flat[j] = orig + h
            fp = build_loss().item()
            flat[j] = orig - h
            fm = build_loss().item()
            flat[j] = orig
            num = (fp - fm) / (2.0 * h)
            err = max_rel_err(np.asarray([gflat[j]]), np.asarray([num]))
            worst = max(worst, err)
            assert err <= rtol, (
                f"gradient mismatch at entry {j}: analytic {gflat[j]:.6e} "
                f"vs numeric {num:.6e} (rel err {err:.3e})"
            )
    return worst
