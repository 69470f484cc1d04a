"""Sinkhorn normalization with an explicit tape for exact backprop.

Works on a single ``(N, N)`` matrix or a batch ``(..., N, N)``.  Each
iteration normalizes columns first and rows second, so the output is
exactly row-stochastic (up to rounding).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DimensionError, DomainError


@dataclass(frozen=True)
class SinkhornConfig:
    iterations: int = 5
    epsilon: float = 1e-12

    def __post_init__(self):
        if int(self.iterations) < 1:
            raise ValueError("iterations must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")


@dataclass
class SinkhornTape:
    # inputs to every normalization step, in order (col, row, col, row, ...)
    inputs: list
    # guarded denominators matching ``inputs``
    sums: list
    shape: tuple


def _as_float(a) -> np.ndarray:
    a = np.asarray(a)
    return a if a.dtype in (np.float32, np.float64) else a.astype(np.float64)


def _check_square(m: np.ndarray):
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise DimensionError(f"expected square matrices, got shape {m.shape}")


def sinkhorn_forward(m, cfg: SinkhornConfig = SinkhornConfig(), *, trace=None):
    """Return ``(dsm, tape)`` after ``cfg.iterations`` column/row pairs.

    If ``trace`` is a list, the residual after every pair is appended to it.
    """
    x = _as_float(m)
    _check_square(x)
    if not np.isfinite(x).all():
        raise DomainError("non-finite entry in Sinkhorn input")
    if (x < 0).any():
        raise DomainError("negative entry in Sinkhorn input")

    inputs, sums = [], []
    for _ in range(cfg.iterations):
        s = np.maximum(x.sum(axis=-2, keepdims=True), cfg.epsilon)
        inputs.append(x)
        sums.append(s)
        x = x / s
        s = np.maximum(x.sum(axis=-1, keepdims=True), cfg.epsilon)
        inputs.append(x)
        sums.append(s)
        x = x / s
        if trace is not None:
            trace.append(dsm_residual(x))
    return x, SinkhornTape(inputs, sums, x.shape)


def sinkhorn(m, cfg: SinkhornConfig = SinkhornConfig()) -> np.ndarray:
    return sinkhorn_forward(m, cfg)[0]


def sinkhorn_backward(tape: SinkhornTape, grad_out) -> np.ndarray:
    """Gradient of the loss w.r.t. the Sinkhorn input given ``dL/d(output)``."""
    g = _as_float(grad_out)
    if g.shape != tape.shape:
        raise DimensionError(f"gradient shape {g.shape} != output shape {tape.shape}")
    # steps alternate column (axis -2) and row (axis -1) sums
    for step in range(len(tape.inputs) - 1, -1, -1):
        axis = -2 if step % 2 == 0 else -1
        x, s = tape.inputs[step], tape.sums[step]
        inner = (g * x).sum(axis=axis, keepdims=True) / (s * s)
        # the max() guard is flat below epsilon; the sum term drops out there
        active = x.sum(axis=axis, keepdims=True) >= s
        g = g / s - np.where(active, inner, 0.0)
    return g


def dsm_residual(d) -> float | np.ndarray:
    """Squared distance of row and column sums from 1 (per matrix for batches)."""
    d = np.asarray(d, dtype=np.float64)
    _check_square(d)
    r = ((d.sum(axis=-1) - 1.0) ** 2).sum(axis=-1)
    c = ((d.sum(axis=-2) - 1.0) ** 2).sum(axis=-1)
    out = r + c
    return float(out) if out.ndim == 0 else out
