"""Finite-difference verification of analytic gradients.

Only meaningful in 64-bit element mode: central differences with step
around 1e-5 drown in float32 rounding error.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, backward


class PrecisionError(TypeError):
    """Gradient checking attempted outside 64-bit element mode."""


def grad_check(fn, x, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    ``fn`` maps the tensor ``x`` to a scalar tensor, rebuilding a fresh
    graph on each call (it is invoked 1 + 2 * x.size times).  The error at
    each coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|);
    the max over coordinates is returned.  At non-smooth points (relu
    kinks, 1-norm zeros) the returned error is large rather than raising --
    callers exclude those points by construction.
    """
    if x.data.dtype != np.float64:
        raise PrecisionError(f"grad_check requires float64 inputs, got {x.data.dtype.name}")
    x.requires_grad = True
    x.grad = None
    out = fn(x)
    if out.data.size != 1:
        raise ShapeError(f"grad_check: fn must be scalar-valued, got shape {out.shape}")
    backward(out)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    x.grad = None

    numeric = np.zeros_like(analytic)
    for idx in np.ndindex(x.data.shape):
        orig = x.data[idx]
        x.data[idx] = orig + eps
        hi = fn(x).data.item()
        x.data[idx] = orig - eps
        lo = fn(x).data.item()
        x.data[idx] = orig
        numeric[idx] = (hi - lo) / (2.0 * eps)

    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))
