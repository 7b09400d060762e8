"""Per-group optimizer steps.

Both steps consume the gradients accumulated on their parameter group and
zero them afterwards, so alternating updates of the two groups never see
each other's leftovers.
"""

from __future__ import annotations

import numpy as np


class MissingGradError(RuntimeError):
    """A trainable parameter in the group has no gradient buffer."""


def _check_grads(params):
    for p in params:
        if p.grad is None:
            raise MissingGradError(f"parameter {p.name!r} has no gradient")


def sgd_step(params, lr, weight_decay=0.0):
    """p <- p - lr * (grad + weight_decay * p), then zero the group's grads."""
    params = list(params)
    _check_grads(params)
    for p in params:
        g = p.grad if weight_decay == 0.0 else p.grad + weight_decay * p.tensor.data
        p.tensor.data = p.tensor.data - lr * g
        p.tensor.zero_grad()


class Adam:
    """Adam with bias correction; moment state kept per parameter name."""

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m = {p.name: np.zeros_like(p.data) for p in self.params}
        self._v = {p.name: np.zeros_like(p.data) for p in self.params}

    def step(self):
        _check_grads(self.params)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for p in self.params:
            g = p.grad
            m = self._m[p.name] = b1 * self._m[p.name] + (1.0 - b1) * g
            v = self._v[p.name] = b2 * self._v[p.name] + (1.0 - b2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.tensor.data = p.tensor.data - self.lr * update
            p.tensor.zero_grad()


def adam_step(optimizer):
    """Functional alias for one :class:`Adam` step."""
    optimizer.step()
