"""Momentum SGD over an explicit parameter list."""

import numpy as np

from .engine import Gradients, Parameter, Tensor


class SGD:
    """Classic momentum update: v <- mu*v + g, p <- p - lr*v.

    Deterministic given identical gradients. A step aborts (leaving every
    parameter untouched) if any incoming gradient is non-finite.
    """

    def __init__(self, params, lr: float, momentum: float = 0.0):
        if lr < 0.0:
            raise ValueError(f"learning rate must be >= 0, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        self.params = [p for p in params if p.trainable]
        self.lr = lr
        self.momentum = momentum
        self._velocity = [np.zeros(p.value.shape) for p in self.params]

    def step(self, grads: Gradients) -> None:
        """Apply one update using gradients from a backward sweep."""
        fresh = []
        for p in self.params:
            g = grads[p.value]
            if not np.all(np.isfinite(g)):
                raise RuntimeError(
                    f"non-finite gradient for parameter of shape {p.value.shape}; "
                    "step aborted")
            fresh.append(g)
        for p, v, g in zip(self.params, self._velocity, fresh):
            p.grad = np.array(g)
            v *= self.momentum
            v += g
            p.value = Tensor(p.value.data - self.lr * v)


def collect_parameters(*groups) -> list[Parameter]:
    """Flatten parameter iterables, preserving order and dropping repeats."""
    seen = []
    ids = set()
    for group in groups:
        for p in group:
            if id(p) not in ids:
                ids.add(id(p))
                seen.append(p)
    return seen
