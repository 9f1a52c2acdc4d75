"""Adam with bias correction."""

from __future__ import annotations

import numpy as np

from .layers import Parameter


class Adam:
    def __init__(self, params, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params: list[Parameter] = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def step(self) -> None:
        """Apply one update from the accumulated gradients, then zero them."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p in self.params:
            g = p.grad
            p.m *= b1
            p.m += (1 - b1) * g
            p.v *= b2
            p.v += (1 - b2) * g * g
            p.value -= self.lr * (p.m / c1) / (np.sqrt(p.v / c2) + self.eps)
            g[...] = 0.0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad[...] = 0.0


def adam_step(param: Parameter, t: int, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """Single-parameter update for step number t (1-based); zeroes the gradient afterwards."""
    opt = Adam([param], lr, beta1, beta2, eps)
    opt.t = t - 1
    opt.step()
