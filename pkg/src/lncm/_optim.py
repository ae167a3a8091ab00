"""Shared Adam optimizer for the three trainers.  Internal module."""

from __future__ import annotations

import math

import numpy as np


class Adam:
    """Adaptive-moment gradient descent over a list of parameter arrays.

    Fully deterministic: state is plain float64 arrays updated in a fixed
    order, no threading.
    """

    def __init__(self, params: list[np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray],
             lr: float | None = None) -> None:
        if lr is None:
            lr = self.lr
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def cosine_lr(base: float, epoch: int, total_epochs: int, floor: float = 0.01) -> float:
    """Cosine decay from ``base`` to ``floor * base`` over the run."""
    if total_epochs <= 1:
        return base
    frac = 0.5 * (1.0 + math.cos(math.pi * epoch / (total_epochs - 1)))
    return base * (floor + (1.0 - floor) * frac)
