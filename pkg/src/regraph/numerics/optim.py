"""RMSProp with decoupled L2 weight decay.

Update per parameter:
    acc  <- decay_rate * acc + (1 - decay_rate) * grad^2
    p    <- p - lr * (grad + weight_decay * p) / (sqrt(acc) + smoothing)

The squared-gradient accumulator sees the raw gradient only; weight decay
enters the numerator of the step. Grads are cleared after the step.
"""

from __future__ import annotations

import numpy as np

from .tensor import DiffTensor

__all__ = ["RmsProp"]


class RmsProp:
    def __init__(self, params: list[DiffTensor], learning_rate: float = 1e-3,
                 weight_decay: float = 1e-4, decay_rate: float = 0.99,
                 smoothing: float = 1e-8):
        if learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        self.params = list(params)
        self.learning_rate = float(learning_rate)
        self.weight_decay = float(weight_decay)
        self.decay_rate = float(decay_rate)
        self.smoothing = float(smoothing)
        self.sq_avg = [np.zeros_like(p.values) for p in self.params]

    def step(self) -> None:
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ValueError(f"rmsprop step: parameter {i} has no gradient")
            g = p.grad
            acc = self.sq_avg[i]
            acc *= self.decay_rate
            acc += (1.0 - self.decay_rate) * g * g
            step = (g + self.weight_decay * p.values) / (np.sqrt(acc) + self.smoothing)
            p.values -= self.learning_rate * step
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
