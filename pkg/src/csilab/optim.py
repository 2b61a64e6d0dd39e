"""Adam optimizer and the warm-up cosine-annealing learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor

__all__ = ["Adam", "CosineWarmupSchedule"]


class Adam:
    """Standard Adam with bias correction.

    Defaults: beta1=0.9, beta2=0.999, eps=1e-8.  Every parameter must have a
    populated gradient when :meth:`step` is called.
    """

    def __init__(self, params: list[Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float) -> None:
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ValueError(f"Adam.step: parameter {i} has no gradient")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


class CosineWarmupSchedule:
    """Linear ramp to ``lr_max`` over ``warmup`` epochs, then cosine decay.

    lr(0) = lr_min, lr(warmup) = lr_max, lr(total) = lr_min; continuous at
    the warm-up boundary and non-increasing afterwards.
    """

    def __init__(self, lr_min: float, lr_max: float, warmup: int, total: int):
        if not (0 < lr_min <= lr_max):
            raise ValueError("require 0 < lr_min <= lr_max")
        if not (0 <= warmup < total):
            raise ValueError("require 0 <= warmup < total")
        self.lr_min = lr_min
        self.lr_max = lr_max
        self.warmup = warmup
        self.total = total

    def lr(self, epoch: int) -> float:
        if not 0 <= epoch <= self.total:
            raise ValueError(f"epoch {epoch} outside [0, {self.total}]")
        if epoch < self.warmup:
            frac = epoch / self.warmup
            return self.lr_min + (self.lr_max - self.lr_min) * frac
        span = self.total - self.warmup
        phase = math.pi * (epoch - self.warmup) / span
        return self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + math.cos(phase))

    __call__ = lr
