"""Adam with bias correction, the Noam warm-up schedule and parameter init."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import DEFAULT_DTYPE, Tensor


def noam_rate(step: int, warmup: int, base: float, model_dim: int) -> float:
    """base * d^-0.5 * min(step^-0.5, step * warmup^-1.5)"""
    if step < 1:
        raise ValueError(f"noam_rate: step must be >= 1, got {step}")
    if warmup < 1 or model_dim < 1:
        raise ValueError("noam_rate: warmup and model_dim must be positive")
    return base * model_dim ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)


@dataclass
class Adam:
    params: list[Tensor]
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in self.params]
            self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float) -> None:
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data -= update.astype(p.data.dtype)


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> Tensor:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(DEFAULT_DTYPE), requires_grad=True)


def embedding_init(rng: np.random.Generator, rows: int, dim: int) -> Tensor:
    return Tensor(rng.normal(0.0, dim ** -0.5, size=(rows, dim)).astype(DEFAULT_DTYPE),
                  requires_grad=True)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=DEFAULT_DTYPE), requires_grad=True)


def ones(shape) -> Tensor:
    return Tensor(np.ones(shape, dtype=DEFAULT_DTYPE), requires_grad=True)
