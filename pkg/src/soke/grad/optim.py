"""Adam-style optimizer with a cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .tensor import Tensor


@dataclass
class CosineSchedule:
    """Cosine decay from base_lr to min_lr over total_steps, then flat."""

    base_lr: float
    total_steps: int
    min_lr: float = 0.0

    def lr(self, step: int) -> float:
        if self.total_steps <= 0:
            return self.base_lr
        t = min(step, self.total_steps) / self.total_steps
        return self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + math.cos(math.pi * t))


@dataclass
class OptimizerState:
    """First/second moment accumulators plus the step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    schedule: CosineSchedule | None = None


class Adam:
    """AdamW-flavored first-order optimizer over a fixed parameter list."""

    def __init__(
        self,
        params: list[Tensor],
        lr: float = 2e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
        schedule: CosineSchedule | None = None,
    ):
        if not params:
            raise ConfigError("optimizer needs at least one parameter")
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = OptimizerState(
            m=[np.zeros(p.shape, dtype=p.data.dtype) for p in params],
            v=[np.zeros(p.shape, dtype=p.data.dtype) for p in params],
            schedule=schedule,
        )

    def current_lr(self) -> float:
        if self.state.schedule is not None:
            return self.state.schedule.lr(self.state.step)
        return self.lr

    def step(self) -> None:
        lr = self.current_lr()
        self.state.step += 1
        t = self.state.step
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self.state.m, self.state.v):
            g = p.grad
            if g is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data = (p.data - lr * update).astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
