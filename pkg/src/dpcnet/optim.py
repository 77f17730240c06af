"""Adam with bias correction, cosine LR annealing, and the progressive
patch/batch schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import ConfigError, GraphError, Tensor


@dataclass(frozen=True)
class Stage:
    start_step: int
    patch_size: int
    batch_size: int


@dataclass(frozen=True)
class Schedule:
    total_steps: int
    lr_max: float = 3e-4
    lr_min: float = 1e-6
    stages: tuple[Stage, ...] = (Stage(0, 32, 4), Stage(150, 64, 2))

    def __post_init__(self):
        if self.total_steps < 0:
            raise ConfigError("total_steps must be >= 0")
        starts = [s.start_step for s in self.stages]
        if starts != sorted(starts) or (starts and starts[0] != 0):
            raise ConfigError("stages must be sorted by start_step and begin at 0")

    def stage_at(self, step: int) -> Stage:
        current = self.stages[0]
        for s in self.stages:
            if s.start_step <= step:
                current = s
        return current


def cosine_lr(step: int, sched: Schedule) -> float:
    """lr = lr_min + (lr_max - lr_min)(1 + cos(pi * step/T)) / 2, clamped
    to lr_min past the horizon."""
    t = sched.total_steps
    if t == 0 or step >= t:
        return sched.lr_min
    return sched.lr_min + 0.5 * (sched.lr_max - sched.lr_min) * (
        1.0 + math.cos(math.pi * step / t)
    )


class Adam:
    """Standard Adam over named parameters; state tensors live alongside
    each parameter and are updated in place between steps."""

    def __init__(
        self,
        named_params: list[tuple[str, Tensor]],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.named_params = list(named_params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.named_params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.named_params}

    def step(self, lr: float) -> None:
        for name, p in self.named_params:
            if p.grad is None:
                raise GraphError(f"missing gradient for parameter {name!r}")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in self.named_params:
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data -= (lr * update).astype(p.data.dtype)


def clip_grad_norm(named_params, max_norm: float = 1.0) -> float:
    """Global-norm gradient clip; returns the pre-clip norm."""
    total = 0.0
    for _, p in named_params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for _, p in named_params:
            if p.grad is not None:
                p.grad = (p.grad * scale).astype(p.grad.dtype)
    return norm
