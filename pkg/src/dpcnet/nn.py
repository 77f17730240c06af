"""Minimal layer/module system on top of the tensor core.

Modules own named parameter tensors; `named_parameters()` walks the
attribute tree and yields dot-separated paths, which are also the keys of
the checkpoint format.
"""

from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from . import ops
from .tensor import DEFAULT_DTYPE, Tensor


def uniform_init(rng: np.random.Generator, shape, fan_in: int, dtype) -> Tensor:
    """uniform(-a, a) with a = sqrt(1/fan_in)."""
    a = float(np.sqrt(1.0 / fan_in))
    return Tensor(rng.uniform(-a, a, size=shape).astype(dtype), requires_grad=True)


class Module:
    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for attr, value in vars(self).items():
            path = f"{prefix}{attr}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{path}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Conv2d(Module):
    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        k: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
        groups: int = 1,
        bias: bool = True,
        dtype=DEFAULT_DTYPE,
    ):
        self.stride = stride
        self.padding = padding
        self.groups = groups
        fan_in = (in_ch // groups) * k * k
        self.weight = uniform_init(rng, (out_ch, in_ch // groups, k, k), fan_in, dtype)
        self.bias: Optional[Tensor] = (
            Tensor(np.zeros(out_ch, dtype=dtype), requires_grad=True) if bias else None
        )

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(
            x,
            self.weight,
            bias=self.bias,
            stride=self.stride,
            padding=self.padding,
            groups=self.groups,
        )


class Linear(Module):
    """Dense layer applied to the trailing axis."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        bias: bool = True,
        dtype=DEFAULT_DTYPE,
    ):
        self.weight = uniform_init(rng, (in_features, out_features), in_features, dtype)
        self.bias: Optional[Tensor] = (
            Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True)
            if bias
            else None
        )

    def forward(self, x: Tensor) -> Tensor:
        y = ops.matmul(x, self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y


class LayerNorm2d(Module):
    """Channel-axis layer norm per spatial position for NCHW tensors."""

    def __init__(self, channels: int, dtype=DEFAULT_DTYPE, eps: float = 1e-5):
        self.eps = eps
        self.scale = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.shift = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.scale, self.shift, eps=self.eps)
