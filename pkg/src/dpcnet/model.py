"""The dual-path deraining network: spatial + frequency feature blocks,
adaptive fusion, and the 3-level encoder-decoder around them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fft, ops
from .attention import SCTB
from .nn import Conv2d, Module
from .tensor import ConfigError, DEFAULT_DTYPE, ShapeError, Tensor


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters plus the ablation switches."""

    base_channels: int = 16
    blocks: tuple[int, int, int] = (2, 3, 4)
    heads: tuple[int, int, int] = (2, 4, 8)
    window: int = 8
    frequency_branch: bool = True
    fusion: str = "afm"  # "afm" | "concat"
    spatial_sa: bool = True
    channel_sa: bool = True
    sa_order: str = "spatial_first"  # | "channel_first"
    seed: int = 42

    levels: int = field(default=3, init=False)

    def validate(self) -> "ModelConfig":
        if len(self.blocks) != 3 or len(self.heads) != 3:
            raise ConfigError("blocks and heads must list 3 levels")
        for lvl, h in enumerate(self.heads):
            c = self.base_channels * (2**lvl)
            if c % h:
                raise ConfigError(
                    f"level {lvl}: channels {c} not divisible by heads {h}"
                )
        if self.fusion not in ("afm", "concat"):
            raise ConfigError(f"unknown fusion mode {self.fusion!r}")
        if self.sa_order not in ("spatial_first", "channel_first"):
            raise ConfigError(f"unknown sa_order {self.sa_order!r}")
        if not (self.spatial_sa or self.channel_sa):
            raise ConfigError("at least one attention dimension must stay enabled")
        return self

    def channels_at(self, level: int) -> int:
        return self.base_channels * (2**level)


class SpatialGate(Module):
    """H x W map in (0,1) from mean||max channel pooling + 7x7 conv."""

    def __init__(self, rng, dtype=DEFAULT_DTYPE):
        self.conv = Conv2d(2, 1, 7, rng, padding=3, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        pooled = ops.concat(
            [x.mean(axis=1, keepdims=True), ops.max_(x, axis=1, keepdims=True)],
            axis=1,
        )
        return ops.sigmoid(self.conv(pooled))


class ChannelGate(Module):
    """C x 1 x 1 map in (0,1) from global average pooling + bottleneck."""

    def __init__(self, channels: int, rng, reduction: int = 4, dtype=DEFAULT_DTYPE):
        mid = max(1, channels // reduction)
        self.squeeze = Conv2d(channels, mid, 1, rng, dtype=dtype)
        self.excite = Conv2d(mid, channels, 1, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        pooled = x.mean(axis=(2, 3), keepdims=True)
        return ops.sigmoid(self.excite(ops.relu(self.squeeze(pooled))))


class AFM(Module):
    """Adaptive fusion: cross-reweight two branches by each other's
    spatial and channel gates, alternately.

        F1 = conv(b1 * SA(b2) + b2 * CA(b1))
        F2 = conv(b1 * CA(b2) + b2 * SA(b1))
        F  = conv(concat(F1, F2))
    """

    def __init__(self, channels: int, rng, dtype=DEFAULT_DTYPE):
        self.sa = SpatialGate(rng, dtype=dtype)
        self.ca = ChannelGate(channels, rng, dtype=dtype)
        self.conv1 = Conv2d(channels, channels, 3, rng, padding=1, dtype=dtype)
        self.conv2 = Conv2d(channels, channels, 3, rng, padding=1, dtype=dtype)
        self.merge = Conv2d(2 * channels, channels, 1, rng, dtype=dtype)

    def forward(self, b1: Tensor, b2: Tensor) -> Tensor:
        if b1.shape != b2.shape:
            raise ShapeError(f"afm branch shapes differ: {b1.shape} vs {b2.shape}")
        f1 = self.conv1(b1 * self.sa(b2) + b2 * self.ca(b1))
        f2 = self.conv2(b1 * self.ca(b2) + b2 * self.sa(b1))
        return self.merge(ops.concat([f1, f2], axis=1))


class ConcatFuse(Module):
    """Plain concat + 1x1 conv; the fusion ablation baseline."""

    def __init__(self, channels: int, rng, dtype=DEFAULT_DTYPE):
        self.merge = Conv2d(2 * channels, channels, 1, rng, dtype=dtype)

    def forward(self, b1: Tensor, b2: Tensor) -> Tensor:
        if b1.shape != b2.shape:
            raise ShapeError(f"fuse branch shapes differ: {b1.shape} vs {b2.shape}")
        return self.merge(ops.concat([b1, b2], axis=1))


def make_fusion(kind: str, channels: int, rng, dtype=DEFAULT_DTYPE) -> Module:
    return (
        AFM(channels, rng, dtype=dtype)
        if kind == "afm"
        else ConcatFuse(channels, rng, dtype=dtype)
    )


class SFEBlock(Module):
    """Asymmetric dual-path spatial block: transformer path (SCTB) plus a
    two-conv locality path, fused adaptively."""

    def __init__(self, channels: int, heads: int, cfg: ModelConfig, rng, dtype=DEFAULT_DTYPE):
        self.sctb = SCTB(
            channels,
            heads,
            cfg.window,
            rng,
            spatial_sa=cfg.spatial_sa,
            channel_sa=cfg.channel_sa,
            order=cfg.sa_order,
            dtype=dtype,
        )
        self.local1 = Conv2d(channels, channels, 3, rng, padding=1, dtype=dtype)
        self.local2 = Conv2d(channels, channels, 3, rng, padding=1, dtype=dtype)
        self.fuse = make_fusion(cfg.fusion, channels, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        global_path = self.sctb(x)
        local_path = self.local2(ops.relu(self.local1(ops.relu(x))))
        return self.fuse(global_path, local_path)


class FFEBlock(Module):
    """Frequency branch: 1x1 conv, per-channel real FFT, pointwise MLP on
    stacked real/imag channels, inverse FFT, 1x1 conv, residual."""

    def __init__(self, channels: int, rng, dtype=DEFAULT_DTYPE):
        self.pre = Conv2d(channels, channels, 1, rng, dtype=dtype)
        self.spec1 = Conv2d(2 * channels, 2 * channels, 1, rng, dtype=dtype)
        self.spec2 = Conv2d(2 * channels, 2 * channels, 1, rng, dtype=dtype)
        self.post = Conv2d(channels, channels, 1, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        width = x.shape[-1]
        spec = fft.rfft2(self.pre(x))
        spec = self.spec2(ops.relu(self.spec1(spec)))
        return x + self.post(fft.irfft2(spec, width))


class DDBlock(Module):
    """Dual-domain block: spatial and frequency paths fused, plus a
    residual from the input.  With the frequency branch ablated the block
    reduces to the spatial path alone (still residual)."""

    def __init__(self, channels: int, heads: int, cfg: ModelConfig, rng, dtype=DEFAULT_DTYPE):
        self.sfe = SFEBlock(channels, heads, cfg, rng, dtype=dtype)
        self.use_frequency = cfg.frequency_branch
        if cfg.frequency_branch:
            self.ffe = FFEBlock(channels, rng, dtype=dtype)
            self.fuse = make_fusion(cfg.fusion, channels, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        s = self.sfe(x)
        if not self.use_frequency:
            return s + x
        f = self.ffe(x)
        return self.fuse(s, f) + x


class Downsample(Module):
    """2x2 mean pool then 3x3 conv doubling channels.

    (A strided odd-kernel conv cannot produce integral extents on even
    inputs under this conv contract, hence pool + conv.)
    """

    def __init__(self, channels: int, rng, dtype=DEFAULT_DTYPE):
        self.conv = Conv2d(channels, 2 * channels, 3, rng, padding=1, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(ops.avg_pool2d(x, 2))


class Upsample(Module):
    """Nearest-neighbour 2x upsample then 3x3 conv halving channels."""

    def __init__(self, channels: int, rng, dtype=DEFAULT_DTYPE):
        self.conv = Conv2d(channels, channels // 2, 3, rng, padding=1, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(ops.upsample_nearest(x, 2))


class DPCNet(Module):
    """3-level encoder-decoder of dual-domain blocks with skip
    connections and a global residual (the head predicts a correction
    added to the rainy input)."""

    def __init__(self, cfg: ModelConfig, dtype=DEFAULT_DTYPE):
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        c0, c1, c2 = (cfg.channels_at(lvl) for lvl in range(3))

        self.stem = Conv2d(3, c0, 3, rng, padding=1, dtype=dtype)
        self.enc0 = [DDBlock(c0, cfg.heads[0], cfg, rng, dtype=dtype) for _ in range(cfg.blocks[0])]
        self.down0 = Downsample(c0, rng, dtype=dtype)
        self.enc1 = [DDBlock(c1, cfg.heads[1], cfg, rng, dtype=dtype) for _ in range(cfg.blocks[1])]
        self.down1 = Downsample(c1, rng, dtype=dtype)
        self.bottleneck = [DDBlock(c2, cfg.heads[2], cfg, rng, dtype=dtype) for _ in range(cfg.blocks[2])]
        self.up1 = Upsample(c2, rng, dtype=dtype)
        self.skip1 = Conv2d(2 * c1, c1, 1, rng, dtype=dtype)
        self.dec1 = [DDBlock(c1, cfg.heads[1], cfg, rng, dtype=dtype) for _ in range(cfg.blocks[1])]
        self.up0 = Upsample(c1, rng, dtype=dtype)
        self.skip0 = Conv2d(2 * c0, c0, 1, rng, dtype=dtype)
        self.dec0 = [DDBlock(c0, cfg.heads[0], cfg, rng, dtype=dtype) for _ in range(cfg.blocks[0])]
        self.head = Conv2d(c0, 3, 3, rng, padding=1, dtype=dtype)

    @staticmethod
    def check_extents(h: int, w: int) -> None:
        for name, n in (("height", h), ("width", w)):
            if n < 4 or n % 4:
                raise ConfigError(f"{name} {n} must be divisible by 4")
            if n & (n - 1):
                raise ConfigError(
                    f"{name} {n} must be a power of two for the frequency branch"
                )

    def forward(self, rainy: Tensor) -> Tensor:
        if rainy.ndim != 4 or rainy.shape[1] != 3:
            raise ShapeError(f"expected Nx3xHxW input, got {rainy.shape}")
        _, _, h, w = rainy.shape
        self.check_extents(h, w)

        x = self.stem(rainy)
        for blk in self.enc0:
            x = blk(x)
        skip0 = x
        x = self.down0(x)
        for blk in self.enc1:
            x = blk(x)
        skip1 = x
        x = self.down1(x)
        for blk in self.bottleneck:
            x = blk(x)
        x = self.skip1(ops.concat([self.up1(x), skip1], axis=1))
        for blk in self.dec1:
            x = blk(x)
        x = self.skip0(ops.concat([self.up0(x), skip0], axis=1))
        for blk in self.dec0:
            x = blk(x)
        return rainy + self.head(x)

    def derain(self, rainy: Tensor) -> Tensor:
        """Inference entry point: forward pass clamped to [0,1]."""
        return ops.clamp(self.forward(rainy), 0.0, 1.0)
