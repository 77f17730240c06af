"""Spatial-Channel Transformer Block and its pieces.

Two attention flavours over NCHW features:

* spatial window attention -- tokens are pixels inside non-overlapping
  ws x ws windows, similarity is token-by-token (T x T per window);
* channel attention -- tokens are whole channel maps, similarity is
  channel-by-channel (C x C per head group), computed on L2-normalized
  queries/keys with a learnable per-head temperature.

Both are wrapped with pre-norm residuals and gated feed-forward layers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .nn import Conv2d, LayerNorm2d, Linear, Module
from .tensor import ConfigError, DEFAULT_DTYPE, ShapeError, Tensor


@dataclass(frozen=True)
class WindowLayout:
    window: int
    grid: tuple[int, int]
    pad: tuple[int, int]  # (bottom, right)
    batch: int
    channels: int
    height: int  # original H before padding
    width: int


@dataclass(frozen=True)
class AttentionConfig:
    heads: int
    dimension: str  # "spatial" | "channel"

    def head_dim(self, channels: int) -> int:
        if channels % self.heads:
            raise ConfigError(
                f"channels {channels} not divisible by heads {self.heads}"
            )
        return channels // self.heads


def window_partition(x: Tensor, ws: int) -> tuple[Tensor, WindowLayout]:
    """Split NCHW into (N*nw, C, ws, ws) windows, zero-padding to fit."""
    if ws < 1:
        raise ConfigError(f"window size must be >= 1, got {ws}")
    n, c, h, w = x.shape
    pad_b = (-h) % ws
    pad_r = (-w) % ws
    if pad_b or pad_r:
        x = ops.pad2d(x, pad_b, pad_r)
    hp, wp = h + pad_b, w + pad_r
    gh, gw = hp // ws, wp // ws
    t = x.reshape((n, c, gh, ws, gw, ws)).transpose((0, 2, 4, 1, 3, 5))
    windows = t.reshape((n * gh * gw, c, ws, ws))
    layout = WindowLayout(ws, (gh, gw), (pad_b, pad_r), n, c, h, w)
    return windows, layout


def window_merge(windows: Tensor, layout: WindowLayout) -> Tensor:
    """Exact inverse of :func:`window_partition`, cropping any padding."""
    ws = layout.window
    gh, gw = layout.grid
    n, c = layout.batch, layout.channels
    if windows.shape != (n * gh * gw, c, ws, ws):
        raise ShapeError(
            f"window_merge layout mismatch: windows {windows.shape}, "
            f"layout expects {(n * gh * gw, c, ws, ws)}"
        )
    t = windows.reshape((n, gh, gw, c, ws, ws)).transpose((0, 3, 1, 4, 2, 5))
    x = t.reshape((n, c, gh * ws, gw * ws))
    if layout.pad != (0, 0):
        x = x[:, :, : layout.height, : layout.width]
    return x


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-8) -> Tensor:
    norm = ops.sqrt(ops.sum_(x * x, axis=axis, keepdims=True) + eps)
    return x / norm


class SpatialWindowAttention(Module):
    """Multi-head self-attention over the tokens of each window.

    Q, K, V come from plain per-token linear projections; attention is
    softmax(Q K^T / sqrt(d)) with d = C/heads, heads concatenated and
    passed through an output projection.
    """

    def __init__(self, channels: int, heads: int, rng, dtype=DEFAULT_DTYPE):
        cfg = AttentionConfig(heads, "spatial")
        cfg.head_dim(channels)  # validates divisibility
        self.cfg = cfg
        self.channels = channels
        self.q = Linear(channels, channels, rng, bias=False, dtype=dtype)
        self.k = Linear(channels, channels, rng, bias=False, dtype=dtype)
        self.v = Linear(channels, channels, rng, bias=False, dtype=dtype)
        self.proj = Linear(channels, channels, rng, dtype=dtype)

    def forward(self, windows: Tensor) -> Tensor:
        b, c, ws, _ = windows.shape
        h = self.cfg.heads
        d = c // h
        t = ws * ws
        tokens = windows.reshape((b, c, t)).transpose((0, 2, 1))  # (B, T, C)
        q = self.q(tokens).reshape((b, t, h, d)).transpose((0, 2, 1, 3))
        k = self.k(tokens).reshape((b, t, h, d)).transpose((0, 2, 1, 3))
        v = self.v(tokens).reshape((b, t, h, d)).transpose((0, 2, 1, 3))
        logits = ops.matmul(q, k.transpose((0, 1, 3, 2))) * (1.0 / np.sqrt(d))
        attn = ops.softmax(logits, axis=-1)
        out = ops.matmul(attn, v)  # (B, h, T, d)
        out = out.transpose((0, 2, 1, 3)).reshape((b, t, c))
        out = self.proj(out)
        return out.transpose((0, 2, 1)).reshape((b, c, ws, ws))


class ChannelWiseAttention(Module):
    """Transposed self-attention: the similarity map is C x C per head.

    Q/K/V are produced by 1x1 conv + 3x3 depthwise conv; Q and K rows are
    L2-normalized and the logits scaled by a learnable per-head
    temperature (initialized to 1) instead of 1/sqrt(d).
    """

    def __init__(self, channels: int, heads: int, rng, dtype=DEFAULT_DTYPE):
        cfg = AttentionConfig(heads, "channel")
        cfg.head_dim(channels)
        self.cfg = cfg
        self.channels = channels
        self.qkv = Conv2d(channels, 3 * channels, 1, rng, bias=False, dtype=dtype)
        self.qkv_dw = Conv2d(
            3 * channels, 3 * channels, 3, rng, padding=1, groups=3 * channels,
            bias=False, dtype=dtype,
        )
        self.temperature = Tensor(
            np.ones((1, heads, 1, 1), dtype=dtype), requires_grad=True
        )
        self.proj = Conv2d(channels, channels, 1, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        n, c, hh, ww = x.shape
        h = self.cfg.heads
        cg = c // h
        qkv = self.qkv_dw(self.qkv(x))
        q = qkv[:, :c].reshape((n, h, cg, hh * ww))
        k = qkv[:, c : 2 * c].reshape((n, h, cg, hh * ww))
        v = qkv[:, 2 * c :].reshape((n, h, cg, hh * ww))
        qn = l2_normalize(q, axis=-1)
        kn = l2_normalize(k, axis=-1)
        logits = ops.matmul(qn, kn.transpose((0, 1, 3, 2))) * self.temperature
        attn = ops.softmax(logits, axis=-1)  # (N, h, Cg, Cg)
        out = ops.matmul(attn, v).reshape((n, c, hh, ww))
        return self.proj(out)


class GDFN(Module):
    """Gated feed-forward: dual 1x1 expansions, 3x3 depthwise each, a
    gelu gate multiplying the branches, then 1x1 projection back."""

    def __init__(self, channels: int, rng, expansion: float = 2.66, dtype=DEFAULT_DTYPE):
        hidden = max(1, round(channels * expansion))
        self.hidden = hidden
        self.expand_gate = Conv2d(channels, hidden, 1, rng, dtype=dtype)
        self.expand_value = Conv2d(channels, hidden, 1, rng, dtype=dtype)
        self.dw_gate = Conv2d(hidden, hidden, 3, rng, padding=1, groups=hidden, dtype=dtype)
        self.dw_value = Conv2d(hidden, hidden, 3, rng, padding=1, groups=hidden, dtype=dtype)
        self.project = Conv2d(hidden, channels, 1, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        gate = self.dw_gate(self.expand_gate(x))
        value = self.dw_value(self.expand_value(x))
        return self.project(ops.gelu(gate) * value)


class SCTB(Module):
    """Spatial-Channel Transformer Block.

    Pre-norm residual units, each attention followed by its own GDFN:

        x += SWA(LN(x)); x += GDFN(LN(x)); x += CWA(LN(x)); x += GDFN(LN(x))

    `order="channel_first"` swaps the two attention units (the ordering
    ablation); disabling one attention drops that unit entirely.
    """

    def __init__(
        self,
        channels: int,
        heads: int,
        window: int,
        rng,
        spatial_sa: bool = True,
        channel_sa: bool = True,
        order: str = "spatial_first",
        dtype=DEFAULT_DTYPE,
    ):
        if order not in ("spatial_first", "channel_first"):
            raise ConfigError(f"unknown attention order {order!r}")
        if not (spatial_sa or channel_sa):
            raise ConfigError("SCTB needs at least one attention dimension enabled")
        self.window = window
        self.order = order
        self.use_spatial = spatial_sa
        self.use_channel = channel_sa
        if spatial_sa:
            self.norm_s = LayerNorm2d(channels, dtype=dtype)
            self.swa = SpatialWindowAttention(channels, heads, rng, dtype=dtype)
            self.norm_sf = LayerNorm2d(channels, dtype=dtype)
            self.ffn_s = GDFN(channels, rng, dtype=dtype)
        if channel_sa:
            self.norm_c = LayerNorm2d(channels, dtype=dtype)
            self.cwa = ChannelWiseAttention(channels, heads, rng, dtype=dtype)
            self.norm_cf = LayerNorm2d(channels, dtype=dtype)
            self.ffn_c = GDFN(channels, rng, dtype=dtype)

    def _spatial_unit(self, x: Tensor) -> Tensor:
        windows, layout = window_partition(self.norm_s(x), self.window)
        x = x + window_merge(self.swa(windows), layout)
        return x + self.ffn_s(self.norm_sf(x))

    def _channel_unit(self, x: Tensor) -> Tensor:
        x = x + self.cwa(self.norm_c(x))
        return x + self.ffn_c(self.norm_cf(x))

    def forward(self, x: Tensor) -> Tensor:
        units = []
        if self.use_spatial:
            units.append(self._spatial_unit)
        if self.use_channel:
            units.append(self._channel_unit)
        if self.order == "channel_first":
            units.reverse()
        for unit in units:
            x = unit(x)
        return x
