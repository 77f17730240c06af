"""Differentiable kernels over :class:`~dpcnet.tensor.Tensor`.

Every op builds the forward value with numpy and, when any input requires
gradients, attaches a backward closure that routes the output gradient to
its parents.  Convolution is explicit cross-correlation (im2col views +
einsum); nothing here uses FFT tricks.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ConfigError, ShapeError, Tensor, as_tensor, requires_any


def _result(data, parents, backward) -> Tensor:
    if requires_any(parents):
        return Tensor(data, requires_grad=True, parents=parents, backward=backward)
    return Tensor(data)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        a.accumulate(g)
        b.accumulate(g)

    return _result(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        a.accumulate(g * b.data)
        b.accumulate(g * a.data)

    return _result(out_data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data / b.data

    def backward(g):
        a.accumulate(g / b.data)
        b.accumulate(-g * a.data / (b.data * b.data))

    return _result(out_data, (a, b), backward)


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    out_data = a.data**p

    def backward(g):
        a.accumulate(g * p * a.data ** (p - 1))

    return _result(out_data, (a,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        a.accumulate(g * out_data)

    return _result(out_data, (a,), backward)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.sqrt(a.data)

    def backward(g):
        a.accumulate(g * 0.5 / out_data)

    return _result(out_data, (a,), backward)


def absolute(a) -> Tensor:
    """|x| with subgradient 0 at ties (sign(0) = 0)."""
    a = as_tensor(a)
    out_data = np.abs(a.data)

    def backward(g):
        a.accumulate(g * np.sign(a.data))

    return _result(out_data, (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.maximum(a.data, 0)

    def backward(g):
        a.accumulate(g * (a.data > 0))

    return _result(out_data, (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        a.accumulate(g * out_data * (1.0 - out_data))

    return _result(out_data, (a,), backward)


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a) -> Tensor:
    """tanh-approximation GELU; gelu(0) = 0 exactly."""
    a = as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out_data = 0.5 * x * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        dt = (1.0 - t**2) * dinner
        a.accumulate(g * (0.5 * (1.0 + t) + 0.5 * x * dt))

    return _result(out_data, (a,), backward)


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clamp with pass-through gradient inside [lo, hi], zero outside."""
    a = as_tensor(a)
    out_data = np.clip(a.data, lo, hi)

    def backward(g):
        a.accumulate(g * ((a.data >= lo) & (a.data <= hi)))

    return _result(out_data, (a,), backward)


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------


def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate(np.broadcast_to(g, a.shape))

    return _result(out_data, (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / out_data.size

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate(np.broadcast_to(g, a.shape) / count)

    return _result(out_data, (a,), backward)


def max_(a, axis: int, keepdims=False) -> Tensor:
    """Max along one axis; gradient routes to the first argmax (ties)."""
    a = as_tensor(a)
    out_data = a.data.max(axis=axis, keepdims=keepdims)
    amax = np.expand_dims(np.argmax(a.data, axis=axis), axis)

    def backward(g):
        g = np.asarray(g)
        if not keepdims:
            g = np.expand_dims(g, axis)
        mask = np.zeros_like(a.data)
        np.put_along_axis(mask, amax, 1.0, axis=axis)
        a.accumulate(mask * g)

    return _result(out_data, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.reshape(shape)

    def backward(g):
        a.accumulate(np.asarray(g).reshape(a.shape))

    return _result(out_data, (a,), backward)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    out_data = a.data.transpose(axes)
    inv = tuple(np.argsort(axes))

    def backward(g):
        a.accumulate(np.asarray(g).transpose(inv))

    return _result(out_data, (a,), backward)


def index(a, key) -> Tensor:
    """Basic slicing with scatter-add backward."""
    a = as_tensor(a)
    out_data = a.data[key]

    def backward(g):
        buf = np.zeros_like(a.data)
        buf[key] = np.asarray(g)
        a.accumulate(buf)

    return _result(out_data, (a,), backward)


def concat(tensors, axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(np.asarray(g), splits, axis=axis)):
            t.accumulate(piece)

    return _result(out_data, tuple(tensors), backward)


def pad2d(a, bottom: int, right: int) -> Tensor:
    """Zero-pad the spatial axes of an NCHW tensor on bottom/right."""
    a = as_tensor(a)
    out_data = np.pad(a.data, ((0, 0), (0, 0), (0, bottom), (0, right)))
    _, _, h, w = a.shape

    def backward(g):
        a.accumulate(np.asarray(g)[:, :, :h, :w])

    return _result(out_data, (a,), backward)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product on the trailing two axes, broadcasting batch axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents disagree: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        g = np.asarray(g)
        a.accumulate(g @ np.swapaxes(b.data, -1, -2))
        b.accumulate(np.swapaxes(a.data, -1, -2) @ g)

    return _result(out_data, (a, b), backward)


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis`."""
    a = as_tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        g = np.asarray(g)
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        a.accumulate(out_data * (g - dot))

    return _result(out_data, (a,), backward)


def layer_norm(x, scale, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the channel axis per spatial position (NCHW axis 1)."""
    x, scale, bias = as_tensor(x), as_tensor(scale), as_tensor(bias)
    mu = mean(x, axis=1, keepdims=True)
    centered = x - mu
    var = mean(centered * centered, axis=1, keepdims=True)
    inv = div(1.0, sqrt(var + eps))
    s = scale.reshape((1, -1, 1, 1))
    b = bias.reshape((1, -1, 1, 1))
    return centered * inv * s + b


# ---------------------------------------------------------------------------
# convolution and resampling
# ---------------------------------------------------------------------------


def conv2d(
    x,
    w,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """Cross-correlation of NCHW input `x` with OIkk weights `w`.

    `groups` splits channels for depthwise/grouped convs; bias is per
    output channel.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects rank-4 input/weights, got {x.shape}, {w.shape}")
    n, c, h, win = x.shape
    o, cg, kh, kw = w.shape
    if kh != kw or kh % 2 == 0:
        raise ConfigError(f"conv2d kernel must be odd square, got {kh}x{kw}")
    k = kh
    if c % groups or o % groups:
        raise ConfigError(f"channels {c}->{o} not divisible by groups={groups}")
    if cg != c // groups:
        raise ShapeError(
            f"weight input channels {cg} != {c}//groups for input {x.shape}"
        )
    if (h + 2 * padding - k) % stride or (win + 2 * padding - k) % stride:
        raise ConfigError(
            f"conv2d output extent not integral for H,W={h},{win} "
            f"k={k} stride={stride} padding={padding}"
        )
    ho = (h + 2 * padding - k) // stride + 1
    wo = (win + 2 * padding - k) // stride + 1

    cg_, og = c // groups, o // groups
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    # (G, N*Ho*Wo, Cg*k*k) im2col matrix, one GEMM per group via batched matmul
    cols_mat = np.ascontiguousarray(
        cols.reshape(n, groups, cg_, ho, wo, k, k).transpose(1, 0, 3, 4, 2, 5, 6)
    ).reshape(groups, n * ho * wo, cg_ * k * k)
    w_mat = w.data.reshape(groups, og, cg_ * k * k).transpose(0, 2, 1)
    out_data = np.ascontiguousarray(
        (cols_mat @ w_mat).reshape(groups, n, ho, wo, og).transpose(1, 0, 4, 2, 3)
    ).reshape(n, o, ho, wo)
    if bias is not None:
        out_data = out_data + bias.data.reshape(1, o, 1, 1)

    parents = (x, w) if bias is None else (x, w, bias)

    def backward(g):
        g = np.asarray(g).reshape(n, groups, og, ho, wo)
        g_mat = np.ascontiguousarray(g.transpose(1, 0, 3, 4, 2)).reshape(
            groups, n * ho * wo, og
        )
        gw = np.swapaxes(cols_mat, -1, -2) @ g_mat  # (G, Cg*k*k, Og)
        w.accumulate(np.swapaxes(gw, -1, -2).reshape(w.shape))
        dcols = (g_mat @ np.swapaxes(w_mat, -1, -2)).reshape(
            groups, n, ho, wo, cg_, k, k
        ).transpose(1, 0, 4, 2, 3, 5, 6)  # (N, G, Cg, Ho, Wo, k, k)
        dxp = np.zeros_like(xp).reshape(n, groups, cg_, *xp.shape[2:])
        for i in range(k):
            for j in range(k):
                dxp[
                    :, :, :, i : i + stride * ho : stride, j : j + stride * wo : stride
                ] += dcols[..., i, j]
        dxp = dxp.reshape(xp.shape)
        if padding:
            dxp = dxp[:, :, padding:-padding, padding:-padding]
        x.accumulate(dxp)
        if bias is not None:
            bias.accumulate(g.reshape(n, o, ho, wo).sum(axis=(0, 2, 3)))

    return _result(out_data, parents, backward)


def upsample_nearest(x, factor: int = 2) -> Tensor:
    x = as_tensor(x)
    out_data = x.data.repeat(factor, axis=2).repeat(factor, axis=3)
    n, c, h, w = x.shape

    def backward(g):
        g = np.asarray(g).reshape(n, c, h, factor, w, factor)
        x.accumulate(g.sum(axis=(3, 5)))

    return _result(out_data, (x,), backward)


def avg_pool2d(x, factor: int = 2) -> Tensor:
    """Non-overlapping mean pooling; spatial extents must divide `factor`."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    if h % factor or w % factor:
        raise ConfigError(f"avg_pool2d: extents {h}x{w} not divisible by {factor}")
    return mean(
        reshape(x, (n, c, h // factor, factor, w // factor, factor)), axis=(3, 5)
    )
