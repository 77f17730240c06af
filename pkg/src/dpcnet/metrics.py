"""Evaluation metrics: PSNR and SSIM on the BT.601 luminance channel.

Plain numpy; images are N x 3 x H x W (or Y: N x 1 x H x W) in [0, 1]
with unit dynamic range.  These are never differentiated through.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def _as_array(x) -> np.ndarray:
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def rgb_to_ycbcr_y(img) -> np.ndarray:
    """BT.601 luminance: Y = 16/255 + (65.481 R + 128.553 G + 24.966 B)/255."""
    a = _as_array(img)
    if a.ndim != 4 or a.shape[1] != 3:
        raise ShapeError(f"expected Nx3xHxW RGB, got {a.shape}")
    r, g, b = a[:, 0], a[:, 1], a[:, 2]
    y = 16.0 / 255.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0
    return y[:, None]


def _to_y(img) -> np.ndarray:
    a = _as_array(img)
    if a.ndim == 4 and a.shape[1] == 3:
        return rgb_to_ycbcr_y(a)
    if a.ndim == 4 and a.shape[1] == 1:
        return a
    raise ShapeError(f"expected Nx3xHxW or Nx1xHxW, got {a.shape}")


def psnr_y(pred, gt) -> float:
    """10*log10(1/MSE) on luminance; identical inputs give +inf."""
    p, g = _to_y(pred), _to_y(gt)
    if p.shape != g.shape:
        raise ShapeError(f"psnr_y shape mismatch: {p.shape} vs {g.shape}")
    mse = float(np.mean((p - g) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim_y(pred, gt) -> float:
    """Mean local SSIM with an 11x11 Gaussian window, sigma 1.5."""
    p, g = _to_y(pred), _to_y(gt)
    if p.shape != g.shape:
        raise ShapeError(f"ssim_y shape mismatch: {p.shape} vs {g.shape}")
    _, _, h, w = p.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ShapeError(
            f"image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    kernel = gaussian_window()
    values = []
    for xi, yi in zip(p.reshape(-1, h, w), g.reshape(-1, h, w)):
        wx = sliding_window_view(xi, (SSIM_WINDOW, SSIM_WINDOW))
        wy = sliding_window_view(yi, (SSIM_WINDOW, SSIM_WINDOW))
        mx = np.tensordot(wx, kernel, axes=([2, 3], [0, 1]))
        my = np.tensordot(wy, kernel, axes=([2, 3], [0, 1]))
        sxx = np.tensordot(wx * wx, kernel, axes=([2, 3], [0, 1])) - mx * mx
        syy = np.tensordot(wy * wy, kernel, axes=([2, 3], [0, 1])) - my * my
        sxy = np.tensordot(wx * wy, kernel, axes=([2, 3], [0, 1])) - mx * my
        num = (2 * mx * my + SSIM_C1) * (2 * sxy + SSIM_C2)
        den = (mx * mx + my * my + SSIM_C1) * (sxx + syy + SSIM_C2)
        values.append(np.mean(num / den))
    return float(np.mean(values))
