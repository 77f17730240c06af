"""Training losses: L1 + perceptual proxy + spectral L1, weighted
(1, 0.2, 0.05) by default."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fft, ops
from .nn import Conv2d, Module
from .tensor import DEFAULT_DTYPE, ShapeError, Tensor


@dataclass(frozen=True)
class LossWeights:
    l1: float = 1.0
    perceptual: float = 0.2
    fft: float = 0.05

    def __post_init__(self):
        if min(self.l1, self.perceptual, self.fft) < 0:
            raise ValueError("loss weights must be non-negative")


def _check_shapes(pred: Tensor, gt: Tensor, what: str) -> None:
    if pred.shape != gt.shape:
        raise ShapeError(f"{what}: shape mismatch {pred.shape} vs {gt.shape}")


def l1_loss(pred: Tensor, gt: Tensor) -> Tensor:
    _check_shapes(pred, gt, "l1_loss")
    return ops.mean(ops.absolute(pred - gt))


def fft_loss(pred: Tensor, gt: Tensor) -> Tensor:
    """Mean L1 distance between spectra, real and imaginary parts as
    independent coordinates."""
    _check_shapes(pred, gt, "fft_loss")
    return ops.mean(ops.absolute(fft.rfft2(pred) - fft.rfft2(gt)))


class PerceptualExtractor(Module):
    """Frozen random-weight two-stage conv feature extractor.

    Stands in for pretrained-backbone features: multi-scale feature
    matching with fixed, seeded weights (conv + relu + 2x2 mean pool per
    stage).  Weights never receive gradients.
    """

    def __init__(self, seed: int = 7, dtype=DEFAULT_DTYPE):
        rng = np.random.default_rng(seed)
        self.stage1 = Conv2d(3, 8, 3, rng, padding=1, dtype=dtype)
        self.stage2 = Conv2d(8, 16, 3, rng, padding=1, dtype=dtype)
        for p in self.parameters():
            p.requires_grad = False

    def features(self, x: Tensor) -> tuple[Tensor, Tensor]:
        f1 = ops.avg_pool2d(ops.relu(self.stage1(x)), 2)
        f2 = ops.avg_pool2d(ops.relu(self.stage2(f1)), 2)
        return f1, f2


def perceptual_proxy_loss(pred: Tensor, gt: Tensor, extractor: PerceptualExtractor) -> Tensor:
    _check_shapes(pred, gt, "perceptual_proxy_loss")
    p1, p2 = extractor.features(pred)
    g1, g2 = extractor.features(gt.detach())
    stage1 = ops.mean(ops.absolute(p1 - g1))
    stage2 = ops.mean(ops.absolute(p2 - g2))
    return (stage1 + stage2) * 0.5


def total_loss(
    pred: Tensor,
    gt: Tensor,
    weights: LossWeights = LossWeights(),
    extractor: PerceptualExtractor | None = None,
) -> Tensor:
    loss = weights.l1 * l1_loss(pred, gt)
    if weights.perceptual:
        if extractor is None:
            raise ValueError("perceptual weight > 0 requires an extractor")
        loss = loss + weights.perceptual * perceptual_proxy_loss(pred, gt, extractor)
    if weights.fft:
        loss = loss + weights.fft * fft_loss(pred, gt)
    return loss
