"""Gradient verification suite: every differentiable op class plus the
assembled network, checked against central finite differences in 64-bit
mode."""

from __future__ import annotations

import numpy as np

from . import fft, ops
from .attention import GDFN, SCTB, ChannelWiseAttention, SpatialWindowAttention
from .gradcheck import GradCheckReport, check_parameters, finite_difference_check
from .losses import LossWeights, PerceptualExtractor, l1_loss, total_loss
from .model import AFM, DPCNet, FFEBlock, ModelConfig, SFEBlock
from .tensor import Tensor

F64 = np.float64


def _rand(rng, shape):
    return Tensor(rng.normal(size=shape))


def op_checks(tol: float = 1e-4) -> list[GradCheckReport]:
    """One finite-difference report per op class, toy sizes, 64-bit."""
    rng = np.random.default_rng(11)
    w_mat = _rand(rng, (8, 5))
    w_conv = _rand(rng, (4, 3, 3, 3))
    w_dw = _rand(rng, (3, 1, 3, 3))
    mix = _rand(rng, (24, 4))
    spec_w = Tensor(rng.normal(size=(1, 1, 4, 4)))
    scale = Tensor(np.ones(3))
    shift = Tensor(np.zeros(3))

    x_img = _rand(rng, (2, 3, 4, 4))
    x_mat = _rand(rng, (6, 8))
    x_spec = _rand(rng, (1, 2, 4, 3))

    swa = SpatialWindowAttention(4, 2, np.random.default_rng(21), dtype=F64)
    cwa = ChannelWiseAttention(4, 2, np.random.default_rng(22), dtype=F64)
    gdfn = GDFN(4, np.random.default_rng(23), dtype=F64)
    sctb = SCTB(4, 2, 2, np.random.default_rng(24), dtype=F64)
    afm = AFM(4, np.random.default_rng(25), dtype=F64)
    ffe = FFEBlock(4, np.random.default_rng(26), dtype=F64)
    sfe = SFEBlock(
        4, 2, ModelConfig(base_channels=4, heads=(1, 1, 1), window=2),
        np.random.default_rng(27), dtype=F64,
    )
    extractor = PerceptualExtractor(dtype=F64)
    x4 = _rand(rng, (1, 4, 4, 4))
    gt3 = Tensor(rng.uniform(size=(1, 3, 8, 8)))
    x_other = _rand(rng, (1, 4, 4, 4))

    def scalar(t):
        return ops.sum_(ops.absolute(t))

    cases = [
        ("matmul", x_mat, lambda t: scalar(ops.matmul(t, w_mat))),
        ("conv2d", x_img, lambda t: scalar(ops.conv2d(t, w_conv, padding=1))),
        ("conv2d_depthwise", x_img, lambda t: scalar(ops.conv2d(t, w_dw, padding=1, groups=3))),
        ("softmax", x_img, lambda t: ops.sum_(ops.softmax(t.reshape((24, 4)), axis=-1) * mix)),
        ("layer_norm", x_img, lambda t: scalar(ops.layer_norm(t, scale, shift))),
        ("gelu", x_img, lambda t: ops.sum_(ops.gelu(t))),
        ("sigmoid", x_img, lambda t: scalar(ops.sigmoid(t))),
        ("abs", x_img, lambda t: ops.sum_(ops.absolute(t))),
        ("max_channel", x_img, lambda t: ops.sum_(ops.max_(t, axis=1))),
        ("avg_pool", x_img, lambda t: scalar(ops.avg_pool2d(t, 2))),
        ("upsample_nearest", x_img, lambda t: scalar(ops.upsample_nearest(t, 2))),
        ("rfft2", x_img, lambda t: scalar(fft.rfft2(t))),
        ("irfft2", x_spec, lambda t: ops.sum_(fft.irfft2(t, 4) * spec_w)),
        ("spatial_window_attention", x4, lambda t: scalar(swa(t))),
        ("channel_wise_attention", x4, lambda t: scalar(cwa(t))),
        ("gdfn", x4, lambda t: scalar(gdfn(t))),
        ("sctb", x4, lambda t: scalar(sctb(t))),
        ("afm_fuse", x4, lambda t: scalar(afm(t, x_other))),
        ("ffeblock", x4, lambda t: scalar(ffe(t))),
        ("sfeblock", x4, lambda t: scalar(sfe(t))),
        ("total_loss", gt3, lambda t: total_loss(ops.sigmoid(t), gt3.detach(), LossWeights(), extractor)),
    ]
    return [
        finite_difference_check(f, x, tol=tol, op_name=name, max_coords=48)
        for name, x, f in cases
    ]


def network_check(
    cfg: ModelConfig | None = None,
    input_hw: int = 16,
    tol: float = 1e-4,
    coords_per_param: int = 2,
) -> GradCheckReport:
    """End-to-end check: toy network + L1 loss, every parameter tensor."""
    cfg = cfg or ModelConfig(base_channels=8, blocks=(1, 1, 1), heads=(1, 2, 2), window=2)
    net = DPCNet(cfg, dtype=F64)
    rng = np.random.default_rng(3)
    x = Tensor(rng.uniform(size=(1, 3, input_hw, input_hw)))
    gt = Tensor(rng.uniform(size=(1, 3, input_hw, input_hw)))

    def loss_fn():
        return l1_loss(net(x), gt)

    named = list(net.named_parameters())
    errors = check_parameters(
        loss_fn, named, tol=tol, coords_per_param=coords_per_param,
        rng=np.random.default_rng(4),
    )
    worst = max(errors.values())
    checked = coords_per_param * len(named)
    return GradCheckReport(op="dpcnet_full", max_rel_error=worst, checked_coords=checked, tol=tol)


def run_gradcheck_suite(cfg: ModelConfig | None = None, tol: float = 1e-4) -> list[GradCheckReport]:
    reports = op_checks(tol=tol)
    reports.append(network_check(cfg, tol=tol))
    return reports
