"""Window partition/merge, both attention flavours, GDFN, and the
transformer block's structural properties."""

import numpy as np
import pytest

from dpcnet import ops
from dpcnet.attention import (
    GDFN,
    SCTB,
    AttentionConfig,
    ChannelWiseAttention,
    SpatialWindowAttention,
    l2_normalize,
    window_merge,
    window_partition,
)
from dpcnet.tensor import ConfigError, ShapeError, Tensor

F64 = np.float64


def test_window_roundtrip_exact():
    rng = np.random.default_rng(0)
    for h, w, ws in [(8, 8, 4), (6, 10, 4), (5, 5, 2), (4, 4, 4), (3, 7, 4)]:
        x = Tensor(rng.normal(size=(2, 3, h, w)))
        windows, layout = window_partition(x, ws)
        back = window_merge(windows, layout)
        assert back.shape == x.shape
        assert np.array_equal(back.data, x.data)


def test_window_partition_geometry():
    x = Tensor(np.zeros((2, 5, 7, 9)))
    windows, layout = window_partition(x, 4)
    assert layout.pad == (1, 3)
    assert layout.grid == (2, 3)
    assert windows.shape == (2 * 6, 5, 4, 4)


def test_window_merge_rejects_wrong_layout():
    x = Tensor(np.zeros((1, 2, 4, 4)))
    windows, layout = window_partition(x, 2)
    with pytest.raises(ShapeError):
        window_merge(Tensor(np.zeros((3, 2, 2, 2))), layout)


def test_window_content_is_contiguous_tile():
    x = np.arange(16, dtype=F64).reshape(1, 1, 4, 4)
    windows, _ = window_partition(Tensor(x), 2)
    assert np.array_equal(windows.data[0, 0], x[0, 0, :2, :2])
    assert np.array_equal(windows.data[1, 0], x[0, 0, :2, 2:])


def test_attention_config_validates_heads():
    with pytest.raises(ConfigError):
        AttentionConfig(3, "spatial").head_dim(8)
    assert AttentionConfig(2, "spatial").head_dim(8) == 4


def test_l2_normalize_unit_norm():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(2, 3, 5)))
    n = l2_normalize(x, axis=-1).data
    assert np.allclose(np.sum(n * n, axis=-1), 1.0, atol=1e-5)


def test_spatial_attention_matches_hand_rolled():
    """1 head, one 2x2 window (4 tokens): replay Q/K/V + softmax by hand
    from the layer's own weights."""
    rng = np.random.default_rng(2)
    swa = SpatialWindowAttention(2, 1, rng, dtype=F64)
    x = np.random.default_rng(3).normal(size=(1, 2, 2, 2))
    out = swa(Tensor(x)).data

    tokens = x.reshape(1, 2, 4).transpose(0, 2, 1)[0]  # (T=4, C=2)
    q = tokens @ swa.q.weight.data
    k = tokens @ swa.k.weight.data
    v = tokens @ swa.v.weight.data
    logits = q @ k.T / np.sqrt(2.0)
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    attn = e / e.sum(axis=-1, keepdims=True)
    ref = (attn @ v) @ swa.proj.weight.data + swa.proj.bias.data
    ref = ref.T.reshape(1, 2, 2, 2)
    assert np.allclose(out, ref, atol=1e-10)


def test_spatial_attention_convex_combination_bound():
    """With identity V and output projections the per-head output is a
    convex combination of the tokens, so it stays inside their range."""
    rng = np.random.default_rng(4)
    swa = SpatialWindowAttention(4, 2, rng, dtype=F64)
    swa.v.weight.data = np.eye(4)
    swa.proj.weight.data = np.eye(4)
    swa.proj.bias.data = np.zeros(4)
    x = np.random.default_rng(5).normal(size=(3, 4, 2, 2))
    out = swa(Tensor(x)).data
    lo = x.min(axis=(2, 3), keepdims=True)
    hi = x.max(axis=(2, 3), keepdims=True)
    assert np.all(out >= lo - 1e-10) and np.all(out <= hi + 1e-10)


def test_spatial_attention_constant_tokens_degenerate():
    """All tokens identical -> attention is exactly the per-token MLP."""
    rng = np.random.default_rng(6)
    swa = SpatialWindowAttention(4, 2, rng, dtype=F64)
    x = np.ones((1, 4, 2, 2)) * np.array([0.3, -1.2, 0.7, 2.0]).reshape(1, 4, 1, 1)
    out = swa(Tensor(x)).data
    token = x[0, :, 0, 0]
    ref = ((token @ swa.v.weight.data) @ swa.proj.weight.data) + swa.proj.bias.data
    assert np.allclose(out, ref.reshape(1, 4, 1, 1), atol=1e-10)


def test_spatial_attention_window_permutation_equivariance():
    """Windows are independent: permuting the window batch permutes outputs."""
    rng = np.random.default_rng(7)
    swa = SpatialWindowAttention(4, 2, rng, dtype=F64)
    x = np.random.default_rng(8).normal(size=(6, 4, 2, 2))
    perm = np.array([3, 1, 5, 0, 2, 4])
    out = swa(Tensor(x)).data
    out_p = swa(Tensor(x[perm])).data
    assert np.allclose(out[perm], out_p, atol=1e-12)


def test_channel_attention_rows_softmax_normalized():
    rng = np.random.default_rng(9)
    cwa = ChannelWiseAttention(8, 2, rng, dtype=F64)
    x = np.random.default_rng(10).normal(size=(2, 8, 4, 4))
    out = cwa(Tensor(x)).data
    assert out.shape == x.shape
    assert np.all(np.isfinite(out))


def test_channel_attention_spatial_extent_independent_weights():
    """The C x C similarity path has no spatially-sized parameters, so the
    same layer runs on any H x W."""
    rng = np.random.default_rng(11)
    cwa = ChannelWiseAttention(4, 2, rng, dtype=F64)
    for hw in [(4, 4), (8, 8), (2, 6)]:
        out = cwa(Tensor(np.random.default_rng(12).normal(size=(1, 4, *hw))))
        assert out.shape == (1, 4, *hw)


def test_gdfn_hidden_expansion():
    rng = np.random.default_rng(13)
    g = GDFN(16, rng)
    assert g.hidden == round(16 * 2.66)
    x = Tensor(np.random.default_rng(14).normal(size=(1, 16, 4, 4)).astype(np.float32))
    assert g(x).shape == x.shape


def test_sctb_residual_structure():
    """Zeroing the attention/FFN output projections makes the block the
    identity (pre-norm residual form)."""
    rng = np.random.default_rng(15)
    blk = SCTB(4, 2, 2, rng, dtype=F64)
    for name, p in blk.named_parameters():
        if any(s in name for s in ("proj", "project")):
            p.data[...] = 0.0
    x = np.random.default_rng(16).normal(size=(1, 4, 4, 4))
    assert np.allclose(blk(Tensor(x)).data, x, atol=1e-12)


def test_sctb_order_changes_output():
    x = np.random.default_rng(17).normal(size=(1, 4, 4, 4))
    a = SCTB(4, 2, 2, np.random.default_rng(18), order="spatial_first", dtype=F64)
    b = SCTB(4, 2, 2, np.random.default_rng(18), order="channel_first", dtype=F64)
    # identical weights, different composition order
    assert not np.allclose(a(Tensor(x)).data, b(Tensor(x)).data, atol=1e-8)


def test_sctb_requires_some_attention():
    with pytest.raises(ConfigError):
        SCTB(4, 2, 2, np.random.default_rng(19), spatial_sa=False, channel_sa=False)
    with pytest.raises(ConfigError):
        SCTB(4, 2, 2, np.random.default_rng(20), order="sideways")


def test_sctb_single_dimension_variants_run():
    x = Tensor(np.random.default_rng(21).normal(size=(1, 4, 4, 4)))
    s_only = SCTB(4, 2, 2, np.random.default_rng(22), channel_sa=False, dtype=F64)
    c_only = SCTB(4, 2, 2, np.random.default_rng(23), spatial_sa=False, dtype=F64)
    assert s_only(x).shape == x.shape
    assert c_only(x).shape == x.shape
