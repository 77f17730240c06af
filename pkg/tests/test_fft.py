"""FFT correctness: naive DFT oracle, roundtrip, Parseval, linearity,
known transforms, and adjoint gradients."""

import numpy as np
import pytest

from dpcnet import fft, ops
from dpcnet.gradcheck import finite_difference_check
from dpcnet.tensor import ConfigError, ShapeError, Tensor


def naive_dft2(x):
    """O(N^2) direct evaluation of the unnormalized 2-D DFT."""
    h, w = x.shape[-2:]
    out = np.zeros(x.shape, dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            acc = 0.0
            for yy in range(h):
                for xx in range(w):
                    acc += x[..., yy, xx] * np.exp(-2j * np.pi * (u * yy / h + v * xx / w))
            out[..., u, v] = acc
    return out


def test_dft2_matches_naive_oracle_8x8():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(8, 8))
    got = fft.dft2_unnormalized(x)
    ref = naive_dft2(x)
    assert np.max(np.abs(got - ref)) < 1e-5


def test_dft2_matches_numpy():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 3, 16, 16))
    assert np.allclose(fft.dft2_unnormalized(x), np.fft.fft2(x), atol=1e-9)


def test_rfft2_irfft2_roundtrip():
    rng = np.random.default_rng(2)
    for h, w in [(8, 8), (4, 16), (16, 4), (2, 2)]:
        x = rng.normal(size=(2, 3, h, w))
        spec = fft.rfft2(Tensor(x))
        assert spec.shape == (2, 6, h, w // 2 + 1)
        back = fft.irfft2(spec, w).data
        assert np.max(np.abs(back - x)) < 1e-6


def test_parseval():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(1, 1, 16, 16))
    full = fft.dft2_unnormalized(x)
    space = np.sum(x**2)
    freq = np.sum(np.abs(full) ** 2) / (16 * 16)
    assert abs(space - freq) / space < 1e-4


def test_linearity():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(1, 2, 8, 8))
    b = rng.normal(size=(1, 2, 8, 8))
    lhs = fft.rfft2(Tensor(2.0 * a + 3.0 * b)).data
    rhs = 2.0 * fft.rfft2(Tensor(a)).data + 3.0 * fft.rfft2(Tensor(b)).data
    assert np.allclose(lhs, rhs, atol=1e-5)


def test_constant_image_spectrum():
    x = np.full((1, 1, 8, 8), 0.5)
    spec = fft.rfft2(Tensor(x)).data
    # DC bin = sum of all samples, every other bin zero
    assert np.isclose(spec[0, 0, 0, 0], 0.5 * 64)
    spec[0, 0, 0, 0] = 0.0
    assert np.max(np.abs(spec)) < 1e-10


def test_impulse_spectrum_flat():
    x = np.zeros((1, 1, 8, 8))
    x[0, 0, 0, 0] = 1.0
    spec = fft.rfft2(Tensor(x)).data
    assert np.allclose(spec[0, 0], 1.0)  # real part all ones
    assert np.allclose(spec[0, 1], 0.0, atol=1e-12)  # imag part zero


def test_spectrum_layout_real_then_imag():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(1, 2, 4, 4))
    spec = fft.rfft2(Tensor(x)).data
    ref = np.fft.fft2(x)[..., :3]
    assert np.allclose(spec[:, :2], ref.real, atol=1e-9)
    assert np.allclose(spec[:, 2:], ref.imag, atol=1e-9)


def test_non_pow2_rejected():
    with pytest.raises(ConfigError, match="12"):
        fft.rfft2(Tensor(np.zeros((1, 1, 12, 8))))
    with pytest.raises(ConfigError):
        fft.rfft2(Tensor(np.zeros((1, 1, 8, 6))))


def test_spectrum_shape_validation():
    with pytest.raises(ShapeError):  # odd channel count cannot split
        fft.irfft2(Tensor(np.zeros((1, 3, 4, 3))), 4)
    with pytest.raises(ShapeError):  # kept bins inconsistent with width
        fft.irfft2(Tensor(np.zeros((1, 2, 4, 4))), 4)


def test_rfft2_gradient_fd():
    rng = np.random.default_rng(6)
    x = Tensor(rng.normal(size=(1, 2, 4, 4)))
    w = rng.normal(size=(1, 4, 4, 3))
    r = finite_difference_check(
        lambda t: ops.sum_(fft.rfft2(t) * w), x, op_name="rfft2"
    )
    assert r.passed, str(r)


def test_irfft2_gradient_fd():
    rng = np.random.default_rng(7)
    s = Tensor(rng.normal(size=(1, 2, 4, 3)))
    w = rng.normal(size=(1, 1, 4, 4))
    r = finite_difference_check(
        lambda t: ops.sum_(fft.irfft2(t, 4) * w), s, op_name="irfft2"
    )
    assert r.passed, str(r)


def test_composed_fft_pipeline_gradient():
    rng = np.random.default_rng(8)
    x = Tensor(rng.normal(size=(1, 1, 8, 8)))
    r = finite_difference_check(
        lambda t: ops.sum_(ops.absolute(fft.irfft2(fft.rfft2(t) * 0.5, 8))),
        x, op_name="fft_pipeline",
    )
    assert r.passed, str(r)
