"""Real 2-D FFT over the spatial axes, per channel, with gradients.

The core is an iterative radix-2 Cooley-Tukey transform applied along rows
then columns, so spatial extents must be powers of two (the patching
policy upstream guarantees this).  Convention: unnormalized forward DFT,
1/(H*W) inverse.

Spectrum layout: a real rank-4 tensor of shape (N, 2C, H, W//2 + 1) where
channel c holds the real part of input channel c and channel C + c the
imaginary part.  Only the non-redundant half of the last axis is kept
(Hermitian symmetry of real input).  Stacking real/imag as channels lets
the frequency branch run ordinary 1x1 convs on spectra.
"""

from __future__ import annotations

import numpy as np

from .tensor import ConfigError, ShapeError, Tensor, as_tensor, requires_any


def _check_pow2(n: int, what: str) -> None:
    if n < 1 or n & (n - 1):
        raise ConfigError(f"{what} extent {n} is not a power of two")


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _fft_last(a: np.ndarray) -> np.ndarray:
    """Radix-2 DIT FFT along the last axis (length a power of two)."""
    n = a.shape[-1]
    a = np.asarray(a, dtype=np.complex128)
    if n == 1:
        return a.copy()
    a = a[..., _bit_reverse_indices(n)]
    m = 2
    while m <= n:
        half = m // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / m)
        v = a.reshape(a.shape[:-1] + (n // m, m))
        even = v[..., :half]
        odd = v[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(a.shape)
        m *= 2
    return a


def dft2_unnormalized(x: np.ndarray) -> np.ndarray:
    """Unnormalized 2-D DFT over the trailing two axes."""
    _check_pow2(x.shape[-1], "width")
    _check_pow2(x.shape[-2], "height")
    y = _fft_last(x)
    y = np.swapaxes(_fft_last(np.swapaxes(y, -1, -2)), -1, -2)
    return y


def idft2_unnormalized(x: np.ndarray) -> np.ndarray:
    return np.conj(dft2_unnormalized(np.conj(x)))


def _split_spectrum(s: Tensor) -> tuple[np.ndarray, int]:
    """Stacked-channel spectrum -> complex array (N, C, H, W//2+1)."""
    if s.ndim != 4 or s.shape[1] % 2:
        raise ShapeError(f"spectrum layout mismatch: shape {s.shape}")
    c = s.shape[1] // 2
    return s.data[:, :c] + 1j * s.data[:, c:], c


def _hermitian_mirror(a: np.ndarray) -> np.ndarray:
    """conj(A[(H-u)%H, (W'-v) reversed]) for the dropped columns."""
    # mirror the H axis: index (H-u) % H
    m = np.flip(a, axis=-2)
    m = np.roll(m, 1, axis=-2)
    return np.conj(m)


def rfft2(x) -> Tensor:
    """Forward real FFT per channel; returns the stacked-channel spectrum."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"rfft2 expects NCHW input, got {x.shape}")
    n, c, h, w = x.shape
    _check_pow2(h, "height")
    _check_pow2(w, "width")
    kw = w // 2 + 1
    spec = dft2_unnormalized(x.data)[..., :kw]
    out_data = np.concatenate([spec.real, spec.imag], axis=1).astype(x.dtype)

    def backward(g):
        g = np.asarray(g)
        gc = np.zeros((n, c, h, w), dtype=np.complex128)
        gc[..., :kw] = g[:, :c] + 1j * g[:, c:]
        gx = idft2_unnormalized(gc).real
        x.accumulate(gx.astype(x.dtype))

    return _wrap(out_data, (x,), backward)


def irfft2(s, width: int) -> Tensor:
    """Inverse of :func:`rfft2`; `width` disambiguates the last extent."""
    s = as_tensor(s)
    spec, c = _split_spectrum(s)
    n, _, h, kw = s.shape
    _check_pow2(width, "width")
    if kw != width // 2 + 1:
        raise ShapeError(
            f"spectrum last extent {kw} inconsistent with target width {width}"
        )
    full = np.zeros((n, c, h, width), dtype=np.complex128)
    full[..., :kw] = spec
    if width > 2:
        body = spec[..., 1 : width // 2]  # columns 1 .. W/2-1
        full[..., kw:] = _hermitian_mirror(body)[..., ::-1]
    out_data = (idft2_unnormalized(full).real / (h * width)).astype(s.dtype)

    def backward(g):
        gf = dft2_unnormalized(np.asarray(g)) / (h * width)
        grad = gf[..., :kw].copy()
        if width > 2:
            mirror = _hermitian_mirror(gf[..., kw:][..., ::-1])
            grad[..., 1 : width // 2] += mirror
        s.accumulate(
            np.concatenate([grad.real, grad.imag], axis=1).astype(s.dtype)
        )

    return _wrap(out_data, (s,), backward)


def _wrap(data, parents, backward) -> Tensor:
    if requires_any(parents):
        return Tensor(data, requires_grad=True, parents=parents, backward=backward)
    return Tensor(data)
