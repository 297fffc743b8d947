"""Channel-wise 2-D Fourier transforms and the FFC spectrum transform.

The FFT is a vectorized mixed-radix Cooley-Tukey (decimation in time) that
handles any length: short lengths use a direct DFT matrix product, longer
composite lengths split off their smallest prime factor, and long primes go
through Bluestein's chirp-z algorithm on a power-of-two grid. All transforms are orthonormal.

Spectra are stored as real tensors with the real parts in the first ``C``
channels and the imaginary parts in the next ``C``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import functional as F
from .nn import Conv2d, Module
from .tensor import Tensor, make_result

DIRECT_DFT_MAX = 32


@lru_cache(maxsize=None)
def _smallest_factor(n: int) -> int:
    if n % 2 == 0:
        return 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return f
        f += 2
    return n


@lru_cache(maxsize=None)
def _dft_matrix(n: int, dtype=np.complex128) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-2j * np.pi * (np.outer(k, k) % n) / n).astype(dtype)


@lru_cache(maxsize=None)
def _twiddles(p: int, m: int, dtype=np.complex128) -> np.ndarray:
    return np.exp(-2j * np.pi * np.outer(np.arange(p), np.arange(m)) / (p * m)).astype(dtype)


@lru_cache(maxsize=None)
def _bluestein_plan(n: int, dtype=np.complex128):
    size = 1
    while size < 2 * n - 1:
        size *= 2
    k = np.arange(n)
    chirp = np.exp(-1j * np.pi * (k * k % (2 * n)) / n)
    b = np.zeros(size, dtype=complex)
    b[:n] = np.conj(chirp)
    b[size - n + 1:] = np.conj(chirp[1:][::-1])
    return size, chirp.astype(dtype), _fft_unnormalized(b).astype(dtype)


def _fft_unnormalized(x: np.ndarray) -> np.ndarray:
    """Forward DFT along the last axis of a complex array, no normalization."""
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    dt = x.dtype.type
    if n <= DIRECT_DFT_MAX:
        return x @ _dft_matrix(n, dt).T
    p = _smallest_factor(n)
    if p == n:
        return _bluestein(x)
    m = n // p
    # subsequence r holds x[r], x[r+p], ...; transform each, then combine with a size-p DFT
    sub = np.swapaxes(x.reshape(x.shape[:-1] + (m, p)), -1, -2)
    y = _fft_unnormalized(sub) * _twiddles(p, m, dt)
    return np.matmul(_dft_matrix(p, dt), y).reshape(x.shape[:-1] + (n,))


def _bluestein(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    size, chirp, fb = _bluestein_plan(n, x.dtype.type)
    a = np.zeros(x.shape[:-1] + (size,), dtype=x.dtype)
    a[..., :n] = x * chirp
    conv = np.conj(_fft_unnormalized(np.conj(_fft_unnormalized(a) * fb))) / size
    return conv[..., :n] * chirp


def _complex_dtype(x: np.ndarray):
    return np.complex64 if x.dtype in (np.float32, np.complex64) else np.complex128


def fft(x: np.ndarray, axis: int = -1, inverse: bool = False) -> np.ndarray:
    """Orthonormal complex DFT of ``x`` along ``axis``.

    Single-precision input stays in complex64; everything else runs in complex128.
    """
    x = np.asarray(x)
    x = np.moveaxis(x.astype(_complex_dtype(x), copy=False), axis, -1)
    n = x.shape[-1]
    out = np.conj(_fft_unnormalized(np.conj(x))) if inverse else _fft_unnormalized(x)
    return np.moveaxis(out * (1.0 / np.sqrt(n)).astype(out.real.dtype), -1, axis)


def rfft2_array(x: np.ndarray) -> np.ndarray:
    """Complex half spectrum ``[..., H, W//2+1]`` of a real array over its last two axes."""
    w = x.shape[-1]
    half = fft(x, axis=-1)[..., : w // 2 + 1]
    return fft(half, axis=-2)


def irfft2_array(z: np.ndarray, out_w: int) -> np.ndarray:
    """Inverse of :func:`rfft2_array`; the imaginary parts of self-conjugate bins are ignored."""
    if z.shape[-1] != out_w // 2 + 1:
        raise ValueError(f"spectrum width {z.shape[-1]} inconsistent with out_w={out_w}")
    cols = fft(z, axis=-2, inverse=True)
    mirror = np.conj(cols[..., 1:(out_w + 1) // 2][..., ::-1])
    full = np.concatenate([cols, mirror], axis=-1)
    return fft(full, axis=-1, inverse=True).real


def _hermitian_weights(w: int) -> np.ndarray:
    weights = np.full(w // 2 + 1, 2.0)
    weights[0] = 1.0
    if w % 2 == 0:
        weights[-1] = 1.0
    return weights


def _stack(z: np.ndarray, dtype) -> np.ndarray:
    ch = z.ndim - 3
    return np.concatenate([z.real, z.imag], axis=ch).astype(dtype)


def _unstack(s: np.ndarray) -> np.ndarray:
    ch = s.ndim - 3
    c = s.shape[ch] // 2
    re, im = np.split(s, [c], axis=ch)
    return re + 1j * im if s.dtype == np.float64 else (re + 1j * im).astype(np.complex64)


def rfft2(x: Tensor) -> Tensor:
    """``[..., C, H, W] -> [..., 2C, H, W//2+1]`` real/imag-stacked orthonormal spectrum."""
    if x.ndim < 3:
        raise ValueError("rfft2 expects [..., C, H, W]")
    h, w = x.shape[-2:]
    out = _stack(rfft2_array(x.data), x.dtype)

    def backward(g):
        gz = _unstack(g)
        pad_w = w - gz.shape[-1]
        full = np.concatenate([gz, np.zeros(gz.shape[:-1] + (pad_w,), dtype=gz.dtype)], axis=-1)
        gx = fft(fft(full, axis=-2, inverse=True), axis=-1, inverse=True).real
        return (gx.astype(x.dtype),)

    return make_result(out, (x,), backward)


def irfft2(z: Tensor, out_w: int) -> Tensor:
    """``[..., 2C, H, out_w//2+1] -> [..., C, H, out_w]``."""
    if z.ndim < 3 or z.shape[-3] % 2:
        raise ValueError("irfft2 expects a real/imag-stacked spectrum [..., 2C, H, Wf]")
    out = irfft2_array(_unstack(z.data), out_w).astype(z.dtype)
    weights = _hermitian_weights(out_w)

    def backward(g):
        return (_stack(rfft2_array(g) * weights.astype(g.dtype), z.dtype),)

    return make_result(out, (z,), backward)


class SpectrumTransform(Module):
    """``C''( irfft2( relu(C'( rfft2(F') )) ) + F' )`` with ``F' = C(F)``; all convs 1x1."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.c_in = Conv2d(channels, channels, 1, rng)
        self.c_freq = Conv2d(2 * channels, 2 * channels, 1, rng)
        self.c_out = Conv2d(channels, channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        f = self.c_in(x)
        spec = F.relu(self.c_freq(rfft2(f)))
        return self.c_out(irfft2(spec, f.shape[-1]) + f)


def spectrum_transform(x: Tensor, params: SpectrumTransform) -> Tensor:
    return params(x)
