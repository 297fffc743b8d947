"""Fused differentiable ops used by the network blocks.

Image tensors are channel-first, ``[C, H, W]`` or ``[N, C, H, W]``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from .tensor import Tensor, as_tensor, make_result, matmul, mul, permute, reshape, take

LN_EPS = 1e-5
LEAKY_SLOPE = 0.2


# ----------------------------------------------------------------- activations
def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    scale = np.where(x.data > 0, 1.0, slope).astype(x.dtype)
    return make_result(x.data * scale, (x,), lambda g: (g * scale,))


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, ``x * Phi(x)`` with the erf form of the normal CDF."""
    d = x.data
    cdf = 0.5 * (1.0 + erf(d / math.sqrt(2.0)))
    cdf = cdf.astype(d.dtype)

    def backward(g):
        pdf = np.exp(-0.5 * d * d) / math.sqrt(2.0 * math.pi)
        return (g * (cdf + d * pdf),)

    return make_result(d * cdf, (x,), backward)


def elementwise(op: str, a, b=None, **kwargs) -> Tensor:
    """Dispatch by name: add, sub, mul, leaky_relu, gelu, relu."""
    a = as_tensor(a)
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "leaky_relu":
        return leaky_relu(a, **kwargs)
    if op == "gelu":
        return gelu(a)
    if op == "relu":
        return relu(a)
    raise ValueError(f"unknown elementwise op {op!r}")


# --------------------------------------------------------------------- softmax
def softmax(x: Tensor, axis: int = -1) -> Tensor:
    d = np.ascontiguousarray(x.data)
    z = d - d.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_result(y, (x,), backward)


# ------------------------------------------------------------------ layer norm
def layer_norm(x: Tensor, weight: Tensor | None = None, bias: Tensor | None = None,
               axis: int = -1, eps: float = LN_EPS) -> Tensor:
    """Normalize along one axis to zero mean / unit variance, then apply the affine pair.

    ``weight`` and ``bias`` have the length of the normalized axis.
    """
    axis = axis % x.ndim
    n = x.shape[axis]
    if n == 0:
        raise ValueError("layer_norm over a zero-length axis")
    d = x.data
    mu = d.mean(axis=axis, keepdims=True)
    xc = d - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd

    bshape = [1] * x.ndim
    bshape[axis] = n
    w = weight.data.reshape(bshape) if weight is not None else None
    out = xhat * w if w is not None else xhat
    if bias is not None:
        out = out + bias.data.reshape(bshape)

    parents = [x]
    if weight is not None:
        parents.append(weight)
    if bias is not None:
        parents.append(bias)
    other_axes = tuple(i for i in range(x.ndim) if i != axis)

    def backward(g):
        gx_hat = g * w if w is not None else g
        gx = rstd * (gx_hat - gx_hat.mean(axis=axis, keepdims=True)
                     - xhat * (gx_hat * xhat).mean(axis=axis, keepdims=True))
        grads = [gx]
        if weight is not None:
            grads.append((g * xhat).sum(axis=other_axes).reshape(weight.shape))
        if bias is not None:
            grads.append(g.sum(axis=other_axes).reshape(bias.shape))
        return tuple(grads)

    return make_result(out.astype(d.dtype, copy=False), parents, backward)


# ----------------------------------------------------------------------- conv2d
def _im2col(xp: np.ndarray, kh: int, kw: int, h: int, w: int) -> np.ndarray:
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, h, w), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + h, j:j + w]
    return cols.reshape(n, c * kh * kw, h * w)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Stride-1 convolution with zero padding that preserves H and W.

    ``weight`` is ``[out_ch, in_ch, kh, kw]`` with odd kh, kw.
    """
    squeeze = x.ndim == 3
    if squeeze:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 4:
        raise ValueError(f"conv2d expects [C,H,W] or [N,C,H,W], got {x.shape}")
    out_ch, in_ch, kh, kw = weight.shape
    n, c, h, w = x.shape
    if c != in_ch:
        raise ValueError(f"conv2d: input has {c} channels, weight expects {in_ch}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("conv2d supports odd kernel sizes only")
    ph, pw = (kh - 1) // 2, (kw - 1) // 2

    wmat = weight.data.reshape(out_ch, in_ch * kh * kw)
    if kh == 1 and kw == 1:
        cols = x.data.reshape(n, c, h * w)
    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        cols = _im2col(xp, kh, kw, h, w)
    out = np.matmul(wmat, cols)
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape(n, out_ch, h, w)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(n, out_ch, h * w)
        gx = gw = gb = None
        if weight.requires_grad:
            gw = np.matmul(g2, np.swapaxes(cols, 1, 2)).sum(axis=0).reshape(weight.shape)
        if x.requires_grad:
            gcols = np.matmul(wmat.T, g2)
            if kh == 1 and kw == 1:
                gx = gcols.reshape(x.shape)
            else:
                gcols = gcols.reshape(n, c, kh, kw, h, w)
                gxp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=g.dtype)
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, :, i:i + h, j:j + w] += gcols[:, :, i, j]
                gx = gxp[:, :, ph:ph + h, pw:pw + w]
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=(0, 2))
        return (gx, gw, gb) if bias is not None else (gx, gw)

    y = make_result(out, parents, backward)
    return reshape(y, y.shape[1:]) if squeeze else y


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` over the last axis; ``weight`` is ``[out, in]``."""
    y = matmul(x, permute(weight, (1, 0)))
    return y + bias if bias is not None else y


# --------------------------------------------------------------- pixel shuffle
def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """``[..., c*r*r, H, W] -> [..., c, r*H, r*W]``.

    Output pixel ``(c, r*i + di, r*j + dj)`` reads input channel ``c*r*r + di*r + dj``.
    """
    *lead, ch, h, w = x.shape
    if ch % (r * r):
        raise ValueError(f"pixel_shuffle: {ch} channels not divisible by {r * r}")
    c = ch // (r * r)
    k = len(lead)
    y = reshape(x, (*lead, c, r, r, h, w))
    y = permute(y, tuple(range(k)) + (k, k + 3, k + 1, k + 4, k + 2))
    return reshape(y, (*lead, c, h * r, w * r))


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    *lead, c, hr, wr = x.shape
    if hr % r or wr % r:
        raise ValueError("pixel_unshuffle: spatial dims not divisible by r")
    h, w = hr // r, wr // r
    k = len(lead)
    y = reshape(x, (*lead, c, h, r, w, r))
    y = permute(y, tuple(range(k)) + (k, k + 2, k + 4, k + 1, k + 3))
    return reshape(y, (*lead, c * r * r, h, w))


# ------------------------------------------------------------------ resampling
def bilinear_matrix(n: int, factor: int, dtype=np.float64) -> np.ndarray:
    """``[factor*n, n]`` interpolation matrix, half-pixel centers, edge clamp."""
    if factor < 1 or int(factor) != factor:
        raise ValueError("bilinear factor must be an integer >= 1")
    out = factor * n
    pos = (np.arange(out) + 0.5) / factor - 0.5
    pos = np.clip(pos, 0.0, n - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    t = pos - lo
    m = np.zeros((out, n), dtype=dtype)
    np.add.at(m, (np.arange(out), lo), 1.0 - t)
    np.add.at(m, (np.arange(out), hi), t)
    return m


def bilinear_resize(x: Tensor, factor: int) -> Tensor:
    """Upsample the last two axes by an integer factor."""
    if factor < 1:
        raise ValueError("bilinear factor must be >= 1")
    h, w = x.shape[-2:]
    mh = Tensor(bilinear_matrix(h, factor, x.dtype))
    mwt = Tensor(bilinear_matrix(w, factor, x.dtype).T.copy())
    return matmul(matmul(mh, x), mwt)


def reflect_pad(x: Tensor, ph: int, pw: int) -> Tensor:
    """Pad the last two axes at the bottom/right by reflection (edge not repeated)."""
    if ph == 0 and pw == 0:
        return x
    h, w = x.shape[-2:]
    y = take(x, _reflect_index(h, ph), axis=x.ndim - 2) if ph else x
    return take(y, _reflect_index(w, pw), axis=x.ndim - 1) if pw else y


def _reflect_index(n: int, extra: int) -> np.ndarray:
    if n == 1:
        return np.zeros(n + extra, dtype=np.intp)
    period = 2 * (n - 1)
    idx = np.arange(n + extra) % period
    return np.where(idx < n, idx, period - idx)


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 average pooling on the last two axes (odd trailing row/col dropped)."""
    *lead, h, w = x.shape
    h2, w2 = h // 2, w // 2
    y = x[..., :2 * h2, :2 * w2] if (h % 2 or w % 2) else x
    y = reshape(y, (*lead, h2, 2, w2, 2))
    return y.mean(axis=(-3, -1))


# ---------------------------------------------------------------- regularizers
def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity outside training."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = rng.random(x.shape) >= rate
    return mul(x, (keep / (1.0 - rate)).astype(x.dtype))


def drop_path(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Stochastic depth on a residual branch.

    One Bernoulli draw per call, so both stereo views (stacked on the batch axis)
    keep or skip the branch together. Survivors are scaled by ``1/(1-rate)``;
    ``rate == 1`` always drops the branch.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"drop_path rate must be in [0, 1], got {rate}")
    if not training or rate == 0.0:
        return x
    if rate == 1.0:
        return mul(x, 0.0)
    if rng is None:
        raise ValueError("drop_path in training mode needs an rng")
    if rng.random() < rate:
        return mul(x, 0.0)
    return mul(x, 1.0 / (1.0 - rate))
