"""Residual cross attention between the left and right views.

Attention runs along image rows only (rectified stereo: matches share a row).
A single score matrix per row serves both directions.
"""

from __future__ import annotations

import math

import numpy as np

from . import functional as F
from .nn import Conv2d, LayerNorm, Module, Parameter
from .tensor import Tensor, make_result, matmul, permute, reshape


def whiten(x: Tensor) -> Tensor:
    """Subtract the mean over the width axis (last axis of ``[..., C, H, W]``).

    The mean is accumulated in float64 so float32 rows come out zero-mean to
    well below single-precision resolution of the inputs.
    """
    d = x.data
    out = (d.astype(np.float64) - d.mean(axis=-1, keepdims=True, dtype=np.float64)).astype(d.dtype)

    def backward(g):
        # centering is a symmetric projector, so its adjoint is itself
        return (g - g.mean(axis=-1, keepdims=True),)

    return make_result(out, (x,), backward)


def cross_scores(q: Tensor, k: Tensor) -> Tensor:
    """Per-row correlation ``S[..., h, i, j] = sum_c q[..., c, h, i] * k[..., c, h, j]``.

    Reduces over a contiguous channel axis in a fixed order, so
    ``cross_scores(k, q)`` is exactly the per-row transpose of ``cross_scores(q, k)``.
    """
    if q.shape != k.shape:
        raise ValueError(f"cross_scores: shape mismatch {q.shape} vs {k.shape}")
    qd = np.moveaxis(q.data, -3, -1)  # [..., H, W, C]
    kd = np.moveaxis(k.data, -3, -1)
    out = np.ascontiguousarray((qd[..., :, None, :] * kd[..., None, :, :]).sum(axis=-1))

    def backward(g):
        gq = gk = None
        if q.requires_grad:
            gq = np.moveaxis(np.matmul(g, kd), -1, -3)
        if k.requires_grad:
            gk = np.moveaxis(np.matmul(np.swapaxes(g, -1, -2), qd), -1, -3)
        return gq, gk

    return make_result(out, (q, k), backward)


def bidirectional_attention(scores: Tensor, v_left: Tensor, v_right: Tensor, channels: int):
    """Return ``(F_R->L, F_L->R)`` from one ``[..., H, W, W]`` score tensor.

    Left queries attend over right positions with ``softmax(S / sqrt(C))``; the
    reverse direction uses the per-row transpose of the same scores.
    """
    scale = 1.0 / math.sqrt(channels)
    attn_rl = F.softmax(scores * scale, axis=-1)
    attn_lr = F.softmax(scores.swapaxes(-1, -2) * scale, axis=-1)
    # values as [..., H, W, C] so each row is a (W x C) matrix
    vl = permute(v_left, _to_rows(v_left.ndim))
    vr = permute(v_right, _to_rows(v_right.ndim))
    r2l = permute(matmul(attn_rl, vr), _to_channels(vr.ndim))
    l2r = permute(matmul(attn_lr, vl), _to_channels(vl.ndim))
    return r2l, l2r, (attn_rl.data, attn_lr.data)


def _to_rows(ndim: int) -> tuple:
    lead = tuple(range(ndim - 3))
    return lead + (ndim - 2, ndim - 1, ndim - 3)


def _to_channels(ndim: int) -> tuple:
    lead = tuple(range(ndim - 3))
    return lead + (ndim - 1, ndim - 3, ndim - 2)


class RCAM(Module):
    """Cross-view fusion with weights shared between views.

    ``out_L = gamma_L * Attention(W1 LN(F_L), W1 LN(F_R), W2 F_R) + F_L`` and the mirror
    image for the right view; ``W1`` sees a residual conv block and whitening first.
    ``gamma_L``/``gamma_R`` start at zero, so the module is the identity at init.
    """

    def __init__(self, channels: int, rng: np.random.Generator, slope: float = F.LEAKY_SLOPE):
        self.channels = channels
        self.norm = LayerNorm(channels, axis=-3)
        self.resb1 = Conv2d(channels, channels, 3, rng)
        self.resb2 = Conv2d(channels, channels, 3, rng)
        self.w1 = Conv2d(channels, channels, 1, rng)
        self.w2 = Conv2d(channels, channels, 1, rng)
        self.gamma_l = Parameter(np.zeros(channels))
        self.gamma_r = Parameter(np.zeros(channels))
        self.slope = slope
        self.last_attention: tuple | None = None

    def _queries(self, f: Tensor) -> Tensor:
        x = self.norm(f)
        x = self.resb2(F.leaky_relu(self.resb1(x), self.slope)) + x
        return whiten(self.w1(x))

    def forward(self, f_left: Tensor, f_right: Tensor, training: bool = False, rng=None):
        if f_left.shape != f_right.shape:
            raise ValueError(f"view shapes differ: {f_left.shape} vs {f_right.shape}")
        scores = cross_scores(self._queries(f_left), self._queries(f_right))
        r2l, l2r, self.last_attention = bidirectional_attention(
            scores, self.w2(f_left), self.w2(f_right), self.channels)
        gshape = (self.channels, 1, 1)
        out_l = reshape(self.gamma_l, gshape) * r2l + f_left
        out_r = reshape(self.gamma_r, gshape) * l2r + f_right
        return out_l, out_r


def rcam_forward(f_left: Tensor, f_right: Tensor, module: RCAM, training: bool = False, rng=None):
    return module(f_left, f_right, training=training, rng=rng)
