"""Swin Transformer layer with rectangular (optionally shifted) attention windows."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import functional as F
from .nn import LayerNorm, Linear, Module, Parameter, trunc_normal
from .tensor import Tensor, getitem, permute, reshape, roll, take

# logit penalty for token pairs that straddle a cyclic-shift seam
MASK_PENALTY = -1e4


@dataclass(frozen=True)
class WindowSpec:
    wh: int
    ww: int
    shift: tuple = (0, 0)

    def __post_init__(self):
        if self.wh < 1 or self.ww < 1:
            raise ValueError("window dims must be positive")
        sh, sw = self.shift
        if not (0 <= sh < self.wh and 0 <= sw < self.ww):
            raise ValueError(f"shift {self.shift} outside window {self.wh}x{self.ww}")

    @property
    def tokens(self) -> int:
        return self.wh * self.ww

    def shifted(self) -> "WindowSpec":
        return WindowSpec(self.wh, self.ww, (self.wh // 2, self.ww // 2))

    def unshifted(self) -> "WindowSpec":
        return WindowSpec(self.wh, self.ww, (0, 0))


def _check_divisible(h: int, w: int, win: WindowSpec) -> None:
    if h % win.wh or w % win.ww:
        raise ValueError(f"feature {h}x{w} not divisible by window {win.wh}x{win.ww}")


def window_partition(x: Tensor, win: WindowSpec) -> Tensor:
    """``[N, H, W, C]`` (or ``[H, W, C]``) tokens -> ``[N*nW, wh*ww, C]`` windows.

    The cyclic shift ``(-sh, -sw)`` is applied first.
    """
    if x.ndim == 3:
        x = reshape(x, (1,) + x.shape)
    n, h, w, c = x.shape
    _check_divisible(h, w, win)
    sh, sw = win.shift
    if sh or sw:
        x = roll(x, (-sh, -sw), (1, 2))
    y = reshape(x, (n, h // win.wh, win.wh, w // win.ww, win.ww, c))
    y = permute(y, (0, 1, 3, 2, 4, 5))
    return reshape(y, (-1, win.tokens, c))


def window_reverse(windows: Tensor, win: WindowSpec, h: int, w: int) -> Tensor:
    """Inverse of :func:`window_partition`, returns ``[N, H, W, C]``."""
    _check_divisible(h, w, win)
    c = windows.shape[-1]
    nh, nw = h // win.wh, w // win.ww
    y = reshape(windows, (-1, nh, nw, win.wh, win.ww, c))
    y = permute(y, (0, 1, 3, 2, 4, 5))
    y = reshape(y, (-1, h, w, c))
    sh, sw = win.shift
    if sh or sw:
        y = roll(y, (sh, sw), (1, 2))
    return y


def relative_position_index(win: WindowSpec) -> np.ndarray:
    """``[T, T]`` index into the ``(2wh-1)*(2ww-1)`` bias table."""
    coords = np.stack(np.meshgrid(np.arange(win.wh), np.arange(win.ww), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :]
    return (rel[0] + win.wh - 1) * (2 * win.ww - 1) + (rel[1] + win.ww - 1)


def shift_mask(h: int, w: int, win: WindowSpec) -> np.ndarray | None:
    """Additive ``[nW, T, T]`` mask separating regions that the cyclic shift glued together."""
    sh, sw = win.shift
    if not (sh or sw):
        return None
    regions = np.zeros((h, w), dtype=np.int64)
    label = 0
    for hs in (slice(0, -win.wh), slice(-win.wh, -sh if sh else None), slice(-sh, None) if sh else slice(0, 0)):
        for ws in (slice(0, -win.ww), slice(-win.ww, -sw if sw else None), slice(-sw, None) if sw else slice(0, 0)):
            regions[hs, ws] = label
            label += 1
    ids = regions.reshape(h // win.wh, win.wh, w // win.ww, win.ww).transpose(0, 2, 1, 3).reshape(-1, win.tokens)
    return np.where(ids[:, :, None] != ids[:, None, :], MASK_PENALTY, 0.0)


class WindowAttention(Module):
    """Multi-head self-attention inside windows with a learned relative position bias."""

    def __init__(self, dim: int, num_heads: int, win: WindowSpec, rng: np.random.Generator):
        if dim % num_heads:
            raise ValueError(f"dim {dim} not divisible by {num_heads} heads")
        self.dim, self.num_heads = dim, num_heads
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)
        table = (2 * win.wh - 1) * (2 * win.ww - 1)
        self.relative_position_bias_table = Parameter(trunc_normal(rng, (table, num_heads)))
        self._index = relative_position_index(win).reshape(-1)
        self.tokens = win.tokens
        self.last_attention: np.ndarray | None = None

    def position_bias(self) -> Tensor:
        t = self.tokens
        bias = take(self.relative_position_bias_table, self._index, axis=0)
        return permute(reshape(bias, (t, t, self.num_heads)), (2, 0, 1))

    def forward(self, tokens: Tensor, mask: np.ndarray | None = None) -> Tensor:
        nb, t, c = tokens.shape
        if t != self.tokens:
            raise ValueError(f"expected {self.tokens} tokens per window, got {t}")
        hd = c // self.num_heads
        qkv = reshape(self.qkv(tokens), (nb, t, 3, self.num_heads, hd))
        qkv = permute(qkv, (2, 0, 3, 1, 4))
        q = getitem(qkv, 0) * (1.0 / math.sqrt(hd))
        k, v = getitem(qkv, 1), getitem(qkv, 2)
        logits = q @ k.swapaxes(-1, -2) + self.position_bias()
        if mask is not None:
            nw = mask.shape[0]
            logits = reshape(logits, (nb // nw, nw, self.num_heads, t, t))
            logits = logits + mask[None, :, None].astype(logits.dtype)
            logits = reshape(logits, (nb, self.num_heads, t, t))
        attn = F.softmax(logits, axis=-1)
        self.last_attention = attn.data
        out = permute(attn @ v, (0, 2, 1, 3))
        return self.proj(reshape(out, (nb, t, c)))


def wmsa(tokens: Tensor, attn: WindowAttention, mask: np.ndarray | None = None) -> Tensor:
    return attn(tokens, mask)


class Mlp(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(F.gelu(self.fc1(x)))


class SwinLayer(Module):
    """``x + DropPath(WMSA(LN(x)))`` then ``x + DropPath(MLP(LN(x)))`` on ``[N, C, H, W]``.

    Inputs not divisible by the window are reflect-padded and cropped back.
    """

    def __init__(self, dim: int, num_heads: int, win: WindowSpec, rng: np.random.Generator,
                 mlp_ratio: float = 2.0, drop_path_rate: float = 0.0):
        self.win = win
        self.norm1 = LayerNorm(dim)
        self.attn = WindowAttention(dim, num_heads, win, rng)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio), rng)
        self.drop_path_rate = drop_path_rate
        self._masks: dict = {}

    def _mask(self, h: int, w: int):
        if (h, w) not in self._masks:
            self._masks[(h, w)] = shift_mask(h, w, self.win)
        return self._masks[(h, w)]

    def forward(self, x: Tensor, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        squeeze = x.ndim == 3
        if squeeze:
            x = reshape(x, (1,) + x.shape)
        h, w = x.shape[-2:]
        ph, pw = -h % self.win.wh, -w % self.win.ww
        xp = F.reflect_pad(x, ph, pw)
        hp, wp = h + ph, w + pw

        t = permute(xp, (0, 2, 3, 1))
        windows = window_partition(F.layer_norm(t, self.norm1.weight, self.norm1.bias), self.win)
        attended = window_reverse(self.attn(windows, self._mask(hp, wp)), self.win, hp, wp)
        t = t + F.drop_path(attended, self.drop_path_rate, training, rng)
        t = t + F.drop_path(self.mlp(self.norm2(t)), self.drop_path_rate, training, rng)

        y = permute(t, (0, 3, 1, 2))
        if ph or pw:
            y = y[:, :, :h, :w]
        return reshape(y, y.shape[1:]) if squeeze else y


def stl_forward(x: Tensor, layer: SwinLayer, training: bool = False, rng=None) -> Tensor:
    return layer(x, training=training, rng=rng)
