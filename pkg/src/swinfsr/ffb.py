"""Fast Fourier Block and the residual Swin Fourier transformer block."""

from __future__ import annotations

import numpy as np

from . import functional as F
from .nn import Conv2d, Module
from .spectral import SpectrumTransform
from .swin import SwinLayer, WindowSpec
from .tensor import Tensor, concat


class FastFourierBlock(Module):
    """Parallel local (3x3 conv residual) and global (spectrum transform) branches,
    concatenated on channels and fused back to ``C`` by a 1x1 conv."""

    def __init__(self, channels: int, rng: np.random.Generator, slope: float = F.LEAKY_SLOPE):
        self.conv1 = Conv2d(channels, channels, 3, rng)
        self.conv2 = Conv2d(channels, channels, 3, rng)
        self.spectral = SpectrumTransform(channels, rng)
        self.fuse = Conv2d(2 * channels, channels, 1, rng)
        self.slope = slope

    def local(self, x: Tensor) -> Tensor:
        return self.conv2(F.leaky_relu(self.conv1(x), self.slope)) + x

    def global_(self, x: Tensor) -> Tensor:
        return self.spectral(x)

    def forward(self, x: Tensor) -> Tensor:
        axis = x.ndim - 3
        return self.fuse(concat([self.local(x), self.global_(x)], axis=axis))


def ffb_local(x: Tensor, block: FastFourierBlock) -> Tensor:
    return block.local(x)


def ffb_global(x: Tensor, block: FastFourierBlock) -> Tensor:
    return block.global_(x)


def ffb_forward(x: Tensor, block: FastFourierBlock) -> Tensor:
    return block(x)


class RSFTB(Module):
    """``FFB(STL_L(...STL_1(x))) + x``; consecutive layers alternate unshifted/shifted windows."""

    def __init__(self, channels: int, depth: int, num_heads: int, win: WindowSpec,
                 rng: np.random.Generator, mlp_ratio: float = 2.0, drop_path_rate: float = 0.0,
                 slope: float = F.LEAKY_SLOPE):
        if depth < 1:
            raise ValueError("an RSFTB needs at least one Swin layer")
        base = win.unshifted()
        self.stls = [
            SwinLayer(channels, num_heads, base if i % 2 == 0 else base.shifted(), rng,
                      mlp_ratio=mlp_ratio, drop_path_rate=drop_path_rate)
            for i in range(depth)
        ]
        self.ffb = FastFourierBlock(channels, rng, slope)
        self.drop_path_rate = drop_path_rate

    def body(self, x: Tensor, training: bool = False, rng=None) -> Tensor:
        for stl in self.stls:
            x = stl(x, training=training, rng=rng)
        return x

    def forward(self, x: Tensor, training: bool = False, rng=None) -> Tensor:
        branch = self.ffb(self.body(x, training, rng))
        return F.drop_path(branch, self.drop_path_rate, training, rng) + x


def rsftb_forward(x: Tensor, block: RSFTB, training: bool = False, rng=None) -> Tensor:
    return block(x, training=training, rng=rng)
