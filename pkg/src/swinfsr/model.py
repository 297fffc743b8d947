"""SwinFSR: a Siamese stereo super-resolution network with shared weights.

Both views pass through the same shallow conv and RSFTB stack (stacked on the
batch axis); an RCAM after every RSFTB exchanges information between views.
A trailing FFB, a 3x3 conv to ``3*16`` channels, a x4 pixel shuffle and a last
3x3 conv produce a residual that is added to the bilinear x4 upsampled input.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import functional as F
from .ffb import RSFTB, FastFourierBlock
from .nn import Conv2d, Module, make_rng
from .rcam import RCAM
from .swin import WindowSpec
from .tensor import Tensor, concat, reshape

SCALE = 4


@dataclass
class SwinFsrConfig:
    n_rsftb: int = 2
    stl_per_block: int = 2
    embed_dim: int = 16
    num_heads: int = 4
    window_h: int = 6
    window_w: int = 15
    mlp_ratio: float = 2.0
    dropout_rate: float = 0.1
    drop_path_rate: float = 0.2
    leaky_slope: float = 0.2
    scale: int = SCALE

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.scale != SCALE:
            raise ValueError("only x4 super-resolution is supported")
        if self.n_rsftb < 1 or self.stl_per_block < 1:
            raise ValueError("n_rsftb and stl_per_block must be >= 1")
        if self.embed_dim < 1 or self.embed_dim % self.num_heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if not 0.0 <= self.drop_path_rate <= 1.0:
            raise ValueError("drop_path_rate must be in [0, 1]")
        WindowSpec(self.window_h, self.window_w)

    @property
    def window(self) -> WindowSpec:
        return WindowSpec(self.window_h, self.window_w)

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())

    @classmethod
    def from_dict(cls, values: dict) -> "SwinFsrConfig":
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        kwargs = {}
        for f in fields(cls):
            if f.name in values:
                cast = float if f.type in ("float", float) else int
                kwargs[f.name] = cast(values[f.name])
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text: str) -> "SwinFsrConfig":
        values = {}
        for line in text.splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
        return cls.from_dict(values)


# named sizes; only the block counts are published, width and depth are local choices
PRESETS = {
    "micro": dict(n_rsftb=2, stl_per_block=2, embed_dim=16, num_heads=4),
    "S": dict(n_rsftb=4, stl_per_block=6, embed_dim=96, num_heads=6),
    "B": dict(n_rsftb=6, stl_per_block=6, embed_dim=96, num_heads=6),
    "L": dict(n_rsftb=12, stl_per_block=6, embed_dim=96, num_heads=6),
}


class SwinFSR(Module):
    def __init__(self, config: SwinFsrConfig, rng: np.random.Generator):
        config.validate()
        self.config = config
        c = config.embed_dim
        self.shallow = Conv2d(3, c, 3, rng)
        self.blocks = [
            RSFTB(c, config.stl_per_block, config.num_heads, config.window, rng,
                  mlp_ratio=config.mlp_ratio, drop_path_rate=config.drop_path_rate,
                  slope=config.leaky_slope)
            for _ in range(config.n_rsftb)
        ]
        self.fusions = [RCAM(c, rng, config.leaky_slope) for _ in range(config.n_rsftb)]
        self.ffb = FastFourierBlock(c, rng, config.leaky_slope)
        self.upconv = Conv2d(c, 3 * SCALE * SCALE, 3, rng)
        self.last = Conv2d(3, 3, 3, rng)

    def forward(self, left: Tensor, right: Tensor, training: bool = False,
                rng: np.random.Generator | None = None):
        """Super-resolve a stereo pair; ``[3, H, W]`` or ``[N, 3, H, W]`` in, 4x out."""
        if left.shape != right.shape:
            raise ValueError(f"left/right shapes differ: {left.shape} vs {right.shape}")
        squeeze = left.ndim == 3
        if squeeze:
            left, right = reshape(left, (1,) + left.shape), reshape(right, (1,) + right.shape)
        if left.ndim != 4 or left.shape[1] != 3:
            raise ValueError(f"expected RGB input [N, 3, H, W], got {left.shape}")
        n, _, h, w = left.shape
        win = self.config.window
        ph, pw = -h % win.wh, -w % win.ww

        x = F.reflect_pad(concat([left, right], axis=0), ph, pw)
        feat = self.shallow(x)
        for block, fusion in zip(self.blocks, self.fusions):
            feat = block(feat, training=training, rng=rng)
            fl, fr = fusion(feat[:n], feat[n:], training=training, rng=rng)
            feat = concat([fl, fr], axis=0)
        feat = self.ffb(feat)
        up = F.pixel_shuffle(self.upconv(feat), SCALE)
        up = F.dropout(up, self.config.dropout_rate, training, rng)
        residual = self.last(up)
        if ph or pw:
            residual = residual[:, :, : SCALE * h, : SCALE * w]
        out = residual + F.bilinear_resize(concat([left, right], axis=0), SCALE)
        sr_left, sr_right = out[:n], out[n:]
        if squeeze:
            sr_left = reshape(sr_left, sr_left.shape[1:])
            sr_right = reshape(sr_right, sr_right.shape[1:])
        return sr_left, sr_right


def build(config: SwinFsrConfig, rng: np.random.Generator | int = 0) -> SwinFSR:
    if isinstance(rng, (int, np.integer)):
        rng = make_rng(int(rng))
    return SwinFSR(config, rng)


def count_params(model: Module) -> int:
    """Number of distinct scalar parameters (shared tensors counted once)."""
    return model.num_parameters()
