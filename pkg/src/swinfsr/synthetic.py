"""Procedural stereo scenes for tests and demos.

A scene is a stack of flat-shaded shapes and stripe patches over a smooth
background. The right view sees each layer shifted left by its disparity, so
nearer layers (drawn later) move more.
"""

from __future__ import annotations

import numpy as np

from .data import SCALE, StereoPair, degrade


def _layer(rng: np.random.Generator, h: int, w: int):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    kind = rng.integers(3)
    cy, cx = rng.uniform(0, h), rng.uniform(0, w)
    if kind == 0:
        ry, rx = rng.uniform(0.08, 0.3) * h, rng.uniform(0.05, 0.2) * w
        mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    elif kind == 1:
        hh, ww = rng.uniform(0.1, 0.4) * h, rng.uniform(0.05, 0.25) * w
        mask = (np.abs(yy - cy) <= hh / 2) & (np.abs(xx - cx) <= ww / 2)
    else:
        hh, ww = rng.uniform(0.2, 0.5) * h, rng.uniform(0.1, 0.3) * w
        period = rng.uniform(3.0, 9.0)
        angle = rng.uniform(0, np.pi)
        phase = (np.cos(angle) * xx + np.sin(angle) * yy) / period
        mask = (np.abs(yy - cy) <= hh / 2) & (np.abs(xx - cx) <= ww / 2) & (np.floor(phase) % 2 == 0)
    color = rng.uniform(0.05, 0.95, 3)
    return mask, color


def stereo_scene(rng: np.random.Generator, hr_h: int = 120, hr_w: int = 360, layers: int = 12,
                 max_disparity: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """HR left/right views ``[3, hr_h, hr_w]`` float32 in [0, 1]."""
    pad = max_disparity
    w = hr_w + pad
    yy, xx = np.mgrid[0:hr_h, 0:w] / np.array([hr_h, w])[:, None, None]
    c0, c1, c2 = rng.uniform(0.2, 0.8, (3, 3))
    canvas_l = c0[:, None, None] + (c1 - c0)[:, None, None] * yy + (c2 - c0)[:, None, None] * xx * 0.5
    canvas_l = np.clip(canvas_l, 0, 1)
    canvas_r = canvas_l.copy()
    for i in range(layers):
        mask, color = _layer(rng, hr_h, w)
        d = int(round(max_disparity * (i + 1) / layers))
        canvas_l[:, mask] = color[:, None]
        shifted = np.zeros_like(mask)
        shifted[:, : w - d] = mask[:, d:]
        canvas_r[:, shifted] = color[:, None]
    left = canvas_l[:, :, :hr_w]
    right = canvas_r[:, :, :hr_w]
    return left.astype(np.float32), right.astype(np.float32)


def stereo_pair(rng: np.random.Generator, lr_h: int = 30, lr_w: int = 90, scene: str = "synthetic",
                **kwargs) -> StereoPair:
    """A synthetic pair with HR views and their bicubic x4, 8-bit LR versions."""
    hl, hr = stereo_scene(rng, SCALE * lr_h, SCALE * lr_w, **kwargs)
    hl = np.round(hl * 255) / np.float32(255)
    hr = np.round(hr * 255) / np.float32(255)
    return StereoPair(degrade(hl), degrade(hr), hl.astype(np.float32), hr.astype(np.float32), scene=scene)
