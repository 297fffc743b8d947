"""PSNR and SSIM on RGB images in [0, 1], averaged over the two stereo views."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PSNR_IDENTICAL = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03
REPORT_HEADER = ("scene", "psnr_L", "psnr_R", "ssim_L", "ssim_R")


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """``10 log10(1 / MSE)`` over all values; identical inputs give the 99 dB sentinel."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_IDENTICAL
    return min(PSNR_IDENTICAL, 10.0 * math.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable Gaussian, no padding: output shrinks by size-1 on each axis
    x = sliding_window_view(x, g.size, axis=-1) @ g
    return np.swapaxes(sliding_window_view(np.swapaxes(x, -1, -2), g.size, axis=-1) @ g, -1, -2)


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean SSIM per channel, averaged over channels.

    Images smaller than the 11x11 window use the largest odd window that fits
    (same sigma).
    """
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    size = min(SSIM_WINDOW, *a.shape[-2:])
    size -= 1 - size % 2
    g = gaussian_window(size)
    c1, c2 = (K1 * data_range) ** 2, (K2 * data_range) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a * mu_a
    sbb = _filter_valid(b * b, g) - mu_b * mu_b
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2)
    per_channel = (num / den).reshape(a.shape[0], -1).mean(axis=1)
    return float(per_channel.mean())


@dataclass
class SceneScore:
    scene: str
    psnr_l: float
    psnr_r: float
    ssim_l: float
    ssim_r: float

    @property
    def psnr(self) -> float:
        return 0.5 * (self.psnr_l + self.psnr_r)

    @property
    def ssim(self) -> float:
        return 0.5 * (self.ssim_l + self.ssim_r)


def score_scene(scene: str, sr_left, sr_right, hr_left, hr_right) -> SceneScore:
    return SceneScore(scene, psnr(sr_left, hr_left), psnr(sr_right, hr_right),
                      ssim(sr_left, hr_left), ssim(sr_right, hr_right))


def stereo_score(pairs: Iterable[Sequence]) -> tuple[float, float]:
    """Mean (PSNR, SSIM) over both views of every ``(sr_l, sr_r, hr_l, hr_r)`` tuple."""
    scores = [s if isinstance(s, SceneScore) else score_scene(str(i), *s) for i, s in enumerate(pairs)]
    if not scores:
        raise ValueError("no scenes to score")
    return aggregate(scores)


def aggregate(scores: Sequence[SceneScore]) -> tuple[float, float]:
    if not scores:
        raise ValueError("no scenes to score")
    return (float(np.mean([s.psnr for s in scores])), float(np.mean([s.ssim for s in scores])))


def write_report(scores: Sequence[SceneScore], path: str | os.PathLike) -> None:
    """Per-scene CSV plus a final ``mean`` row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_HEADER)
        for s in scores:
            w.writerow([s.scene, f"{s.psnr_l:.6f}", f"{s.psnr_r:.6f}", f"{s.ssim_l:.6f}", f"{s.ssim_r:.6f}"])
        if scores:
            mean = [float(np.mean([getattr(s, k) for s in scores])) for k in ("psnr_l", "psnr_r", "ssim_l", "ssim_r")]
            w.writerow(["mean"] + [f"{v:.6f}" for v in mean])
