"""Inference helpers: test-time augmentation, tiled inference, ensembling, evaluation.

A *predictor* is any callable ``(left, right) -> (sr_left, sr_right)`` on
``[3, H, W]`` arrays; :func:`model_predictor` wraps a network.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import functional as F
from .data import SCALE, DataError, StereoPair, png_read, png_write
from .metrics import SceneScore, score_scene
from .model import SwinFSR
from .tensor import Tensor, no_grad

Predictor = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
TILE_OVERLAP = 8
SR_NAMES = ("sr0.png", "sr1.png")


def model_predictor(model: SwinFSR) -> Predictor:
    dtype = model.parameters()[0].dtype

    def predict(left: np.ndarray, right: np.ndarray):
        with no_grad():
            sl, sr = model(Tensor(np.ascontiguousarray(left, dtype=dtype)),
                           Tensor(np.ascontiguousarray(right, dtype=dtype)))
        return sl.data, sr.data

    return predict


def bilinear_predictor(left: np.ndarray, right: np.ndarray):
    """Plain bilinear x4 of each view; a flip-equivariant stand-in for the network."""
    up = lambda x: F.bilinear_resize(Tensor(np.asarray(x)), SCALE).data
    return up(left), up(right)


# ------------------------------------------------------------------ TTA
@dataclass(frozen=True)
class Transform:
    """A flip of both views; a horizontal flip also exchanges them. Each is an involution."""

    hflip: bool = False
    vflip: bool = False

    @property
    def name(self) -> str:
        return ("H" if self.hflip else "") + ("V" if self.vflip else "") or "identity"

    def __call__(self, left: np.ndarray, right: np.ndarray):
        if self.vflip:
            left, right = left[..., ::-1, :], right[..., ::-1, :]
        if self.hflip:
            left, right = right[..., ::-1], left[..., ::-1]
        return np.ascontiguousarray(left), np.ascontiguousarray(right)


@dataclass(frozen=True)
class TtaPlan:
    horizontal: bool = True
    vertical: bool = True

    @property
    def transforms(self) -> list[Transform]:
        hs = (False, True) if self.horizontal else (False,)
        vs = (False, True) if self.vertical else (False,)
        return [Transform(h, v) for h in hs for v in vs]

    @classmethod
    def identity(cls) -> "TtaPlan":
        return cls(False, False)


def tta_infer(predict: Predictor, left: np.ndarray, right: np.ndarray, plan: TtaPlan = TtaPlan()):
    """Average the predictor over the plan's transforms, each mapped back to the input frame."""
    outs = []
    for t in plan.transforms:
        sl, sr = predict(*t(left, right))
        outs.append(t(sl, sr))
    if len(outs) == 1:
        return outs[0]
    dtype = outs[0][0].dtype
    mean = lambda xs: (np.sum(np.stack(xs).astype(np.float64), axis=0) / len(xs)).astype(dtype)
    return mean([o[0] for o in outs]), mean([o[1] for o in outs])


# ------------------------------------------------------------------ tiling
def _starts(n: int, tile: int, overlap: int) -> list[int]:
    if tile >= n:
        return [0]
    step = tile - overlap
    starts = list(range(0, n - tile, step))
    starts.append(n - tile)
    return starts


def _ramp(length: int, lead: int, trail: int) -> np.ndarray:
    """Blend weights for one tile axis: linear ramps over the shared overlaps, 1 elsewhere."""
    w = np.ones(length)
    if lead:
        w[:lead] = (np.arange(lead) + 0.5) / lead
    if trail:
        w[length - trail:] = np.minimum(w[length - trail:], (np.arange(trail)[::-1] + 0.5) / trail)
    return w


def tiled_infer(predict: Predictor, left: np.ndarray, right: np.ndarray, tile: tuple[int, int],
                overlap: int = TILE_OVERLAP):
    """Run ``predict`` on overlapping LR tiles and blend the SR tiles linearly across seams.

    Both views use the same tile grid; ``tile`` is (height, width) in LR pixels.
    """
    h, w = left.shape[-2:]
    th, tw = min(tile[0], h), min(tile[1], w)
    if (th < h and th <= overlap) or (tw < w and tw <= overlap):
        raise ValueError(f"tile {tile} must exceed the overlap {overlap}")
    ys, xs = _starts(h, th, overlap), _starts(w, tw, overlap)
    acc_l = np.zeros((left.shape[0], SCALE * h, SCALE * w))
    acc_r = np.zeros_like(acc_l)
    weight = np.zeros((SCALE * h, SCALE * w))
    for iy, y in enumerate(ys):
        lead_y = ys[iy - 1] + th - y if iy else 0
        trail_y = y + th - ys[iy + 1] if iy + 1 < len(ys) else 0
        wy = _ramp(SCALE * th, SCALE * lead_y, SCALE * trail_y)
        for ix, x in enumerate(xs):
            lead_x = xs[ix - 1] + tw - x if ix else 0
            trail_x = x + tw - xs[ix + 1] if ix + 1 < len(xs) else 0
            wx = _ramp(SCALE * tw, SCALE * lead_x, SCALE * trail_x)
            sl, sr = predict(np.ascontiguousarray(left[..., y:y + th, x:x + tw]),
                             np.ascontiguousarray(right[..., y:y + th, x:x + tw]))
            wt = wy[:, None] * wx[None, :]
            region = (slice(SCALE * y, SCALE * (y + th)), slice(SCALE * x, SCALE * (x + tw)))
            acc_l[(Ellipsis,) + region] += sl * wt
            acc_r[(Ellipsis,) + region] += sr * wt
            weight[region] += wt
    dtype = left.dtype if np.issubdtype(left.dtype, np.floating) else np.float32
    return (acc_l / weight).astype(dtype), (acc_r / weight).astype(dtype)


def window_tile(n: int, window: tuple[int, int]) -> tuple[int, int]:
    """Round an ``n x n`` tile request up to window multiples on each axis."""
    return (-(-n // window[0]) * window[0], -(-n // window[1]) * window[1])


def infer(predict: Predictor, left: np.ndarray, right: np.ndarray, tta: TtaPlan | None = None,
          tile: tuple[int, int] | None = None):
    base = predict
    if tile is not None:
        base = lambda l, r: tiled_infer(predict, l, r, tile)
    if tta is not None:
        return tta_infer(base, left, right, tta)
    return base(left, right)


# ------------------------------------------------------------------ image sets
ImageSet = Mapping[str, tuple[np.ndarray, np.ndarray]]


def ensemble(sets: Sequence[ImageSet]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Pixelwise mean of several image sets, per scene and view.

    Values are sorted across sets before summing, so the result does not depend
    on the order of ``sets``.
    """
    if len(sets) < 2:
        raise ValueError("ensemble needs at least two image sets")
    scenes = sorted(sets[0])
    for s in sets[1:]:
        if sorted(s) != scenes:
            raise DataError("image sets cover different scenes")
    out = {}
    for scene in scenes:
        views = []
        for v in range(2):
            arrs = [np.asarray(s[scene][v]) for s in sets]
            if any(a.shape != arrs[0].shape for a in arrs):
                raise DataError(f"scene {scene}: image shapes differ between sets")
            stacked = np.sort(np.stack(arrs).astype(np.float64), axis=0)
            views.append((stacked.sum(axis=0) / len(arrs)).astype(np.float32))
        out[scene] = (views[0], views[1])
    return out


def read_image_set(root: str | os.PathLike) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: not a directory")
    out = {}
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        if all((d / n).is_file() for n in SR_NAMES):
            out[d.name] = (png_read(d / SR_NAMES[0]), png_read(d / SR_NAMES[1]))
    if not out:
        raise DataError(f"{root}: no scenes with {SR_NAMES[0]}/{SR_NAMES[1]}")
    return out


def write_image_set(images: ImageSet, root: str | os.PathLike) -> None:
    root = Path(root)
    for scene, (left, right) in images.items():
        (root / scene).mkdir(parents=True, exist_ok=True)
        png_write(left, root / scene / SR_NAMES[0])
        png_write(right, root / scene / SR_NAMES[1])


# ------------------------------------------------------------------ evaluation
def evaluate(predict: Predictor, pairs: Sequence[StereoPair], tta: TtaPlan | None = None,
             tile: tuple[int, int] | None = None) -> list[SceneScore]:
    """Per-scene PSNR/SSIM of 8-bit-quantized predictions against HR."""
    if len(pairs) == 0:
        raise DataError("empty dataset")
    scores = []
    for pair in pairs:
        if not pair.has_hr:
            raise DataError(f"scene {pair.scene} has no HR ground truth")
        sl, sr = infer(predict, pair.left, pair.right, tta, tile)
        q = lambda x: np.round(np.clip(x, 0.0, 1.0) * 255.0) / 255.0
        scores.append(score_scene(pair.scene, q(sl), q(sr), pair.hr_left, pair.hr_right))
    return scores
