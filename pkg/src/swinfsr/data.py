"""Stereo datasets: PNG I/O, bicubic x4 degradation, patch sampling, augmentation.

Images are float32 arrays ``[3, H, W]`` with values in [0, 1].
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

SCALE = 4
PATCH_H, PATCH_W = 30, 90
HR_NAMES = ("hr0.png", "hr1.png")
LR_NAMES = ("lr0.png", "lr1.png")


class DataError(Exception):
    """Missing, malformed or unsupported image data."""


# ---------------------------------------------------------------- PNG I/O
def png_read(path: str | os.PathLike) -> np.ndarray:
    """Read an 8-bit RGB PNG as ``[3, H, W]`` float32 in [0, 1]."""
    try:
        with Image.open(path) as img:
            if img.format != "PNG":
                raise DataError(f"{path}: not a PNG file ({img.format})")
            if img.mode != "RGB":
                raise DataError(f"{path}: unsupported PNG mode {img.mode!r}; only 8-bit RGB is accepted")
            arr = np.asarray(img, dtype=np.uint8)
    except FileNotFoundError as exc:
        raise DataError(f"{path}: no such file") from exc
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DataError(f"{path}: malformed image ({exc})") from exc
    return (arr.transpose(2, 0, 1).astype(np.float32) / np.float32(255.0))


def quantize(img: np.ndarray) -> np.ndarray:
    """Round to the nearest 8-bit level, as a uint8 ``[H, W, 3]`` array."""
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)


def png_write(img: np.ndarray, path: str | os.PathLike) -> None:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] != 3:
        raise DataError(f"expected a [3, H, W] image, got shape {img.shape}")
    Image.fromarray(quantize(img), mode="RGB").save(path, format="PNG")


# ---------------------------------------------------------------- bicubic
def cubic_kernel(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic convolution kernel; ``a = -0.5`` is Catmull-Rom."""
    ax = np.abs(x)
    ax2, ax3 = ax * ax, ax * ax * ax
    near = (a + 2) * ax3 - (a + 3) * ax2 + 1
    far = a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a
    return np.where(ax <= 1, near, np.where(ax < 2, far, 0.0))


@lru_cache(maxsize=None)
def _resample_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Dense ``[n_out, n_in]`` bicubic resampling matrix (half-pixel centers, edge clamp).

    When shrinking, the kernel is stretched by the scale factor (antialiasing).
    """
    scale = n_out / n_in
    stretch = min(scale, 1.0)
    support = 2.0 / stretch
    centers = (np.arange(n_out) + 0.5) / scale - 0.5
    first = np.floor(centers - support).astype(int) + 1
    taps = int(np.ceil(2 * support)) + 1
    idx = first[:, None] + np.arange(taps)[None, :]
    weights = stretch * cubic_kernel((centers[:, None] - idx) * stretch)
    weights /= weights.sum(axis=1, keepdims=True)
    out = np.zeros((n_out, n_in))
    np.add.at(out, (np.repeat(np.arange(n_out), taps), np.clip(idx, 0, n_in - 1).reshape(-1)), weights.reshape(-1))
    out.setflags(write=False)
    return out


def bicubic_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    img = np.asarray(img)
    mh = _resample_matrix(img.shape[-2], out_h)
    mw = _resample_matrix(img.shape[-1], out_w)
    out = mh @ img.astype(np.float64) @ mw.T
    return out.astype(img.dtype if np.issubdtype(img.dtype, np.floating) else np.float64)


def bicubic_downsample(hr: np.ndarray, factor: int = SCALE) -> np.ndarray:
    """Antialiased bicubic ``1/factor`` reduction of ``[..., H, W]``."""
    h, w = np.shape(hr)[-2:]
    if h % factor or w % factor:
        raise ValueError(f"image {h}x{w} not divisible by {factor}")
    return bicubic_resize(hr, h // factor, w // factor)


def bicubic_upsample(lr: np.ndarray, factor: int = SCALE) -> np.ndarray:
    h, w = np.shape(lr)[-2:]
    return bicubic_resize(lr, h * factor, w * factor)


# ---------------------------------------------------------------- datasets
@dataclass
class StereoPair:
    left: np.ndarray
    right: np.ndarray
    hr_left: np.ndarray | None = None
    hr_right: np.ndarray | None = None
    scene: str = ""

    def __post_init__(self):
        if self.left.shape != self.right.shape:
            raise DataError(f"{self.scene}: left/right shapes differ {self.left.shape} vs {self.right.shape}")
        if (self.hr_left is None) != (self.hr_right is None):
            raise DataError(f"{self.scene}: only one HR view present")
        if self.hr_left is not None:
            want = self.left.shape[:-2] + (SCALE * self.left.shape[-2], SCALE * self.left.shape[-1])
            if self.hr_left.shape != want or self.hr_right.shape != want:
                raise DataError(f"{self.scene}: HR shape {self.hr_left.shape} is not 4x LR {self.left.shape}")

    @property
    def has_hr(self) -> bool:
        return self.hr_left is not None


def _read_manifest(path: Path) -> list[str]:
    names = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            names.append(line)
    return names


class DatasetDir:
    """A directory of scene folders, each holding ``hr0/hr1.png`` and/or ``lr0/lr1.png``.

    Scenes are listed by an optional manifest (one scene name per line) or else
    every sub-directory in sorted order. Scenes with HR only get their LR views
    by bicubic downsampling, quantized to 8 bits as if saved to disk.
    """

    def __init__(self, root: str | os.PathLike, manifest: str | os.PathLike | None = None):
        self.root = Path(root)
        if not self.root.is_dir():
            raise DataError(f"{root}: dataset directory not found")
        if manifest is not None:
            mpath = Path(manifest)
            if not mpath.is_absolute() and not mpath.exists():
                mpath = self.root / mpath
            if not mpath.is_file():
                raise DataError(f"{manifest}: manifest not found")
            self.scenes = _read_manifest(mpath)
        else:
            self.scenes = sorted(p.name for p in self.root.iterdir() if p.is_dir())
        for s in self.scenes:
            if not (self.root / s).is_dir():
                raise DataError(f"scene {s!r} listed but missing under {self.root}")
        self._cache: dict[str, StereoPair] = {}

    def __len__(self) -> int:
        return len(self.scenes)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __getitem__(self, i: int) -> StereoPair:
        scene = self.scenes[i]
        if scene not in self._cache:
            self._cache[scene] = self._load(scene)
        return self._cache[scene]

    def _load(self, scene: str) -> StereoPair:
        d = self.root / scene
        has_hr = [(d / n).is_file() for n in HR_NAMES]
        has_lr = [(d / n).is_file() for n in LR_NAMES]
        if any(has_hr) and not all(has_hr):
            raise DataError(f"{d}: only one of {HR_NAMES} present")
        if any(has_lr) and not all(has_lr):
            raise DataError(f"{d}: only one of {LR_NAMES} present")
        hr = [png_read(d / n) for n in HR_NAMES] if all(has_hr) else [None, None]
        if all(has_lr):
            lr = [png_read(d / n) for n in LR_NAMES]
        elif hr[0] is not None:
            lr = [degrade(x) for x in hr]
        else:
            raise DataError(f"{d}: scene has neither HR nor LR images")
        return StereoPair(lr[0], lr[1], hr[0], hr[1], scene=scene)


def degrade(hr: np.ndarray) -> np.ndarray:
    """Bicubic x4 downsampling followed by 8-bit quantization."""
    lr = bicubic_downsample(hr)
    return (quantize(lr).transpose(2, 0, 1).astype(np.float32) / np.float32(255.0))


def sample_patch(pair: StereoPair, rng: np.random.Generator, lr_h: int = PATCH_H, lr_w: int = PATCH_W) -> StereoPair:
    """Random aligned crop: one LR offset for both views, HR crop at 4x that offset."""
    h, w = pair.left.shape[-2:]
    if h < lr_h or w < lr_w:
        raise DataError(f"{pair.scene}: LR image {h}x{w} smaller than patch {lr_h}x{lr_w}")
    y = int(rng.integers(0, h - lr_h + 1))
    x = int(rng.integers(0, w - lr_w + 1))
    lr_sl = (Ellipsis, slice(y, y + lr_h), slice(x, x + lr_w))
    hr_sl = (Ellipsis, slice(SCALE * y, SCALE * (y + lr_h)), slice(SCALE * x, SCALE * (x + lr_w)))
    hr_l = pair.hr_left[hr_sl] if pair.has_hr else None
    hr_r = pair.hr_right[hr_sl] if pair.has_hr else None
    return StereoPair(pair.left[lr_sl], pair.right[lr_sl], hr_l, hr_r, scene=f"{pair.scene}@{y},{x}")


def hflip_pair(pair: StereoPair) -> StereoPair:
    """Mirror every image horizontally and exchange the views."""
    f = lambda a: None if a is None else a[..., ::-1]
    return replace(pair, left=f(pair.right), right=f(pair.left), hr_left=f(pair.hr_right), hr_right=f(pair.hr_left))


def vflip_pair(pair: StereoPair) -> StereoPair:
    f = lambda a: None if a is None else a[..., ::-1, :]
    return replace(pair, left=f(pair.left), right=f(pair.right), hr_left=f(pair.hr_left), hr_right=f(pair.hr_right))


def permute_channels(pair: StereoPair, perm) -> StereoPair:
    perm = np.asarray(perm)
    f = lambda a: None if a is None else a[..., perm, :, :]
    return replace(pair, left=f(pair.left), right=f(pair.right), hr_left=f(pair.hr_left), hr_right=f(pair.hr_right))


def augment(pair: StereoPair, rng: np.random.Generator) -> StereoPair:
    """Vertical flip, horizontal flip (with view swap) and an RGB shuffle, each with p=0.5.

    The same four draws are consumed on every call, so the stream stays aligned.
    """
    if not pair.has_hr:
        raise DataError("augment needs HR targets")
    vflip, hflip, shuffle = rng.random(3) < 0.5
    perm = rng.permutation(3)
    if vflip:
        pair = vflip_pair(pair)
    if hflip:
        pair = hflip_pair(pair)
    if shuffle:
        pair = permute_channels(pair, perm)
    return replace(pair, left=np.ascontiguousarray(pair.left), right=np.ascontiguousarray(pair.right),
                   hr_left=np.ascontiguousarray(pair.hr_left), hr_right=np.ascontiguousarray(pair.hr_right))
