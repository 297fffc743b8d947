"""Losses and the training loop (Adam with a cosine-annealed learning rate)."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import checkpoint
from . import functional as F
from .data import PATCH_H, PATCH_W, StereoPair, augment, sample_patch
from .metrics import psnr
from .model import PRESETS, SwinFSR, SwinFsrConfig
from .nn import Conv2d, Module, make_rng
from .optim import Adam, cosine_lr
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)

LOSS_MODES = ("l1", "l1+perceptual")
drop_path = F.drop_path


class NumericError(FloatingPointError):
    """Training produced a non-finite value."""


# ------------------------------------------------------------------ config
@dataclass
class TrainConfig:
    lr_max: float = 1e-4
    lr_min: float = 1e-5
    total_steps: int = 2000
    batch: int = 1
    seed: int = 0
    dropout_rate: float = 0.1
    drop_path_rate: float = 0.2
    loss_mode: str = "l1"
    perceptual_weight: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.9
    eps: float = 1e-8
    patch_h: int = PATCH_H
    patch_w: int = PATCH_W
    augment: bool = True
    log_every: int = 10
    val_every: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if self.batch != 1:
            raise ValueError("only batch size 1 is supported")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if not 0.0 <= self.drop_path_rate <= 1.0:
            raise ValueError("drop_path_rate must be in [0, 1]")
        if self.lr_min > self.lr_max:
            raise ValueError("lr_min exceeds lr_max")


def _cast(kind, value: str):
    if kind in ("bool", bool):
        v = value.strip().lower()
        if v not in ("1", "0", "true", "false", "yes", "no"):
            raise ValueError(f"not a boolean: {value!r}")
        return v in ("1", "true", "yes")
    if kind in ("int", int):
        return int(value)
    if kind in ("float", float):
        return float(value)
    return value


def parse_key_values(text: str) -> dict[str, str]:
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {n}: expected key=value, got {line!r}")
        values[key.strip()] = value.strip()
    return values


def parse_config(text: str) -> tuple[TrainConfig, SwinFsrConfig]:
    """Split one flat key=value file into training and model settings.

    ``preset`` picks a named model size; ``dropout_rate``/``drop_path_rate``
    apply to both. Unknown keys are an error.
    """
    values = parse_key_values(text)
    train_keys = {f.name: f.type for f in fields(TrainConfig)}
    model_keys = {f.name for f in fields(SwinFsrConfig)}
    unknown = set(values) - set(train_keys) - model_keys - {"preset"}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    train = TrainConfig(**{k: _cast(t, values[k]) for k, t in train_keys.items() if k in values})
    model_values = {}
    if "preset" in values:
        if values["preset"] not in PRESETS:
            raise ValueError(f"unknown preset {values['preset']!r}; choose from {sorted(PRESETS)}")
        model_values.update(PRESETS[values["preset"]])
    model_values.update({k: v for k, v in values.items() if k in model_keys})
    model_values["dropout_rate"] = train.dropout_rate
    model_values["drop_path_rate"] = train.drop_path_rate
    return train, SwinFsrConfig.from_dict(model_values)


def config_text(train: TrainConfig, model: SwinFsrConfig) -> str:
    skip = {"dropout_rate", "drop_path_rate"}
    lines = [f"{k}={v}" for k, v in asdict(train).items()]
    lines += [f"{k}={v}" for k, v in asdict(model).items() if k not in skip]
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ losses
def l1_loss(sr_left: Tensor, sr_right: Tensor, hr_left, hr_right) -> Tensor:
    """Mean absolute error of each view, summed over the two views."""
    for sr, hr in ((sr_left, hr_left), (sr_right, hr_right)):
        if sr.shape != np.shape(hr):
            raise ValueError(f"l1_loss shape mismatch: {sr.shape} vs {np.shape(hr)}")
    return (sr_left - _const(hr_left, sr_left)).abs().mean() + (sr_right - _const(hr_right, sr_right)).abs().mean()


def _const(x, like: Tensor) -> Tensor:
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    return Tensor(data.astype(like.dtype, copy=False))


class FeatureNet(Module):
    """Frozen stand-in feature pyramid: 3 stages of conv3x3, 2x2 average pool, ReLU.

    Seed-initialized and never trained. ``calls`` counts feature extractions.
    """

    def __init__(self, seed: int = 0, widths: Sequence[int] = (8, 16, 32), in_channels: int = 3):
        rng = make_rng(seed)
        self.stages = []
        c = in_channels
        for w in widths:
            self.stages.append(Conv2d(c, w, 3, rng))
            c = w
        for p in self.parameters():
            p.requires_grad = False
        self.calls = 0

    def features(self, x: Tensor) -> list[Tensor]:
        self.calls += 1
        out = []
        for conv in self.stages:
            x = F.relu(F.avg_pool2(conv(x)))
            out.append(x)
        return out


def perceptual_loss(sr: Tensor, hr, net: FeatureNet) -> Tensor:
    """``(1/N) sum_j mean((phi_j(sr) - phi_j(hr))^2)`` for one image."""
    if sr.shape != np.shape(hr):
        raise ValueError(f"perceptual_loss shape mismatch: {sr.shape} vs {np.shape(hr)}")
    with no_grad():
        target = [t.detach() for t in net.features(_const(hr, sr))]
    feats = net.features(sr)
    terms = [((f - t) ** 2).mean() for f, t in zip(feats, target)]
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


def final_loss(sr_left: Tensor, sr_right: Tensor, hr_left, hr_right, mode: str = "l1",
               net: FeatureNet | None = None, weight: float = 0.01) -> Tensor:
    """``L_SR`` or ``L_SR + weight * (L_Per(left) + L_Per(right))``."""
    loss = l1_loss(sr_left, sr_right, hr_left, hr_right)
    if mode == "l1":
        return loss
    if mode != "l1+perceptual":
        raise ValueError(f"unknown loss mode {mode!r}")
    if net is None:
        raise ValueError("perceptual loss needs a FeatureNet")
    per = perceptual_loss(sr_left, hr_left, net) + perceptual_loss(sr_right, hr_right, net)
    return loss + per * weight


# ------------------------------------------------------------------ loop
@dataclass
class TrainResult:
    model: SwinFSR
    history: list[dict] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [row["loss"] for row in self.history]


def _as_tensor(x: np.ndarray, dtype) -> Tensor:
    return Tensor(np.ascontiguousarray(x, dtype=dtype))


def evaluate_psnr(model: SwinFSR, pairs: Sequence[StereoPair]) -> float:
    """Mean stereo PSNR of plain inference over ``pairs``."""
    values = []
    dtype = model.parameters()[0].dtype
    with no_grad():
        for p in pairs:
            sl, sr = model(_as_tensor(p.left, dtype), _as_tensor(p.right, dtype))
            values.append(0.5 * (psnr(np.clip(sl.data, 0, 1), p.hr_left) + psnr(np.clip(sr.data, 0, 1), p.hr_right)))
    return float(np.mean(values))


def _dump(out_dir: Path | None, step: int, model: SwinFSR, batch: StereoPair, loss: float) -> str:
    if out_dir is None:
        return ""
    path = out_dir / f"nonfinite_step{step}.npz"
    arrays = {f"param/{n}": p.data for n, p in model.named_parameters()}
    arrays.update(left=batch.left, right=batch.right, hr_left=batch.hr_left, hr_right=batch.hr_right)
    np.savez(path, step=step, loss=loss, **arrays)
    return str(path)


def train_loop(model: SwinFSR, data: Sequence[StereoPair], cfg: TrainConfig,
               val: Sequence[StereoPair] | None = None, out_dir: str | os.PathLike | None = None,
               feature_net: FeatureNet | None = None) -> TrainResult:
    """Run ``cfg.total_steps`` Adam steps on random patches of ``data``.

    A single generator seeded with ``cfg.seed`` drives scene choice, cropping,
    augmentation, dropout and stochastic depth, so a run is reproducible bit
    for bit. The learning rate follows the cosine schedule from ``lr_max`` at
    the first step to ``lr_min`` at the last.
    """
    if len(data) == 0:
        raise ValueError("empty training set")
    if any(not p.has_hr for p in data):
        raise ValueError("training pairs need HR targets")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rng = make_rng(cfg.seed)
    if cfg.loss_mode == "l1+perceptual" and feature_net is None:
        feature_net = FeatureNet(cfg.seed)
    opt = Adam(model.parameters(), lr=cfg.lr_max, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps)
    dtype = model.parameters()[0].dtype
    result = TrainResult(model)
    log_file = open(out / "train_log.csv", "w", newline="", encoding="utf-8") if out else None
    writer = csv.writer(log_file) if log_file else None
    if writer:
        writer.writerow(["step", "lr", "loss", "val_psnr"])
    last = max(cfg.total_steps - 1, 1)
    try:
        for step in range(cfg.total_steps):
            lr = cosine_lr(min(step, last), last, cfg.lr_max, cfg.lr_min)
            pair = data[int(rng.integers(len(data)))]
            batch = sample_patch(pair, rng, cfg.patch_h, cfg.patch_w)
            if cfg.augment:
                batch = augment(batch, rng)
            sl, sr = model(_as_tensor(batch.left, dtype), _as_tensor(batch.right, dtype), training=True, rng=rng)
            loss = final_loss(sl, sr, batch.hr_left, batch.hr_right, cfg.loss_mode, feature_net,
                              cfg.perceptual_weight)
            value = loss.item()
            if not np.isfinite(value):
                dump = _dump(out, step, model, batch, value)
                raise NumericError(f"non-finite loss {value} at step {step}" + (f"; state dumped to {dump}" if dump else ""))
            opt.zero_grad()
            try:
                loss.backward()
            except FloatingPointError as exc:
                dump = _dump(out, step, model, batch, value)
                raise NumericError(f"non-finite gradient at step {step}: {exc}" + (f"; state dumped to {dump}" if dump else "")) from exc
            opt.step(lr)
            row = {"step": step, "lr": lr, "loss": value, "val_psnr": None}
            if val and cfg.val_every and ((step + 1) % cfg.val_every == 0 or step + 1 == cfg.total_steps):
                row["val_psnr"] = evaluate_psnr(model, val)
            result.history.append(row)
            if writer:
                writer.writerow([step, repr(lr), repr(value), "" if row["val_psnr"] is None else f"{row['val_psnr']:.6f}"])
            if cfg.log_every and step % cfg.log_every == 0:
                log.info("step %d lr %.3g loss %.6f", step, lr, value)
            if out is not None and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
                checkpoint.save(model, out / f"step{step + 1:07d}.sfsr")
    finally:
        if log_file:
            log_file.close()
    if out is not None:
        checkpoint.save(model, out / "final.sfsr")
    return result


def with_rates(model_cfg: SwinFsrConfig, train: TrainConfig) -> SwinFsrConfig:
    return replace(model_cfg, dropout_rate=train.dropout_rate, drop_path_rate=train.drop_path_rate)
