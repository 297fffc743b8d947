"""Overfit two synthetic 30x90 stereo patches with the micro model.

Mirrors acceptance criterion 7. Takes 10 to 15 minutes on one core.

    python demos/overfit.py [steps]
"""

import logging
import sys

import numpy as np

from swinfsr import PRESETS, SwinFsrConfig, build
from swinfsr.data import bicubic_upsample
from swinfsr.inference import model_predictor
from swinfsr.metrics import psnr
from swinfsr.nn import make_rng
from swinfsr.synthetic import stereo_pair
from swinfsr.training import TrainConfig, train_loop


def stereo_psnr(predict, pairs):
    vals = []
    for p in pairs:
        sl, sr = predict(p.left, p.right)
        vals.append(0.5 * (psnr(np.clip(sl, 0, 1), p.hr_left) + psnr(np.clip(sr, 0, 1), p.hr_right)))
    return float(np.mean(vals))


def main(steps: int = 2000):
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    gen = make_rng(123)
    pairs = [stereo_pair(gen, 30, 90, scene=f"patch{i}") for i in range(2)]
    bicubic = stereo_psnr(lambda l, r: (bicubic_upsample(l), bicubic_upsample(r)), pairs)

    model = build(SwinFsrConfig(**PRESETS["micro"]), 0)
    cfg = TrainConfig(total_steps=steps, augment=False, log_every=100)
    result = train_loop(model, pairs, cfg)
    final = stereo_psnr(model_predictor(model), pairs)
    print(f"loss {result.losses[0]:.4f} -> {np.mean(result.losses[-20:]):.4f} (mean of last 20 steps)")
    print(f"train PSNR {final:.2f} dB vs bicubic {bicubic:.2f} dB")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 2000)
