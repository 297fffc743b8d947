"""Build a micro SwinFSR, super-resolve a synthetic stereo pair, compare with bicubic.

    python demos/quickstart.py
"""

import numpy as np

from swinfsr import PRESETS, SwinFsrConfig, build, count_params
from swinfsr.data import bicubic_upsample
from swinfsr.inference import TtaPlan, infer, model_predictor
from swinfsr.metrics import psnr, ssim
from swinfsr.nn import make_rng
from swinfsr.synthetic import stereo_pair


def main():
    pair = stereo_pair(make_rng(0), 30, 90)
    print(f"LR views {pair.left.shape}, HR views {pair.hr_left.shape}")

    model = build(SwinFsrConfig(**PRESETS["micro"]), 0)
    print(f"micro model: {count_params(model):,} parameters")

    # an untrained model starts out as bilinear upsampling plus a random residual
    predict = model_predictor(model)
    for name, (sl, sr) in [
        ("bicubic", (bicubic_upsample(pair.left), bicubic_upsample(pair.right))),
        ("untrained", predict(pair.left, pair.right)),
        ("untrained+TTA", infer(predict, pair.left, pair.right, TtaPlan())),
    ]:
        sl, sr = np.clip(sl, 0, 1), np.clip(sr, 0, 1)
        p = 0.5 * (psnr(sl, pair.hr_left) + psnr(sr, pair.hr_right))
        s = 0.5 * (ssim(sl, pair.hr_left) + ssim(sr, pair.hr_right))
        print(f"{name:>14}: PSNR {p:6.2f} dB  SSIM {s:.4f}")


if __name__ == "__main__":
    main()
