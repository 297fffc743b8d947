import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swinfsr.metrics import (PSNR_IDENTICAL, SceneScore, aggregate, gaussian_window, psnr, score_scene, ssim,
                             stereo_score, write_report)


def test_psnr_hand_cases():
    a = np.zeros((3, 8, 8))
    assert psnr(a, a) == PSNR_IDENTICAL == 99.0
    assert psnr(a, np.ones_like(a)) == pytest.approx(0.0, abs=1e-12)
    assert abs(psnr(a, np.full_like(a, 0.5)) - 10 * math.log10(4)) < 1e-6
    assert abs(psnr(a, np.full_like(a, 0.5)) - 6.0206) < 1e-4


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


def _ssim_direct(a, b):
    """Straight transcription of the SSIM formula with explicit window loops."""
    g = gaussian_window()
    win = np.outer(g, g)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    vals = []
    for ch in range(a.shape[0]):
        out = []
        for i in range(a.shape[1] - 10):
            for j in range(a.shape[2] - 10):
                pa, pb = a[ch, i:i + 11, j:j + 11], b[ch, i:i + 11, j:j + 11]
                ma, mb = (win * pa).sum(), (win * pb).sum()
                va = (win * (pa - ma) ** 2).sum()
                vb = (win * (pb - mb) ** 2).sum()
                cov = (win * (pa - ma) * (pb - mb)).sum()
                out.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
        vals.append(np.mean(out))
    return float(np.mean(vals))


def test_ssim_identical_and_direct_formula(rng):
    a = rng.random((3, 16, 18))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    assert abs(ssim(a, b) - _ssim_direct(a, b)) < 1e-9
    assert ssim(a, b) < 0.99


def test_ssim_small_image_window_shrinks(rng):
    a = rng.random((3, 5, 9))
    assert ssim(a, a) == pytest.approx(1.0)
    assert ssim(np.zeros((3, 1, 1)), np.zeros((3, 1, 1))) == 1.0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_symmetry_and_channel_permutation(seed):
    r = np.random.default_rng(seed)
    a, b = r.random((3, 14, 15)), r.random((3, 14, 15))
    perm = r.permutation(3)
    assert abs(psnr(a, b) - psnr(b, a)) < 1e-9
    assert abs(ssim(a, b) - ssim(b, a)) < 1e-9
    assert abs(psnr(a[perm], b[perm]) - psnr(a, b)) < 1e-9
    assert abs(ssim(a[perm], b[perm]) - ssim(a, b)) < 1e-9


def test_stereo_score_averages_views(rng):
    hr = rng.random((3, 12, 12))
    sr = np.clip(hr + 0.05, 0, 1)
    s = score_scene("x", hr, sr, hr, hr)
    assert s.psnr_l == 99.0 and s.psnr == pytest.approx(0.5 * (99.0 + psnr(sr, hr)))
    assert stereo_score([(hr, hr, hr, hr), (hr, hr, hr, hr)]) == (99.0, 1.0)
    with pytest.raises(ValueError):
        stereo_score([])


def test_report_csv(tmp_path):
    scores = [SceneScore("a", 30.0, 32.0, 0.9, 0.8), SceneScore("b", 20.0, 22.0, 0.7, 0.6)]
    write_report(scores, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "scene,psnr_L,psnr_R,ssim_L,ssim_R"
    assert lines[1].startswith("a,30.000000,32.000000")
    assert lines[-1] == "mean,25.000000,27.000000,0.800000,0.700000"
    assert aggregate(scores) == (26.0, pytest.approx(0.75))
