import numpy as np
import pytest

from swinfsr import functional as F
from swinfsr.model import PRESETS, SwinFsrConfig, build, count_params
from swinfsr.nn import make_rng
from swinfsr.rcam import RCAM
from swinfsr.swin import SwinLayer
from swinfsr.tensor import Tensor


def closed_form_count(n, L, c, heads, wh=6, ww=15, ratio=2.0):
    conv = lambda i, o, k: o * i * k * k + o
    hidden = int(c * ratio)
    stl = 4 * c + (3 * c * c + 3 * c) + (c * c + c) + (2 * wh - 1) * (2 * ww - 1) * heads \
        + (hidden * c + hidden) + (c * hidden + c)
    spectral = conv(c, c, 1) + conv(2 * c, 2 * c, 1) + conv(c, c, 1)
    ffb = 2 * conv(c, c, 3) + spectral + conv(2 * c, c, 1)
    rcam = 2 * c + 2 * conv(c, c, 3) + 2 * conv(c, c, 1) + 2 * c
    return conv(3, c, 3) + n * (L * stl + ffb + rcam) + ffb + conv(c, 48, 3) + conv(3, 3, 3)


@pytest.fixture(scope="module")
def micro():
    return build(SwinFsrConfig(), 0)


def test_micro_param_count(micro):
    assert count_params(micro) == closed_form_count(2, 2, 16, 4) == 52292


def test_other_config_param_count():
    cfg = SwinFsrConfig(n_rsftb=1, stl_per_block=3, embed_dim=12, num_heads=3, window_h=4, window_w=8)
    assert count_params(build(cfg, 0)) == closed_form_count(1, 3, 12, 3, 4, 8)


def test_param_count_linear_in_blocks():
    counts = [count_params(build(SwinFsrConfig(n_rsftb=n, embed_dim=8, num_heads=2), 0)) for n in (1, 2, 3)]
    assert counts[1] - counts[0] == counts[2] - counts[1] > 0


def test_all_gammas_zero_after_build(micro):
    rcams = [m for m in micro.modules() if isinstance(m, RCAM)]
    assert len(rcams) == 2
    assert all(not m.gamma_l.data.any() and not m.gamma_r.data.any() for m in rcams)


def test_equal_seeds_identical_params():
    a, b = build(SwinFsrConfig(), 5), build(SwinFsrConfig(), 5)
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb
        np.testing.assert_array_equal(pa.data, pb.data)
    c = build(SwinFsrConfig(), 6)
    assert not np.array_equal(a.shallow.weight.data, c.shallow.weight.data)


def test_alternating_shifts_structural(micro):
    for block in micro.blocks:
        assert [s.win.shift for s in block.stls] == [(0, 0), (3, 7)]


def test_training_patch_shape(micro, rng):
    x = Tensor(rng.random((3, 30, 90)).astype(np.float32))
    sl, sr = micro(x, x)
    assert sl.shape == sr.shape == (3, 120, 360)
    assert sl.dtype == np.float32


def test_identical_views_identical_outputs(micro, rng):
    x = Tensor(rng.random((3, 12, 30)).astype(np.float32))
    sl, sr = micro(x, x)
    np.testing.assert_array_equal(sl.data, sr.data)


@pytest.mark.parametrize("hw", [(7, 20), (5, 16), (13, 31)])
def test_non_divisible_sizes(hw, rng):
    model = build(SwinFsrConfig(n_rsftb=1, stl_per_block=2, embed_dim=8, num_heads=2), 0)
    x = Tensor(rng.random((3,) + hw).astype(np.float32))
    sl, _ = model(x, x)
    assert sl.shape == (3, 4 * hw[0], 4 * hw[1])


def test_zero_deep_params_gives_bilinear(rng):
    model = build(SwinFsrConfig(n_rsftb=1, embed_dim=8, num_heads=2), 0)
    for p in model.parameters():
        p.data[:] = 0
    l, r = Tensor(rng.random((3, 6, 15)).astype(np.float32)), Tensor(rng.random((3, 6, 15)).astype(np.float32))
    sl, sr = model(l, r)
    np.testing.assert_array_equal(sl.data, F.bilinear_resize(l, 4).data)
    np.testing.assert_array_equal(sr.data, F.bilinear_resize(r, 4).data)


def test_weight_sharing_gradient_flow(rng):
    model = build(SwinFsrConfig(n_rsftb=1, stl_per_block=1, embed_dim=8, num_heads=2), 0)
    l, r = Tensor(rng.random((3, 6, 15)).astype(np.float32)), Tensor(rng.random((3, 6, 15)).astype(np.float32))
    _, sr = model(l, r)
    sr.mean().backward()
    assert np.abs(model.shallow.weight.grad).max() > 0
    assert np.abs(model.blocks[0].stls[0].attn.qkv.weight.grad).max() > 0
    # mutating a shared weight changes both views
    before = [o.data.copy() for o in model(l, r)]
    model.shallow.weight.data *= 1.5
    after = [o.data for o in model(l, r)]
    assert not np.array_equal(before[0], after[0]) and not np.array_equal(before[1], after[1])


def test_batched_forward_matches_single(rng):
    model = build(SwinFsrConfig(n_rsftb=1, stl_per_block=2, embed_dim=8, num_heads=2), 0)
    l = rng.random((2, 3, 6, 15)).astype(np.float32)
    r = rng.random((2, 3, 6, 15)).astype(np.float32)
    sl, sr = model(Tensor(l), Tensor(r))
    for i in range(2):
        a, b = model(Tensor(l[i]), Tensor(r[i]))
        np.testing.assert_allclose(sl.data[i], a.data, atol=1e-5)
        np.testing.assert_allclose(sr.data[i], b.data, atol=1e-5)


def test_input_validation(micro):
    with pytest.raises(ValueError):
        micro(Tensor(np.zeros((1, 6, 15))), Tensor(np.zeros((1, 6, 15))))
    with pytest.raises(ValueError):
        micro(Tensor(np.zeros((3, 6, 15))), Tensor(np.zeros((3, 6, 30))))


def test_config_validation_and_text_round_trip():
    cfg = SwinFsrConfig(n_rsftb=3, embed_dim=12, num_heads=3, mlp_ratio=1.5)
    assert SwinFsrConfig.from_text(cfg.to_text()) == cfg
    with pytest.raises(ValueError):
        SwinFsrConfig(embed_dim=10, num_heads=4)
    with pytest.raises(ValueError):
        SwinFsrConfig(scale=2)
    with pytest.raises(ValueError):
        SwinFsrConfig(dropout_rate=1.0)
    with pytest.raises(ValueError):
        SwinFsrConfig.from_dict({"bogus": "1"})


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_are_valid(name):
    cfg = SwinFsrConfig(**PRESETS[name])
    assert cfg.n_rsftb == {"micro": 2, "S": 4, "B": 6, "L": 12}[name]
    assert count_params(build(SwinFsrConfig(**{**PRESETS[name], "n_rsftb": 1}), 0)) > 0
