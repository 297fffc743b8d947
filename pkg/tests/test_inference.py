import numpy as np
import pytest

from swinfsr.data import DataError, StereoPair
from swinfsr.inference import (Transform, TtaPlan, bilinear_predictor, ensemble, evaluate, infer, model_predictor,
                               read_image_set, tiled_infer, tta_infer, window_tile, write_image_set)
from swinfsr.model import SwinFsrConfig, build

TINY = SwinFsrConfig(n_rsftb=1, stl_per_block=2, embed_dim=8, num_heads=2)


@pytest.fixture(scope="module")
def model():
    m = build(TINY, 4)
    for f in m.fusions:  # make the cross-view path active
        f.gamma_l.data[:] = 0.3
        f.gamma_r.data[:] = -0.2
    return m


def _views(rng, h=6, w=15):
    return rng.random((3, h, w)).astype(np.float32), rng.random((3, h, w)).astype(np.float32)


def test_plan_contents():
    assert [t.name for t in TtaPlan().transforms] == ["identity", "V", "H", "HV"]
    assert [t.name for t in TtaPlan.identity().transforms] == ["identity"]
    assert all(p.transforms[0] == Transform() for p in (TtaPlan(), TtaPlan(True, False), TtaPlan(False, True)))


def test_transforms_are_involutions(rng):
    l, r = _views(rng)
    for t in TtaPlan().transforms:
        a, b = t(*t(l, r))
        np.testing.assert_array_equal(a, l)
        np.testing.assert_array_equal(b, r)
    a, b = Transform(hflip=True)(l, r)
    np.testing.assert_array_equal(a, r[..., ::-1])


def test_identity_plan_bit_identical(model, rng):
    l, r = _views(rng)
    pred = model_predictor(model)
    for a, b in zip(tta_infer(pred, l, r, TtaPlan.identity()), pred(l, r)):
        np.testing.assert_array_equal(a, b)


def test_bilinear_tta_equals_plain(rng):
    l, r = _views(rng, 7, 11)
    for a, b in zip(tta_infer(bilinear_predictor, l, r), bilinear_predictor(l, r)):
        assert np.abs(a - b).max() < 1e-6


def test_tta_manual_composition(model, rng):
    l, r = _views(rng)
    pred = model_predictor(model)
    outs = []
    for h in (False, True):
        for v in (False, True):
            il, ir = l, r
            if v:
                il, ir = il[:, ::-1], ir[:, ::-1]
            if h:
                il, ir = ir[:, :, ::-1], il[:, :, ::-1]
            sl, sr = pred(np.ascontiguousarray(il), np.ascontiguousarray(ir))
            if h:
                sl, sr = sr[:, :, ::-1], sl[:, :, ::-1]
            if v:
                sl, sr = sl[:, ::-1], sr[:, ::-1]
            outs.append((sl.astype(np.float64), sr.astype(np.float64)))
    got = tta_infer(pred, l, r)
    for view in range(2):
        expected = sum(o[view] for o in outs) / 4
        assert np.abs(got[view] - expected).max() < 1e-6


def test_tta_deterministic(model, rng):
    l, r = _views(rng)
    a = infer(model_predictor(model), l, r, TtaPlan())
    b = infer(model_predictor(model), l, r, TtaPlan())
    np.testing.assert_array_equal(a[0], b[0])


def test_single_tile_is_exact(model, rng):
    l, r = _views(rng, 6, 15)
    pred = model_predictor(model)
    for a, b in zip(tiled_infer(pred, l, r, (6, 15)), pred(l, r)):
        np.testing.assert_array_equal(a, b)


def test_tiling_recovers_pointwise_predictor(rng):
    # a predictor with no spatial context is reproduced exactly by the blend
    def nearest(l, r):
        up = lambda x: x.repeat(4, axis=-2).repeat(4, axis=-1)
        return up(l), up(r)

    l, r = _views(rng, 23, 41)
    for a, b in zip(tiled_infer(nearest, l, r, (12, 15)), nearest(l, r)):
        assert np.abs(a - b).max() < 1e-6


def test_tiling_bilinear_interior(rng):
    l, r = _views(rng, 20, 40)
    tiled = tiled_infer(bilinear_predictor, l, r, (12, 20))
    plain = bilinear_predictor(l, r)
    assert tiled[0].shape == plain[0].shape == (3, 80, 160)
    # differences come only from tile borders (edge clamping vs. true neighbours)
    assert np.abs(tiled[0] - plain[0]).max() < 0.5
    assert np.abs(tiled[0] - plain[0]).mean() < 0.02


def test_tiled_model_shape_and_tiles(model, rng):
    l, r = _views(rng, 12, 30)
    sl, sr = infer(model_predictor(model), l, r, tile=window_tile(10, (6, 15)))
    assert window_tile(10, (6, 15)) == (12, 15)
    assert sl.shape == sr.shape == (3, 48, 120)
    with pytest.raises(ValueError):
        tiled_infer(bilinear_predictor, l, r, (4, 4))


def test_ensemble(rng):
    a = {"x": _views(rng)}
    b = {"x": _views(rng)}
    c = {"x": _views(rng)}
    same = ensemble([a, a])
    np.testing.assert_array_equal(same["x"][0], a["x"][0])
    zeros = {"x": (np.zeros((3, 2, 2)), np.zeros((3, 2, 2)))}
    ones = {"x": (np.ones((3, 2, 2)), np.ones((3, 2, 2)))}
    np.testing.assert_array_equal(ensemble([zeros, ones])["x"][1], 0.5)
    orders = [ensemble(s)["x"][0] for s in ([a, b, c], [c, a, b], [b, c, a])]
    for o in orders[1:]:
        np.testing.assert_array_equal(o, orders[0])
    with pytest.raises(ValueError):
        ensemble([a])
    with pytest.raises(DataError):
        ensemble([a, {"y": a["x"]}])


def test_image_set_round_trip(tmp_path, rng):
    q = lambda x: np.round(x * 255) / np.float32(255)
    images = {"s1": tuple(map(q, _views(rng))), "s2": tuple(map(q, _views(rng)))}
    write_image_set(images, tmp_path)
    back = read_image_set(tmp_path)
    assert sorted(back) == ["s1", "s2"]
    np.testing.assert_array_equal(back["s2"][1], images["s2"][1])
    with pytest.raises(DataError):
        read_image_set(tmp_path / "none")


def test_evaluate_scores_quantized(rng):
    hl, hr = rng.random((3, 8, 8)), rng.random((3, 8, 8))
    pair = StereoPair(np.zeros((3, 2, 2)), np.zeros((3, 2, 2)), hl, hr, "a")
    perfect = lambda l, r: (hl, hr)
    (score,) = evaluate(perfect, [pair])
    assert 50 < score.psnr < 99  # 8-bit rounding of a non-quantized target
    with pytest.raises(DataError):
        evaluate(perfect, [StereoPair(np.zeros((3, 2, 2)), np.zeros((3, 2, 2)))])
