import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swinfsr.nn import make_rng
from swinfsr.rcam import RCAM, bidirectional_attention, cross_scores, rcam_forward, whiten
from swinfsr.tensor import Tensor


def test_whiten_cases():
    np.testing.assert_array_equal(whiten(Tensor([[[1.0, 2.0, 3.0]]])).data, [[[-1, 0, 1]]])
    np.testing.assert_array_equal(whiten(Tensor(np.full((2, 3, 4), 7.0))).data, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_whiten_zero_mean_and_idempotent(c, h, w, seed):
    x = np.random.default_rng(seed).normal(3.0, 2.0, (c, h, w)).astype(np.float32)
    y = whiten(Tensor(x)).data
    assert np.abs(y.mean(axis=-1)).max() < 1e-6
    assert np.abs(whiten(Tensor(y)).data - y).max() < 1e-6


def test_cross_scores_loop_oracle(rng, f64):
    q, k = rng.standard_normal((1, 2, 3)), rng.standard_normal((1, 2, 3))
    s = cross_scores(Tensor(q), Tensor(k)).data
    want = np.zeros((2, 3, 3))
    for h in range(2):
        for i in range(3):
            for j in range(3):
                want[h, i, j] = q[0, h, i] * k[0, h, j]
    np.testing.assert_array_equal(s, want)


def test_cross_scores_one_hot_identity():
    q = np.eye(4)[:, None, :]  # channel c is one-hot at column c
    s = cross_scores(Tensor(q), Tensor(q)).data
    np.testing.assert_array_equal(s[0], np.eye(4))


def test_cross_scores_transpose_symmetry(rng):
    q, k = Tensor(rng.standard_normal((5, 3, 7))), Tensor(rng.standard_normal((5, 3, 7)))
    np.testing.assert_array_equal(cross_scores(k, q).data, np.swapaxes(cross_scores(q, k).data, -1, -2))


def test_cross_scores_shape_mismatch():
    with pytest.raises(ValueError):
        cross_scores(Tensor(np.ones((2, 3, 4))), Tensor(np.ones((2, 3, 5))))


def test_zero_scores_give_row_means(rng, f64):
    vl, vr = rng.standard_normal((3, 2, 5)), rng.standard_normal((3, 2, 5))
    r2l, l2r, _ = bidirectional_attention(Tensor(np.zeros((2, 5, 5))), Tensor(vl), Tensor(vr), 3)
    np.testing.assert_allclose(r2l.data, np.broadcast_to(vr.mean(-1, keepdims=True), vr.shape), atol=1e-12)
    np.testing.assert_allclose(l2r.data, np.broadcast_to(vl.mean(-1, keepdims=True), vl.shape), atol=1e-12)


def test_dominant_diagonal_matches_identity(rng, f64):
    c = 4
    vl, vr = rng.standard_normal((c, 2, 6)), rng.standard_normal((c, 2, 6))
    s = np.where(np.eye(6, dtype=bool), 50.0, -50.0) * np.sqrt(c)
    r2l, l2r, (a_rl, a_lr) = bidirectional_attention(Tensor(np.broadcast_to(s, (2, 6, 6)).copy()),
                                                       Tensor(vl), Tensor(vr), c)
    assert np.abs(r2l.data - vr).max() < 1e-4
    assert np.abs(l2r.data - vl).max() < 1e-4


def test_attention_rows_stochastic_both_directions(rng):
    s = Tensor(rng.normal(0, 10, (3, 7, 7)))
    _, _, (a_rl, a_lr) = bidirectional_attention(s, Tensor(np.ones((2, 3, 7))), Tensor(np.ones((2, 3, 7))), 2)
    for a in (a_rl, a_lr):
        assert (a >= 0).all() and np.abs(a.sum(-1) - 1).max() < 1e-6


def test_gammas_start_at_zero():
    m = RCAM(8, make_rng(0))
    assert not m.gamma_l.data.any() and not m.gamma_r.data.any()


def test_identity_at_init_bit_exact():
    m = RCAM(8, make_rng(0))
    gen = make_rng(1)
    for _ in range(20):
        fl = Tensor(gen.standard_normal((8, 3, 10)).astype(np.float32))
        fr = Tensor(gen.standard_normal((8, 3, 10)).astype(np.float32))
        ol, orr = rcam_forward(fl, fr, m)
        np.testing.assert_array_equal(ol.data, fl.data)
        np.testing.assert_array_equal(orr.data, fr.data)


def test_view_swap_equivariance_exact(rng):
    m = RCAM(8, make_rng(0))
    g = rng.standard_normal(8).astype(np.float32)
    m.gamma_l.data = g.copy()
    m.gamma_r.data = g.copy()
    fl = Tensor(rng.standard_normal((2, 8, 3, 10)).astype(np.float32))
    fr = Tensor(rng.standard_normal((2, 8, 3, 10)).astype(np.float32))
    ol, orr = m(fl, fr)
    sl, sr = m(fr, fl)
    np.testing.assert_array_equal(sl.data, orr.data)
    np.testing.assert_array_equal(sr.data, ol.data)
    assert not np.array_equal(ol.data, fl.data)


def test_view_shape_mismatch():
    m = RCAM(4, make_rng(0))
    with pytest.raises(ValueError):
        m(Tensor(np.ones((4, 3, 5))), Tensor(np.ones((4, 3, 6))))


def test_queries_are_whitened(rng):
    m = RCAM(4, make_rng(0))
    q = m._queries(Tensor(rng.standard_normal((4, 3, 9)).astype(np.float32))).data
    assert np.abs(q.mean(-1)).max() < 1e-6
