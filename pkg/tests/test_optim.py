import numpy as np
import pytest

from swinfsr.nn import Parameter
from swinfsr.optim import Adam, AdamState, adam_step, cosine_lr
from swinfsr.tensor import Tensor


def test_zero_gradient_leaves_params():
    p = Parameter(np.array([1.0, -2.0]))
    opt = Adam([p], lr=0.1)
    p.grad = np.zeros(2)
    opt.step()
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_first_step_is_lr_times_sign(f64):
    p = Parameter(np.array([1.0, 1.0, 1.0], dtype=np.float64))
    opt = Adam([p], lr=1e-3)
    p.grad = np.array([3.0, -0.5, 1e-2])
    opt.step()
    # bias correction makes m_hat / sqrt(v_hat) = sign(g) on step one
    np.testing.assert_allclose(p.data - 1.0, [-1e-3, 1e-3, -1e-3], rtol=1e-5)


def test_second_step_matches_hand_computation(f64):
    p = Parameter(np.array([0.0], dtype=np.float64))
    st = [AdamState((1,), np.float64)]
    adam_step([p], [np.array([1.0])], st, lr=1.0, beta1=0.9, beta2=0.9, eps=0.0)
    adam_step([p], [np.array([2.0])], st, lr=1.0, beta1=0.9, beta2=0.9, eps=0.0)
    m = (0.1 * 0.9 + 0.2) / (1 - 0.81)
    v = (0.1 * 0.9 + 0.4) / (1 - 0.81)
    assert p.data[0] == pytest.approx(-1.0 - m / np.sqrt(v), rel=1e-12)


def test_minimizes_quadratic():
    w = Parameter(np.array([3.0]))
    opt = Adam([w], lr=0.05)
    for _ in range(100):
        opt.zero_grad()
        loss = (w * w).sum()
        loss.backward()
        opt.step()
    assert abs(w.data[0]) < 0.5


def test_shape_mismatch_raises():
    p = Parameter(np.zeros(3))
    with pytest.raises(ValueError):
        adam_step([p], [np.zeros(4)], [AdamState((3,), p.dtype)], lr=0.1)


def test_none_gradient_skipped():
    p = Parameter(np.ones(2))
    opt = Adam([p])
    opt.step()
    np.testing.assert_array_equal(p.data, 1.0)
    assert opt.state[0].t == 0


def test_cosine_schedule():
    assert cosine_lr(0, 100) == pytest.approx(1e-4)
    assert cosine_lr(100, 100) == pytest.approx(1e-5)
    assert cosine_lr(50, 100) == pytest.approx(5.5e-5)
    lrs = [cosine_lr(s, 100) for s in range(101)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    with pytest.raises(ValueError):
        cosine_lr(101, 100)
    with pytest.raises(ValueError):
        cosine_lr(0, 0)
