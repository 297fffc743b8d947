import numpy as np
import pytest

from swinfsr import checks
from swinfsr.gradcheck import grad_check
from swinfsr.tensor import Tensor


def test_grad_check_detects_wrong_gradient(f64, rng):
    x = Tensor(rng.random(5), requires_grad=True)
    good = grad_check(lambda t: (t * t).sum(), [x])
    assert good.passed and good.max_rel_error < 1e-8
    wrong = grad_check(lambda t: (t * t).sum() + (t - Tensor(t.data)).sum(), [x])
    assert not wrong.passed


def test_grad_check_requires_float64(rng):
    with pytest.raises((TypeError, ValueError)):
        grad_check(lambda t: t.sum(), [Tensor(rng.random(3).astype(np.float32), requires_grad=True)])


def test_exclusion_requires_null_gradient(f64, rng):
    x = Tensor(rng.random(4), requires_grad=True)
    rep = grad_check(lambda t: (t * t).sum(), [x], exclude={0: np.array([1])})
    assert not rep.passed and rep.excluded_max_abs > 0


@pytest.mark.parametrize("scope", checks.SCOPES)
def test_suite_scope_passes(scope):
    reports = checks.run_suite(scope)
    assert reports
    bad = [(r.name, r.max_rel_error) for r in reports if not r.passed]
    assert not bad
