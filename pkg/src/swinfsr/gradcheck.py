"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .tensor import Tensor, no_grad

NULL_GRAD_TOL = 1e-8


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    tol: float
    checked: int
    worst: tuple = field(default=())
    excluded_max_abs: float = 0.0  # largest analytic gradient among excluded entries

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol and self.excluded_max_abs < NULL_GRAD_TOL

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<28s} max_rel_err={self.max_rel_error:.3e}  (n={self.checked}, tol={self.tol:g})"


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor], h: float = 1e-5, tol: float = 1e-4,
               max_per_input: int | None = None, rng: np.random.Generator | None = None,
               name: str = "grad_check", exclude: Mapping[int, np.ndarray] | None = None) -> GradCheckReport:
    """Compare autodiff gradients of scalar ``f(*inputs)`` with central differences.

    Entries of each input are perturbed in place. With ``max_per_input`` only a
    random subset of entries per input is checked. ``exclude`` maps an input
    position to flat indices left out of the comparison (entries whose true
    gradient is identically zero, where the finite difference is pure roundoff);
    their analytic gradients must instead be below ``NULL_GRAD_TOL`` in magnitude.
    """
    for t in inputs:
        if t.dtype != np.float64:
            raise TypeError("gradient checks run in float64")
        if not t.data.flags.c_contiguous:
            t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None
    out = f(*inputs)
    if out.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    if not np.isfinite(out.data).all():
        raise FloatingPointError("non-finite value in function under check")
    out.backward()
    analytic = [np.zeros(t.shape) if t.grad is None else t.grad.copy() for t in inputs]

    rng = rng or np.random.default_rng(0)
    worst, worst_at, checked, null_max = 0.0, (), 0, 0.0
    for k, t in enumerate(inputs):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if exclude and k in exclude:
            skipped = np.asarray(exclude[k], dtype=np.intp)
            if skipped.size:
                null_max = max(null_max, float(np.abs(analytic[k].reshape(-1)[skipped]).max()))
            idx = np.setdiff1d(idx, skipped)
        if max_per_input is not None and idx.size > max_per_input:
            idx = np.sort(rng.choice(idx, max_per_input, replace=False))
        numeric = np.empty(len(idx))
        for j, i in enumerate(idx):
            orig = flat[i]
            with no_grad():
                flat[i] = orig + h
                fp = f(*inputs).item()
                flat[i] = orig - h
                fm = f(*inputs).item()
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError("non-finite value during finite differencing")
            numeric[j] = (fp - fm) / (2.0 * h)
        err = relative_error(analytic[k].reshape(-1)[idx], numeric)
        checked += len(idx)
        if err.size and err.max() >= worst:
            worst = float(err.max())
            worst_at = (k, int(idx[int(err.argmax())]))
    return GradCheckReport(name, worst, tol, checked, worst_at, null_max)
