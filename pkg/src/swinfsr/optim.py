"""Adam and the cosine-annealed learning rate."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .nn import Parameter


def cosine_lr(step: int, total_steps: int, lr_max: float = 1e-4, lr_min: float = 1e-5) -> float:
    """``lr_min + (lr_max - lr_min) * (1 + cos(pi * step / total)) / 2``."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


class AdamState:
    __slots__ = ("m", "v", "t")

    def __init__(self, shape, dtype):
        self.m = np.zeros(shape, dtype=dtype)
        self.v = np.zeros(shape, dtype=dtype)
        self.t = 0


def adam_step(params: Sequence[Parameter], grads: Sequence[np.ndarray | None], state: list,
              lr: float, beta1: float = 0.9, beta2: float = 0.9, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place. ``state`` holds one AdamState per param."""
    for p, g, s in zip(params, grads, state):
        if g is None:
            continue
        if g.shape != p.shape or s.m.shape != p.shape:
            raise ValueError(f"gradient/state shape mismatch for parameter of shape {p.shape}")
        s.t += 1
        s.m *= beta1
        s.m += (1.0 - beta1) * g
        s.v *= beta2
        s.v += (1.0 - beta2) * (g * g)
        m_hat = s.m / (1.0 - beta1 ** s.t)
        v_hat = s.v / (1.0 - beta2 ** s.t)
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype)


class Adam:
    """Adam over a fixed parameter list. Note the default ``beta2=0.9``."""

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-4, betas=(0.9, 0.9), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.state = [AdamState(p.shape, p.dtype) for p in self.params]

    def step(self, lr: float | None = None) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state,
                  self.lr if lr is None else lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
