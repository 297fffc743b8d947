"""The finite-difference gradient suite run by ``swinfsr gradcheck``.

Every case runs in float64 with parameters redrawn from N(0, 0.3^2): at the
default 0.02-scale init many gradients are so small that central differences
cannot resolve them. Losses are random-weighted means of the block output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from . import functional as F
from . import spectral
from .ffb import RSFTB, FastFourierBlock
from .gradcheck import GradCheckReport, grad_check
from .model import SwinFsrConfig, build
from .nn import Conv2d, Module, make_rng
from .rcam import RCAM
from .swin import SwinLayer, WindowAttention, WindowSpec
from .tensor import Tensor, default_dtype

SCOPES = ("tensor-autodiff", "spectral", "swin-stl", "ffb-rsftb", "rcam", "model")
PARAM_STD = 0.3


@dataclass(frozen=True)
class Case:
    name: str
    scope: str
    run: Callable[[], GradCheckReport]


def null_gradient_entries(module: Module) -> dict[int, np.ndarray]:
    """Flat indices of parameters whose gradient is identically zero, keyed by ``id(param)``.

    * the key third of every attention ``qkv.bias``: it adds ``q . b_k`` to a
      whole softmax row, which the softmax cancels;
    * the biases of an RCAM's ``resb2`` and ``w1``: both add a per-channel
      constant that the whitening step subtracts again.
    """
    out: dict[int, np.ndarray] = {}
    for m in module.modules():
        if isinstance(m, WindowAttention) and m.qkv.bias is not None:
            out[id(m.qkv.bias)] = np.arange(m.dim, 2 * m.dim)
        elif isinstance(m, RCAM):
            for conv in (m.resb2, m.w1):
                if conv.bias is not None:
                    out[id(conv.bias)] = np.arange(conv.bias.size)
    return out


def _randomize(module: Module, seed: int) -> None:
    rng = make_rng(seed)
    for p in module.parameters():
        p.data = rng.normal(0.0, PARAM_STD, p.shape)


def _weighted_mean(out: Tensor, seed: int) -> Tensor:
    w = make_rng(seed).standard_normal(out.shape)
    return (out * Tensor(w)).mean()


def _module_case(name: str, module: Module, inputs: list[Tensor], loss: Callable[..., Tensor],
                 seed: int, per: int | None) -> GradCheckReport:
    module.to(np.float64)
    _randomize(module, seed)
    params = module.parameters()
    nulls = null_gradient_entries(module)
    exclude = {len(inputs) + i: nulls[id(p)] for i, p in enumerate(params) if id(p) in nulls}
    n_in = len(inputs)
    return grad_check(lambda *a: loss(*a[:n_in]), inputs + params, max_per_input=per,
                      rng=make_rng(seed), name=name, exclude=exclude)


def _rand(seed: int, shape) -> Tensor:
    return Tensor(make_rng(seed).standard_normal(shape))


def _conv(seed: int, shape, k: int) -> GradCheckReport:
    conv = Conv2d(shape[-3], 5, k, make_rng(seed))
    x = _rand(seed + 1, shape)
    return _module_case(f"conv2d k{k} {shape}", conv, [x], lambda x: _weighted_mean(conv(x), seed), seed, None)


def _layer_norm(seed: int, shape) -> GradCheckReport:
    w, b, x = _rand(seed, shape[-1:]), _rand(seed + 1, shape[-1:]), _rand(seed + 2, shape)
    return grad_check(lambda x, w, b: _weighted_mean(F.layer_norm(x, w, b), seed), [x, w, b],
                      name=f"layer_norm {shape}")


def _softmax(seed: int, shape) -> GradCheckReport:
    x = _rand(seed, shape)
    return grad_check(lambda x: _weighted_mean(F.softmax(x * 3.0, axis=-1), seed), [x], name=f"softmax {shape}")


def _matmul(seed: int) -> GradCheckReport:
    a, b = _rand(seed, (2, 3, 4)), _rand(seed + 1, (2, 4, 5))
    return grad_check(lambda a, b: _weighted_mean(a @ b, seed), [a, b], name="matmul")


def _composite(seed: int) -> GradCheckReport:
    conv = Conv2d(3, 4, 3, make_rng(seed))
    x = _rand(seed + 1, (3, 5, 6))
    return _module_case("conv-gelu-layernorm", conv, [x],
                        lambda x: _weighted_mean(F.layer_norm(F.gelu(conv(x)), axis=-3), seed), seed, None)


def _activations(seed: int) -> GradCheckReport:
    # keep inputs away from the leaky-relu kink, where central differences are biased
    x = _rand(seed, (4, 6))
    x.data += np.sign(x.data) * 0.01
    return grad_check(lambda x: _weighted_mean(F.leaky_relu(x) * F.gelu(x), seed), [x], name="leaky_relu/gelu")


def _fft(seed: int, shape) -> GradCheckReport:
    x = _rand(seed, shape)
    return grad_check(lambda x: _weighted_mean(spectral.irfft2(spectral.rfft2(x) * 1.5, shape[-1]) ** 2, seed)
                      + _weighted_mean(spectral.rfft2(x), seed + 1), [x], name=f"rfft2/irfft2 {shape}")


def _spectrum(seed: int, shape) -> GradCheckReport:
    st = spectral.SpectrumTransform(shape[-3], make_rng(seed))
    x = _rand(seed + 1, shape)
    return _module_case(f"spectrum_transform {shape}", st, [x], lambda x: _weighted_mean(st(x), seed), seed, None)


def _stl(seed: int, shape, shift) -> GradCheckReport:
    layer = SwinLayer(shape[-3], 2, WindowSpec(6, 15, shift), make_rng(seed))
    x = _rand(seed + 1, shape)
    return _module_case(f"stl shift={shift} {shape}", layer, [x], lambda x: _weighted_mean(layer(x), seed), seed, 30)


def _ffb(seed: int, shape) -> GradCheckReport:
    block = FastFourierBlock(shape[-3], make_rng(seed))
    x = _rand(seed + 1, shape)
    return _module_case(f"ffb {shape}", block, [x], lambda x: _weighted_mean(block(x), seed), seed, 40)


def _rsftb(seed: int) -> GradCheckReport:
    block = RSFTB(8, 2, 2, WindowSpec(6, 15), make_rng(seed))
    x = _rand(seed + 1, (8, 12, 30))
    return _module_case(f"rsftb seed={seed}", block, [x], lambda x: _weighted_mean(block(x), seed), seed, 20)


def _rcam(seed: int, shape) -> GradCheckReport:
    module = RCAM(shape[-3], make_rng(seed))
    xl, xr = _rand(seed + 1, shape), _rand(seed + 2, shape)

    def loss(a, b):
        out_l, out_r = module(a, b)
        return _weighted_mean(out_l, seed) + _weighted_mean(out_r, seed + 1)

    return _module_case(f"rcam {shape}", module, [xl, xr], loss, seed, None)


def _model(seed: int) -> GradCheckReport:
    config = SwinFsrConfig(n_rsftb=1, stl_per_block=1, embed_dim=8, num_heads=2)
    model = build(config, seed)
    xl = Tensor(make_rng(seed + 1).random((3, 6, 15)))
    xr = Tensor(make_rng(seed + 2).random((3, 6, 15)))

    def loss(a, b):
        out_l, out_r = model(a, b)
        return _weighted_mean(out_l, seed) + _weighted_mean(out_r, seed + 1)

    return _module_case(f"model micro seed={seed}", model, [xl, xr], loss, seed, 8)


def cases() -> list[Case]:
    c = [
        Case("matmul", "tensor-autodiff", lambda: _matmul(0)),
        Case("conv2d", "tensor-autodiff", lambda: _conv(0, (3, 5, 7), 3)),
        Case("conv2d", "tensor-autodiff", lambda: _conv(1, (2, 4, 4, 3), 3)),
        Case("conv2d", "tensor-autodiff", lambda: _conv(2, (4, 3, 5), 1)),
        Case("layer_norm", "tensor-autodiff", lambda: _layer_norm(0, (4, 6))),
        Case("layer_norm", "tensor-autodiff", lambda: _layer_norm(1, (2, 3, 5))),
        Case("layer_norm", "tensor-autodiff", lambda: _layer_norm(2, (7,))),
        Case("softmax", "tensor-autodiff", lambda: _softmax(0, (3, 5))),
        Case("softmax", "tensor-autodiff", lambda: _softmax(1, (2, 2, 4))),
        Case("softmax", "tensor-autodiff", lambda: _softmax(2, (9,))),
        Case("activations", "tensor-autodiff", lambda: _activations(0)),
        Case("composite", "tensor-autodiff", lambda: _composite(0)),
        Case("rfft2", "spectral", lambda: _fft(0, (2, 4, 6))),
        Case("rfft2", "spectral", lambda: _fft(1, (1, 5, 7))),
        Case("rfft2", "spectral", lambda: _fft(2, (2, 3, 3, 4))),
        Case("spectrum_transform", "spectral", lambda: _spectrum(0, (4, 6, 15))),
        Case("spectrum_transform", "spectral", lambda: _spectrum(1, (3, 5, 8))),
        Case("spectrum_transform", "spectral", lambda: _spectrum(2, (2, 4, 7))),
        Case("stl", "swin-stl", lambda: _stl(0, (8, 6, 15), (0, 0))),
        Case("stl", "swin-stl", lambda: _stl(1, (8, 12, 30), (3, 7))),
        Case("stl", "swin-stl", lambda: _stl(2, (4, 5, 13), (3, 7))),
        Case("ffb", "ffb-rsftb", lambda: _ffb(0, (4, 6, 15))),
        Case("ffb", "ffb-rsftb", lambda: _ffb(1, (8, 5, 7))),
        Case("ffb", "ffb-rsftb", lambda: _ffb(2, (2, 3, 4, 4))),
    ]
    c += [Case("rsftb", "ffb-rsftb", (lambda s: lambda: _rsftb(s))(s)) for s in range(3)]
    c += [
        Case("rcam", "rcam", lambda: _rcam(3, (4, 3, 5))),
        Case("rcam", "rcam", lambda: _rcam(1, (3, 2, 6))),
        Case("rcam", "rcam", lambda: _rcam(2, (2, 4, 3, 4))),
    ]
    c += [Case("model", "model", (lambda s: lambda: _model(s))(s)) for s in (1, 2)]
    return c


def run_suite(scope: str = "all", echo: Callable[[str], None] | None = None) -> list[GradCheckReport]:
    if scope != "all" and scope not in SCOPES:
        raise ValueError(f"unknown scope {scope!r}; choose 'all' or one of {', '.join(SCOPES)}")
    reports = []
    with default_dtype(np.float64):
        for case in cases():
            if scope not in ("all", case.scope):
                continue
            report = case.run()
            reports.append(report)
            if echo:
                echo(report.line())
    return reports


def all_passed(reports: Iterable[GradCheckReport]) -> bool:
    return all(r.passed for r in reports)
