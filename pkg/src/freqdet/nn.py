"""Parameter containers and the few layers the blocks are built from."""
from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from .conv import ConvSpec, conv2d
from .errors import ConfigError, ShapeError
from .tensor import Tensor, silu, sqrt


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data, name: str | None = None):
        super().__init__(data, requires_grad=True, name=name)


class Module:
    """Minimal module tree: attributes holding Parameters or Modules are registered."""

    def __init__(self):
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._params[key] = value
            self._modules.pop(key, None)
        elif isinstance(value, Module):
            self._modules[key] = value
            self._params.pop(key, None)
        object.__setattr__(self, key, value)

    def add_module(self, name: str, module: "Module") -> "Module":
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for k, p in self._params.items():
            yield prefix + k, p
        for k, m in self._modules.items():
            yield from m.named_parameters(prefix + k + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, p.data.copy()) for k, p in self.named_parameters())

    def load_state_dict(self, state: dict, strict: bool = True) -> None:
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            if missing or extra:
                raise ConfigError(f"state mismatch; missing={missing[:5]} unexpected={extra[:5]}")
        for k, v in state.items():
            if k not in own:
                continue
            v = np.asarray(v, dtype=np.float64)
            if v.shape != own[k].shape:
                raise ShapeError(f"parameter {k}: shape {v.shape} != {own[k].shape}")
            own[k].data = v.copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


def kaiming_uniform(rng: np.random.Generator, shape: tuple, fan_in: int, gain: float = 1.0) -> np.ndarray:
    bound = gain * np.sqrt(3.0 / max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, kernel: int = 1, stride: int = 1, padding: int | None = None,
                 groups: int = 1, bias: bool = True, rng: np.random.Generator | None = None):
        super().__init__()
        if padding is None:
            padding = kernel // 2
        self.spec = ConvSpec(cin, cout, kernel, kernel, stride, padding, groups, bias)
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = (cin // groups) * kernel * kernel
        self.weight = Parameter(kaiming_uniform(rng, self.spec.weight_shape, fan_in))
        self.bias = Parameter(np.zeros(cout)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        s = self.spec
        return conv2d(x, self.weight, self.bias, stride=s.stride, padding=s.padding, groups=s.groups)


class InstanceNorm2d(Module):
    """Per-sample, per-channel normalization over H x W with learnable scale/shift."""

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = Parameter(np.ones(channels))
        self.bias = Parameter(np.zeros(channels))

    def forward(self, x: Tensor) -> Tensor:
        c = x.shape[1]
        mu = x.mean(axis=(2, 3), keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=(2, 3), keepdims=True)
        y = xc / sqrt(var + self.eps)
        return y * self.weight.reshape(1, c, 1, 1) + self.bias.reshape(1, c, 1, 1)


class ConvNormAct(Module):
    def __init__(self, cin: int, cout: int, kernel: int = 3, stride: int = 1, groups: int = 1,
                 norm: bool = True, act: bool = True, rng: np.random.Generator | None = None):
        super().__init__()
        self.conv = Conv2d(cin, cout, kernel, stride, groups=groups, bias=not norm, rng=rng)
        self.norm = InstanceNorm2d(cout) if norm else None
        self.act = act

    def forward(self, x: Tensor) -> Tensor:
        y = self.conv(x)
        if self.norm is not None:
            y = self.norm(y)
        return silu(y) if self.act else y
