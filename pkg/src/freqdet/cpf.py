"""Partial re-parameterizable convolution and the cross-stage partial fusion block."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conv import conv2d
from .errors import ConfigError
from .nn import Conv2d, Module, Parameter, kaiming_uniform
from .tensor import Tensor, concat, silu, split


def partial_width(channels: int, fraction: float) -> int:
    cp = channels * fraction
    if abs(cp - round(cp)) > 1e-9 or round(cp) < 1:
        raise ConfigError(f"partial width {channels} x {fraction} = {cp} is not a positive integer")
    return int(round(cp))


@dataclass
class RepBranches:
    """Train-time branches over the partial slice (all C_p -> C_p, stride 1)."""

    w3: np.ndarray  # [Cp, Cp, 3, 3]
    b3: np.ndarray
    w1: np.ndarray  # [Cp, Cp, 1, 1]
    b1: np.ndarray
    id_scale: np.ndarray  # [Cp]


@dataclass
class MergedKernel:
    weight: np.ndarray  # [Cp, Cp, 3, 3]
    bias: np.ndarray


def merge_reparam(br: RepBranches) -> MergedKernel:
    """Fold 1x1 and identity branches into the 3x3 centre tap; sum biases."""
    w = br.w3.copy()
    w[:, :, 1, 1] += br.w1[:, :, 0, 0]
    idx = np.arange(w.shape[0])
    w[idx, idx, 1, 1] += br.id_scale
    return MergedKernel(w, br.b3 + br.b1)


def branch_forward(x: Tensor, br: RepBranches) -> Tensor:
    return (conv2d(x, Tensor(br.w3), Tensor(br.b3), padding=1)
            + conv2d(x, Tensor(br.w1), Tensor(br.b1))
            + x * Tensor(br.id_scale.reshape(1, -1, 1, 1)))


class PRConv(Module):
    """Re-parameterizable 3x3 conv on the leading ``fraction`` of channels; the rest pass through."""

    def __init__(self, channels: int, fraction: float = 0.25, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.channels = channels
        self.cp = cp = partial_width(channels, fraction)
        self.deployed = False
        self.w3 = Parameter(kaiming_uniform(rng, (cp, cp, 3, 3), 9 * cp, gain=0.5))
        self.b3 = Parameter(np.zeros(cp))
        self.w1 = Parameter(kaiming_uniform(rng, (cp, cp, 1, 1), cp, gain=0.5))
        self.b1 = Parameter(np.zeros(cp))
        self.id_scale = Parameter(np.ones(cp))

    def branches(self) -> RepBranches:
        return RepBranches(self.w3.data, self.b3.data, self.w1.data, self.b1.data, self.id_scale.data)

    def switch_to_deploy(self) -> None:
        if self.deployed:
            return
        merged = merge_reparam(self.branches())
        for key in ("w3", "b3", "w1", "b1", "id_scale"):
            del self._params[key]
            object.__delattr__(self, key)
        self.weight = Parameter(merged.weight)
        self.bias = Parameter(merged.bias)
        self.deployed = True

    def _conv(self, xs: Tensor) -> Tensor:
        if self.deployed:
            return conv2d(xs, self.weight, self.bias, padding=1)
        return (conv2d(xs, self.w3, self.b3, padding=1)
                + conv2d(xs, self.w1, self.b1)
                + xs * self.id_scale.reshape(1, self.cp, 1, 1))

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.channels:
            raise ConfigError(f"PRConv expects {self.channels} channels, got {x.shape[1]}")
        xs, rest = split(x, [self.cp, self.channels - self.cp], axis=1)
        return concat([self._conv(xs), rest], axis=1)


class CPF(Module):
    """``y = x + contract(act(expand(prconv(x))))``."""

    def __init__(self, channels: int, fraction: float = 0.25, expansion: int = 2, act: bool = True,
                 rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.act = act
        self.prconv = PRConv(channels, fraction, rng)
        self.expand = Conv2d(channels, expansion * channels, 1, rng=rng)
        self.contract = Conv2d(expansion * channels, channels, 1, rng=rng)
        self.contract.weight.data *= 0.5

    def forward(self, x: Tensor) -> Tensor:
        h = self.expand(self.prconv(x))
        if self.act:
            h = silu(h)
        return x + self.contract(h)

    def switch_to_deploy(self) -> None:
        self.prconv.switch_to_deploy()


def repconv_parameter_count(channels: int) -> int:
    """3x3 + 1x1 + identity branches with biases over ``channels`` -> ``channels``."""
    return 9 * channels * channels + channels + channels * channels + channels + channels
