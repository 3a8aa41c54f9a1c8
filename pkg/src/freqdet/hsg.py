"""Heterogeneous split-gating: identity / gate / retain / compute routing."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conv import conv2d
from .errors import ConfigError, ShapeError
from .nn import Conv2d, Module
from .tensor import Tensor, concat, sigmoid, split


@dataclass(frozen=True)
class HsgConfig:
    channels: int
    alpha: float = 0.25
    gate: int | None = None
    retain: int | None = None
    compute: int | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.identity_width < 1 or self.processing_width < 1:
            raise ConfigError(
                f"channels={self.channels} with alpha={self.alpha} leaves an empty stream"
            )
        g, r, c = self.stream_widths
        if min(g, r, c) < 1:
            raise ConfigError(f"stream widths must be >= 1, got gate={g} retain={r} compute={c}")
        if g != c:
            raise ConfigError(f"gate width {g} must equal compute width {c} for elementwise gating")

    @property
    def identity_width(self) -> int:
        return int(math.floor(self.alpha * self.channels + 0.5))

    @property
    def processing_width(self) -> int:
        return self.channels - self.identity_width

    @property
    def stream_widths(self) -> tuple[int, int, int]:
        cp = self.processing_width
        third = cp // 3
        g = self.gate if self.gate is not None else third
        c = self.compute if self.compute is not None else third
        r = self.retain if self.retain is not None else cp - g - c
        return g, r, c

    @property
    def expanded_width(self) -> int:
        return sum(self.stream_widths)

    @property
    def fused_width(self) -> int:
        _, r, c = self.stream_widths
        return self.identity_width + r + c


@dataclass
class StreamSplit:
    gate: Tensor
    retain: Tensor
    compute: Tensor


def hsg_partition(x: Tensor, cfg: HsgConfig, mix_weight: Tensor,
                  mix_bias: Tensor | None = None) -> tuple[Tensor, StreamSplit]:
    """Leading ``C_r`` channels pass through; the rest are remapped by a 1x1 conv and split."""
    if x.ndim != 4 or x.shape[1] != cfg.channels:
        raise ShapeError(f"hsg_partition: expected {cfg.channels} channels, got shape {x.shape}")
    if mix_weight.shape != (cfg.expanded_width, cfg.processing_width, 1, 1):
        raise ConfigError(
            f"mix weight {mix_weight.shape} does not map {cfg.processing_width} -> {cfg.expanded_width}"
        )
    ident, proc = split(x, [cfg.identity_width, cfg.processing_width], axis=1)
    mixed = conv2d(proc, mix_weight, mix_bias)
    gate, retain, compute = split(mixed, list(cfg.stream_widths), axis=1)
    return ident, StreamSplit(gate, retain, compute)


def hsg_recombine(x: Tensor, identity: Tensor, streams: StreamSplit, processed: Tensor,
                  proj_weight: Tensor, proj_bias: Tensor | None = None) -> Tensor:
    """``x + proj(concat(identity, retain, sigmoid(gate) * processed))``."""
    if processed.shape != streams.compute.shape:
        raise ShapeError(
            f"processed compute stream {processed.shape} != compute stream {streams.compute.shape}"
        )
    fused = concat([identity, streams.retain, sigmoid(streams.gate) * processed], axis=1)
    return x + conv2d(fused, proj_weight, proj_bias)


class Identity(Module):
    def forward(self, x: Tensor) -> Tensor:
        return x


class HsgBlock(Module):
    """One split-gating block wrapped around a compute kernel."""

    def __init__(self, cfg: HsgConfig, kernel: Module | None = None, rng: np.random.Generator | None = None,
                 own_kernel: bool = True):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        self.mix = Conv2d(cfg.processing_width, cfg.expanded_width, 1, rng=rng)
        kernel = kernel if kernel is not None else Identity()
        if own_kernel:
            self.kernel = kernel
        else:
            # parameters live under the owner's naming scheme
            object.__setattr__(self, "kernel", kernel)
        self.proj = Conv2d(cfg.fused_width, cfg.channels, 1, rng=rng)
        self.proj.weight.data *= 0.5

    def forward(self, x: Tensor) -> Tensor:
        ident, streams = hsg_partition(x, self.cfg, self.mix.weight, self.mix.bias)
        processed = self.kernel(streams.compute)
        return hsg_recombine(x, ident, streams, processed, self.proj.weight, self.proj.bias)
