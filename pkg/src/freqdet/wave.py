"""Cascaded Haar analysis/synthesis kernel with coarse-to-fine LL prior injection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conv import conv2d
from .errors import ConfigError, ShapeError
from .frequency import hwt_stacked, ihwt_stacked
from .nn import Conv2d, Module
from .tensor import GradTape, Tensor, concat, split


@dataclass(frozen=True)
class WaveConfig:
    channels: int
    depth: int = 2
    kernel: int = 5
    bias: bool = True

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError(f"wavelet depth must be >= 1, got {self.depth}")
        if self.channels < 1:
            raise ConfigError("wave kernel needs at least one channel")
        if self.kernel % 2 == 0:
            raise ConfigError("band-mixing kernel must be odd")

    @property
    def groups(self) -> int:
        # one group per sub-band
        return 4


def wave_forward(x: Tensor, cfg: WaveConfig, weights: list[Tensor],
                 biases: list[Tensor | None] | None = None) -> Tensor:
    """Recursive analysis -> band mixing -> prior injection -> synthesis.

    ``weights[l]`` is the grouped [4C, C, k, k] kernel for level ``l + 1``.
    """
    f = 2 ** cfg.depth
    if x.ndim != 4 or x.shape[2] % f or x.shape[3] % f:
        raise ShapeError(f"wave: extents {x.shape[2:]} not divisible by 2^{cfg.depth}")
    if len(weights) != cfg.depth:
        raise ConfigError(f"wave: expected {cfg.depth} level kernels, got {len(weights)}")
    biases = biases if biases is not None else [None] * cfg.depth
    c = cfg.channels
    pad = cfg.kernel // 2

    def level(inp: Tensor, l: int) -> Tensor:
        bands = hwt_stacked(inp)
        mixed = conv2d(bands, weights[l], biases[l], padding=pad, groups=4)
        if l + 1 < cfg.depth:
            ll_raw = split(bands, [c, 3 * c], axis=1)[0]
            prior = level(ll_raw, l + 1)
            ll, detail = split(mixed, [c, 3 * c], axis=1)
            mixed = concat([ll + prior, detail], axis=1)
        return ihwt_stacked(mixed)

    return level(x, 0)


class WaveKernel(Module):
    kind = "wave"

    def __init__(self, cfg: WaveConfig, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        self.levels = []
        for l in range(cfg.depth):
            conv = Conv2d(4 * cfg.channels, 4 * cfg.channels, cfg.kernel, groups=4, bias=cfg.bias, rng=rng)
            self.add_module(f"l{l + 1}", conv)
            self.levels.append(conv)

    def forward(self, x: Tensor) -> Tensor:
        return wave_forward(x, self.cfg, [m.weight for m in self.levels], [m.bias for m in self.levels])


def identity_band_mixing(cfg: WaveConfig, prior_aware: bool = True) -> list[np.ndarray]:
    """Per-level kernels that pass every band through unchanged.

    With ``prior_aware`` the LL block of every level except the deepest is
    zeroed: that LL is re-supplied by the injected prior, which makes the
    whole cascade an exact identity for any depth.
    """
    c, k = cfg.channels, cfg.kernel
    out = []
    for l in range(cfg.depth):
        w = np.zeros((4 * c, c, k, k))
        for o in range(4 * c):
            w[o, o % c, k // 2, k // 2] = 1.0
        if prior_aware and l + 1 < cfg.depth:
            w[:c] = 0.0
        out.append(w)
    return out


def wave_receptive_probe(cfg: WaveConfig, size: int = 64, kernel: WaveKernel | None = None,
                         seed: int = 0, rel_tol: float = 1e-12) -> np.ndarray:
    """Boolean [size, size] support of d(center output)/d(input).

    Uses the supplied kernel's parameters, or a seeded random kernel.
    """
    kernel = kernel if kernel is not None else WaveKernel(cfg, np.random.default_rng(seed))
    x = Tensor(np.random.default_rng(seed + 1).standard_normal((1, cfg.channels, size, size)),
               requires_grad=True)
    with GradTape() as tape:
        y = kernel(x)
        c = size // 2
        target = y[:, :, c, c].sum()
    if target.requires_grad:
        g = np.abs(tape.backward(target, accumulate=False).get(x, np.zeros(x.shape))).sum(axis=(0, 1))
    else:
        g = np.zeros((size, size))
    peak = g.max()
    if peak == 0:
        return np.zeros((size, size), dtype=bool)
    return g > rel_tol * peak
