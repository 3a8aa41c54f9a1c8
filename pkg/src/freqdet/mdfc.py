"""Two-phase multi-domain coordination: spatial/frequency modulation, then refinement."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conv import global_avg_pool, max_pool2d, spatial_select, upsample_nearest
from .errors import ConfigError, ShapeError
from .frequency import SOBEL_EPS, Spectrum, conj_flip_index, fft2d, ifft2d, sobel_gradients
from .nn import Conv2d, Module, Parameter
from .tensor import Tensor, concat, sigmoid, silu, split


@dataclass(frozen=True)
class MdfcConfig:
    in_channels: int
    out_channels: int
    size: tuple[int, int]  # spatial extent of the low-level input
    adjacent_channels: int | None = None
    adjacent_scale: str = "same"  # neighbour extent vs phase-1 output: same | up | down
    reduction: int = 4
    act: bool = True

    def __post_init__(self):
        if self.in_channels % 2:
            raise ConfigError(f"MDFC needs an even channel count, got {self.in_channels}")
        if self.size[0] % 2 or self.size[1] % 2:
            raise ConfigError(f"MDFC needs even spatial extents, got {self.size}")
        if self.adjacent_scale not in ("same", "up", "down"):
            raise ConfigError(f"adjacent_scale must be same|up|down, got {self.adjacent_scale!r}")

    @property
    def half(self) -> int:
        return self.in_channels // 2

    @property
    def out_size(self) -> tuple[int, int]:
        return self.size[0] // 2, self.size[1] // 2

    @property
    def hidden(self) -> int:
        return max(1, self.out_channels // self.reduction)


class MdfcPhase1(Module):
    """Stride-2 spatial path times a spectrally cross-gated frequency path."""

    def __init__(self, cfg: MdfcConfig, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        c = cfg.half
        self.sp1 = Conv2d(c, c, 3, stride=2, rng=rng)
        self.sp2 = Conv2d(c, c, 3, rng=rng)
        self.phi = Conv2d(c, c, 1, rng=rng)
        self.op1 = Conv2d(c, c, 1, rng=rng)
        self.op2 = Conv2d(c, c, 1, rng=rng)
        self.proj = Conv2d(2 * c, cfg.out_channels, 1, rng=rng)

    def spatial(self, xs: Tensor) -> Tensor:
        h = self.sp1(xs)
        if self.cfg.act:
            h = silu(h)
        h = self.sp2(h)
        return silu(h) if self.cfg.act else h

    def frequency(self, xf: Tensor) -> Spectrum:
        mod = self.phi(max_pool2d(xf, 2))
        return ifft2d(fft2d(self.op1(mod)) * fft2d(self.op2(mod)))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise ShapeError(f"MDFC phase 1 expects {self.cfg.in_channels} channels, got {x.shape}")
        if x.shape[2] % 2 or x.shape[3] % 2:
            raise ShapeError(f"MDFC phase 1 needs even extents, got {x.shape[2:]}")
        xs, xf = split(x, [self.cfg.half, self.cfg.half], axis=1)
        sp = self.spatial(xs)
        fp = self.frequency(xf).re
        return self.proj(concat([sp * fp, sp], axis=1))


def _flip_matrix(n: int) -> np.ndarray:
    m = np.zeros((n, n))
    m[np.arange(n), conj_flip_index(n)] = 1.0
    return m


class MdfcPhase2(Module):
    """Fuse a neighbour feature, then add spectral, channel and structural cues."""

    def __init__(self, cfg: MdfcConfig, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        c = cfg.out_channels
        h, w = cfg.out_size
        adj = cfg.adjacent_channels if cfg.adjacent_channels is not None else c
        self.align = None
        if cfg.adjacent_scale == "down":
            self.align = Conv2d(adj, c, 3, stride=2, rng=rng)
        elif adj != c:
            self.align = Conv2d(adj, c, 1, rng=rng)
        self.gate_re = Parameter(np.ones((c, h, w)))
        self.gate_im = Parameter(np.zeros((c, h, w)))
        self.ca1 = Conv2d(c, cfg.hidden, 1, rng=rng)
        self.ca2 = Conv2d(cfg.hidden, c, 1, rng=rng)
        self.sobel = Conv2d(c, c, 1, bias=False, rng=rng)
        self.sobel.weight.data *= 0.1
        self.proj = Conv2d(c, c, 1, rng=rng)
        self.proj.weight.data *= 0.5
        self._flip = (_flip_matrix(h), _flip_matrix(w))

    def align_neighbor(self, neighbor: Tensor, target: tuple[int, int]) -> Tensor:
        if self.cfg.adjacent_scale == "up":
            fh, fw = target[0] // neighbor.shape[2], target[1] // neighbor.shape[3]
            if fh != fw or fh < 1 or fh * neighbor.shape[2] != target[0]:
                raise ShapeError(f"cannot upsample neighbour {neighbor.shape[2:]} to {target}")
            neighbor = upsample_nearest(neighbor, fh)
        if self.align is not None:
            neighbor = self.align(neighbor)
        return neighbor

    def symmetric_gate(self) -> Spectrum:
        c, h, w = self.gate_re.shape
        fh, fw = self._flip
        re = self.gate_re.reshape(1, c, h, w)
        im = self.gate_im.reshape(1, c, h, w)
        re_f = spatial_select(re, fh, fw, op="bin_flip")
        im_f = spatial_select(im, fh, fw, op="bin_flip")
        return Spectrum((re + re_f) * 0.5, (im - im_f) * 0.5)

    def channel_attention(self, z: Tensor) -> Tensor:
        return sigmoid(self.ca2(silu(self.ca1(global_avg_pool(z)))))

    def cues(self, z: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        spectral = ifft2d(fft2d(z) * self.symmetric_gate()).re
        channel = z * self.channel_attention(z)
        _, _, mag = sobel_gradients(z, padding="replicate")
        structural = self.sobel(mag - float(np.sqrt(SOBEL_EPS)))
        return spectral, channel, structural

    def forward(self, fused: Tensor, neighbor: Tensor) -> Tensor:
        neighbor = self.align_neighbor(neighbor, fused.shape[2:])
        if neighbor.shape != fused.shape:
            raise ShapeError(f"aligned neighbour {neighbor.shape} != fused {fused.shape}")
        z = fused + neighbor
        a, b, c = self.cues(z)
        return z + self.proj(a + b + c)


class MDFC(Module):
    def __init__(self, cfg: MdfcConfig, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        self.p1 = MdfcPhase1(cfg, rng)
        self.p2 = MdfcPhase2(cfg, rng)

    def forward(self, low: Tensor, adjacent: Tensor) -> Tensor:
        return self.p2(self.p1(low), adjacent)
