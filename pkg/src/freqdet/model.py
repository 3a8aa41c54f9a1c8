"""Backbone stages, cross-scale fusion neck and dense detection head."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .akat import AkatConfig, AkatKernel
from .conv import max_pool2d, upsample_nearest
from .cpf import CPF, partial_width
from .errors import ConfigError, ShapeError
from .hsg import HsgBlock, HsgConfig
from .mdfc import MDFC, MdfcConfig
from .nn import Conv2d, ConvNormAct, Module
from .tensor import Tensor, concat
from .wave import WaveConfig, WaveKernel

LEGAL_DETECT_SETS = ((3, 4, 5), (2, 3, 4), (3, 4), (2, 4))
ABLATION_TOGGLES = ("wekat", "cpf", "mdfc")


@dataclass(frozen=True)
class ModelConfig:
    widths: tuple[int, ...] = (32, 64, 128, 256)
    depths: tuple[int, ...] = (1, 1, 2, 1)
    include_s5: bool = True
    detect: tuple[int, ...] = (3, 4, 5)
    num_classes: int = 3
    input_size: tuple[int, int] = (256, 256)
    wekat: bool = True  # off: plain residual conv blocks
    cpf: bool = True  # off: plain residual conv fusion
    mdfc: bool = True  # off: plain concat of the pooled finer scale
    alpha: float = 0.25
    wave_depth: int = 2
    wave_kernel: int = 5
    akat_heads: int = 1
    cpf_fraction: float = 0.25
    plain_ratio: float = 1.0  # hidden width of fallback blocks and fusions, relative to the stage width
    prior: float = 0.01
    seed: int = 0

    def __post_init__(self):
        for name in ("widths", "depths", "detect", "input_size"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        n = self.num_stages
        if len(self.widths) < n:
            raise ConfigError(f"widths: need {n} stage widths, got {len(self.widths)}")
        if len(self.depths) < n:
            raise ConfigError(f"depths: need {n} stage depths, got {len(self.depths)}")
        if any(w < 4 or w % 4 for w in self.widths[:n]):
            raise ConfigError(f"widths: every stage width must be a positive multiple of 4, got {self.widths}")
        if any(d < 1 for d in self.depths[:n]):
            raise ConfigError(f"depths: every stage needs at least one block, got {self.depths}")
        if not self.detect or len(set(self.detect)) != len(self.detect):
            raise ConfigError(f"detect: need distinct detect layers, got {self.detect}")
        if any(d not in self.levels for d in self.detect):
            raise ConfigError(f"detect: layers {self.detect} reference stages outside {self.levels}")
        if self.num_classes < 1:
            raise ConfigError("num_classes: must be >= 1")
        if not 0.0 < self.prior < 1.0:
            raise ConfigError("prior: must lie in (0, 1)")
        if self.plain_ratio <= 0:
            raise ConfigError("plain_ratio: must be positive")
        if self.cpf:
            for w in self.widths[:n]:
                partial_width(w, self.cpf_fraction)
        m = self.required_multiple
        if len(self.input_size) != 2 or any(s < m or s % m for s in self.input_size):
            raise ConfigError(f"input_size: extents {self.input_size} must be positive multiples of {m}")

    @property
    def num_stages(self) -> int:
        return 4 if self.include_s5 else 3

    @property
    def kinds(self) -> tuple[str, ...]:
        if not self.wekat:
            return ("plain",) * self.num_stages
        return ("wave", "wave", "akat", "akat")[:self.num_stages]

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(range(2, 2 + self.num_stages))

    def width(self, level: int) -> int:
        return self.widths[level - 2]

    def depth(self, level: int) -> int:
        return self.depths[level - 2]

    @staticmethod
    def stride(level: int) -> int:
        return 2 ** level

    @property
    def required_multiple(self) -> int:
        m = self.stride(self.levels[-1])
        if self.wekat:
            for level in self.levels[:2]:
                m = max(m, self.stride(level) * 2 ** self.wave_depth)
        if self.mdfc:
            m = max(m, 2 * self.stride(2))
        return m

    def extent(self, level: int) -> tuple[int, int]:
        s = self.stride(level)
        return self.input_size[0] // s, self.input_size[1] // s

    def to_dict(self) -> dict:
        return asdict(self)


class Group(Module):
    """Named container; children run in registration order."""

    def forward(self, x: Tensor) -> Tensor:
        for m in self._modules.values():
            x = m(x)
        return x


class PlainBlock(Module):
    """Residual pair of 3x3 convolutions; the fallback for the split-gating blocks."""

    def __init__(self, channels: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.c1 = ConvNormAct(channels, hidden, 3, rng=rng)
        self.c2 = ConvNormAct(hidden, channels, 3, act=False, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        return x + self.c2(self.c1(x))


class Head(Module):
    def __init__(self, channels: int, num_classes: int, prior: float, rng: np.random.Generator):
        super().__init__()
        self.stem = ConvNormAct(channels, channels, 3, rng=rng)
        self.cls = Conv2d(channels, num_classes, 1, rng=rng)
        self.cls.weight.data *= 0.1
        self.cls.bias.data[:] = -math.log((1 - prior) / prior)
        self.box = Conv2d(channels, 4, 1, rng=rng)
        self.box.weight.data *= 0.1

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        h = self.stem(x)
        return self.cls(h), self.box(h)


class Model(Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        w = cfg.width
        self.stem = Group()
        self.stem.add_module("c1", ConvNormAct(3, max(4, w(2) // 2), 3, stride=2, rng=rng))
        self.stem.add_module("c2", ConvNormAct(max(4, w(2) // 2), w(2), 3, stride=2, rng=rng))

        self.down = Group()
        self.hsg, self.wave, self.akat, self.plain = Group(), Group(), Group(), Group()
        self._stage_blocks: dict[int, list[Module]] = {}
        for i, level in enumerate(cfg.levels):
            if i > 0:
                self.down.add_module(f"s{level}", ConvNormAct(w(level - 1), w(level), 3, stride=2, rng=rng))
            blocks = []
            for b in range(cfg.depth(level)):
                key = f"s{level}.b{b}"
                blocks.append(self._make_block(cfg.kinds[i], w(level), key, rng))
            self._stage_blocks[level] = blocks

        self.neck, self.cpf = Group(), Group()
        self.mdfc = None
        if cfg.mdfc:
            h2, w2 = cfg.extent(2)
            self.mdfc = MDFC(MdfcConfig(w(2), w(3), (h2, w2), adjacent_channels=w(3)), rng)
        else:
            self.neck.add_module("pool3", ConvNormAct(w(2) + w(3), w(3), 1, rng=rng))
        levels = cfg.levels
        for level in reversed(levels[:-1]):
            self.neck.add_module(f"lat{level}", ConvNormAct(w(level + 1), w(level), 1, rng=rng))
            self.neck.add_module(f"td{level}", ConvNormAct(2 * w(level), w(level), 1, rng=rng))
            self._add_fuse(f"td{level}", w(level), rng)
        for level in levels[1:]:
            self.neck.add_module(f"bu{level}_down", ConvNormAct(w(level - 1), w(level), 3, stride=2, rng=rng))
            self.neck.add_module(f"bu{level}", ConvNormAct(2 * w(level), w(level), 1, rng=rng))
            self._add_fuse(f"bu{level}", w(level), rng)

        self.head = Group()
        for level in cfg.detect:
            self.head.add_module(f"d{level}", Head(w(level), cfg.num_classes, cfg.prior, rng))

    # -- construction helpers ------------------------------------------------

    def _make_block(self, kind: str, channels: int, key: str, rng) -> Module:
        cfg = self.cfg
        if kind == "plain":
            hidden = max(1, int(round(cfg.plain_ratio * channels)))
            return self._register(self.plain, key, PlainBlock(channels, hidden, rng))
        hcfg = HsgConfig(channels, alpha=cfg.alpha)
        width = hcfg.stream_widths[2]
        if kind == "wave":
            kernel = WaveKernel(WaveConfig(width, depth=cfg.wave_depth, kernel=cfg.wave_kernel), rng)
            self._register(self.wave, key, kernel)
        else:
            heads = cfg.akat_heads
            kernel = AkatKernel(AkatConfig(width, heads=heads), rng)
            self._register(self.akat, key, kernel)
        return self._register(self.hsg, key, HsgBlock(hcfg, kernel, rng, own_kernel=False))

    @staticmethod
    def _register(group: Group, key: str, module: Module) -> Module:
        stage, block = key.split(".")
        if stage not in group._modules:
            group.add_module(stage, Group())
        group._modules[stage].add_module(block, module)
        return module

    def _add_fuse(self, name: str, channels: int, rng) -> None:
        if self.cfg.cpf:
            self.cpf.add_module(name, CPF(channels, self.cfg.cpf_fraction, rng=rng))
        else:
            hidden = max(1, int(round(self.cfg.plain_ratio * channels)))
            self.neck.add_module(f"{name}_fuse", PlainBlock(channels, hidden, rng))

    def _fuse(self, name: str, x: Tensor) -> Tensor:
        if self.cfg.cpf:
            return self.cpf._modules[name](x)
        return self.neck._modules[f"{name}_fuse"](x)

    # -- forward -------------------------------------------------------------

    def check_input(self, x: Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected images [N,3,H,W], got {x.shape}")
        if tuple(x.shape[2:]) != self.cfg.input_size:
            raise ShapeError(f"image extent {x.shape[2:]} != configured input_size {self.cfg.input_size}")

    def features(self, x: Tensor) -> dict[str, Tensor]:
        """Every named intermediate map, finest first."""
        self.check_input(x)
        cfg = self.cfg
        out: dict[str, Tensor] = {}
        h = self.stem(x)
        out["stem"] = h
        feats = {}
        for level in cfg.levels:
            if level > 2:
                h = self.down._modules[f"s{level}"](h)
            for blk in self._stage_blocks[level]:
                h = blk(h)
            exp = cfg.extent(level)
            if tuple(h.shape[2:]) != exp:
                raise ShapeError(f"stage s{level}: extent {h.shape[2:]} != {exp}")
            feats[level] = out[f"s{level}"] = h

        lateral = dict(feats)
        if self.mdfc is not None:
            lateral[3] = out["mdfc"] = self.mdfc(feats[2], feats[3])
        else:
            lateral[3] = self.neck._modules["pool3"](concat([max_pool2d(feats[2], 2), feats[3]]))
        top = cfg.levels[-1]
        p = {top: lateral[top]}
        for level in reversed(cfg.levels[:-1]):
            up = upsample_nearest(self.neck._modules[f"lat{level}"](p[level + 1]), 2)
            merged = self.neck._modules[f"td{level}"](concat([lateral[level], up]))
            p[level] = out[f"p{level}"] = self._fuse(f"td{level}", merged)
        out[f"p{top}"] = p[top]
        n = {2: p[2]}
        for level in cfg.levels[1:]:
            down = self.neck._modules[f"bu{level}_down"](n[level - 1])
            merged = self.neck._modules[f"bu{level}"](concat([down, p[level]]))
            n[level] = self._fuse(f"bu{level}", merged)
        for level, t in n.items():
            out[f"n{level}"] = t
        return out

    def forward(self, x: Tensor) -> dict[int, tuple[Tensor, Tensor]]:
        feats = self.features(x)
        return {level: self.head._modules[f"d{level}"](feats[f"n{level}"]) for level in self.cfg.detect}

    def reparameterize(self) -> None:
        for m in self.cpf._modules.values():
            m.switch_to_deploy()

    @property
    def deployed(self) -> bool:
        return any(m.prconv.deployed for m in self.cpf._modules.values())


def build_model(cfg: ModelConfig) -> Model:
    return Model(cfg)


def forward_detect(model: Model, image: Tensor) -> dict[int, tuple[Tensor, Tensor]]:
    """Per detect layer: (class logits [N,K,h,w], raw box offsets [N,4,h,w])."""
    return model(image)


def parameter_count(cfg: ModelConfig) -> int:
    return build_model(cfg).num_parameters()


def plain_fallback(cfg: ModelConfig, target: int | None = None) -> ModelConfig:
    """All ablation toggles off, with the fallback block width tuned to the target budget."""
    target = parameter_count(cfg) if target is None else target
    base = replace(cfg, wekat=False, cpf=False, mdfc=False)
    lo_w = min(base.widths[:base.num_stages])
    best, best_gap = None, None
    for hidden in range(1, 4 * max(base.widths) + 1):
        ratio = hidden / lo_w
        cand = replace(base, plain_ratio=ratio)
        gap = abs(parameter_count(cand) - target)
        if best_gap is None or gap < best_gap:
            best, best_gap = cand, gap
        elif parameter_count(cand) > target:
            break
    return best
