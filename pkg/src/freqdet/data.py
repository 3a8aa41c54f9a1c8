"""Synthetic tiny-object scenes: filled shapes on textured backgrounds."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FileFormatError
from .io import load_tensor, read_annotations, save_tensor, write_annotations

SHAPES = ("square", "disc", "bar")
BACKGROUNDS = ("flat", "gradient", "noise", "checker")


@dataclass(frozen=True)
class SceneSpec:
    size: int = 64
    count: int = 64  # images
    min_objects: int = 1
    max_objects: int = 3
    min_size: int = 4
    max_size: int = 12
    background: str = "flat"
    shapes: tuple[str, ...] = SHAPES
    haze: float = 0.0
    min_contrast: float = 0.3
    noise_std: float = 0.08
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "shapes", tuple(self.shapes))
        if self.count < 1:
            raise ConfigError("count: need at least one image")
        if not 1 <= self.min_size <= self.max_size <= self.size:
            raise ConfigError(f"min_size/max_size: need 1 <= {self.min_size} <= {self.max_size} <= {self.size}")
        if not 0 <= self.min_objects <= self.max_objects:
            raise ConfigError("min_objects/max_objects: need 0 <= min <= max")
        if self.background not in BACKGROUNDS:
            raise ConfigError(f"background: expected one of {BACKGROUNDS}, got {self.background!r}")
        bad = [s for s in self.shapes if s not in SHAPES]
        if bad or not self.shapes:
            raise ConfigError(f"shapes: expected a subset of {SHAPES}, got {self.shapes}")
        if not 0.0 <= self.haze <= 1.0:
            raise ConfigError("haze: must lie in [0, 1]")
        if not 0.0 <= self.min_contrast <= 1.0:
            raise ConfigError("min_contrast: must lie in [0, 1]")


def class_id(shape: str) -> int:
    return SHAPES.index(shape)


def _background(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.size
    c0 = rng.uniform(0.1, 0.9, 3)
    if spec.background == "flat":
        img = np.broadcast_to(c0[:, None, None], (3, n, n))
    elif spec.background == "gradient":
        c1 = rng.uniform(0.1, 0.9, 3)
        theta = rng.uniform(0, 2 * np.pi)
        yy, xx = np.mgrid[0:n, 0:n] / max(n - 1, 1)
        t = (np.cos(theta) * xx + np.sin(theta) * yy)
        t = (t - t.min()) / max(t.max() - t.min(), 1e-12)
        img = c0[:, None, None] * (1 - t) + c1[:, None, None] * t
    elif spec.background == "noise":
        img = c0[:, None, None] + spec.noise_std * rng.standard_normal((3, n, n))
    else:
        c1 = rng.uniform(0.1, 0.9, 3)
        period = int(rng.integers(4, 13))
        yy, xx = np.mgrid[0:n, 0:n]
        mask = ((yy // period + xx // period) % 2).astype(bool)
        img = np.where(mask, c1[:, None, None], c0[:, None, None])
    return np.clip(np.array(img, dtype=np.float64), 0.0, 1.0)


def _shape_mask(shape: str, s: int, rng: np.random.Generator) -> np.ndarray:
    if shape == "square":
        return np.ones((s, s), dtype=bool)
    if shape == "disc":
        r = s / 2.0
        yy, xx = np.mgrid[0:s, 0:s] + 0.5
        return (yy - r) ** 2 + (xx - r) ** 2 <= r * r
    thin = max(1, s // 3)
    return np.ones((thin, s), dtype=bool) if rng.random() < 0.5 else np.ones((s, thin), dtype=bool)


def _colour(bg_mean: np.ndarray, min_contrast: float, rng: np.random.Generator) -> np.ndarray:
    for _ in range(100):
        c = rng.uniform(0.0, 1.0, 3)
        if np.abs(c - bg_mean).mean() >= min_contrast:
            return c
    # deterministic fallback: push every channel to the far end
    return np.where(bg_mean < 0.5, 1.0, 0.0)


def render_scene(spec: SceneSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One image [3,S,S] in [0,1] and its boxes [B,5] (class, cx, cy, w, h) normalized."""
    n = spec.size
    img = _background(spec, rng).copy()
    occupied = np.zeros((n, n), dtype=bool)
    want = int(rng.integers(spec.min_objects, spec.max_objects + 1))
    boxes = []
    for _ in range(50 * max(want, 1)):
        if len(boxes) == want:
            break
        shape = spec.shapes[int(rng.integers(len(spec.shapes)))]
        s = int(rng.integers(spec.min_size, spec.max_size + 1))
        mask = _shape_mask(shape, s, rng)
        h, w = mask.shape
        y = int(rng.integers(0, n - h + 1))
        x = int(rng.integers(0, n - w + 1))
        # keep a one-pixel moat so boxes never touch
        y0, y1, x0, x1 = max(0, y - 1), min(n, y + h + 1), max(0, x - 1), min(n, x + w + 1)
        if occupied[y0:y1, x0:x1].any():
            continue
        occupied[y:y + h, x:x + w] = True
        region = img[:, y:y + h, x:x + w]
        colour = _colour(region.reshape(3, -1).mean(axis=1), spec.min_contrast, rng)
        region[:, mask] = colour[:, None]
        rows, cols = np.nonzero(mask)
        by0, by1 = y + rows.min(), y + rows.max() + 1
        bx0, bx1 = x + cols.min(), x + cols.max() + 1
        boxes.append([class_id(shape), (bx0 + bx1) / 2 / n, (by0 + by1) / 2 / n, (bx1 - bx0) / n, (by1 - by0) / n])
    if spec.haze > 0:
        img = (1.0 - spec.haze) * img + spec.haze
    return img, np.array(boxes, dtype=np.float64).reshape(-1, 5)


def generate_scenes(spec: SceneSpec) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    """In-memory dataset; image ``i`` uses its own child seed so order never matters."""
    children = np.random.SeedSequence(spec.seed).spawn(spec.count)
    images, ann = [], {}
    for i, ss in enumerate(children):
        img, boxes = render_scene(spec, np.random.default_rng(ss))
        images.append(img)
        ann[i] = boxes
    return np.stack(images), ann


def image_path(root: Path, image_id: int) -> Path:
    return Path(root) / "images" / f"{image_id:06d}.fmct"


def generate_dataset(spec: SceneSpec, out_dir) -> dict[int, np.ndarray]:
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    images, ann = generate_scenes(spec)
    for i, img in enumerate(images):
        save_tensor(image_path(out, i), img)
    write_annotations(out / "annotations.txt", ann)
    return ann


@dataclass
class Dataset:
    images: np.ndarray  # [N,3,H,W]
    annotations: dict[int, np.ndarray]
    ids: list[int]

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def image_size(self) -> tuple[int, int]:
        return self.images.shape[2], self.images.shape[3]

    def boxes(self, index: int) -> np.ndarray:
        return self.annotations[self.ids[index]]


def pad_to_multiple(image: np.ndarray, boxes: np.ndarray, multiple: int) -> tuple[np.ndarray, np.ndarray]:
    """Reflection-pad bottom/right to the next legal extent and renormalize boxes."""
    _, h, w = image.shape
    nh, nw = -(-h // multiple) * multiple, -(-w // multiple) * multiple
    if (nh, nw) == (h, w):
        return image, boxes
    if nh - h >= h or nw - w >= w:
        mode = "symmetric"
    else:
        mode = "reflect"
    padded = np.pad(image, ((0, 0), (0, nh - h), (0, nw - w)), mode=mode)
    b = np.array(boxes, dtype=np.float64).reshape(-1, 5).copy()
    b[:, [1, 3]] *= w / nw
    b[:, [2, 4]] *= h / nh
    return padded, b


def load_dataset(root, multiple: int = 1) -> Dataset:
    root = Path(root)
    files = sorted((root / "images").glob("*.fmct"))
    if not files:
        raise FileNotFoundError(f"no images under {root / 'images'}")
    ids = []
    for f in files:
        try:
            ids.append(int(f.stem))
        except ValueError:
            raise FileFormatError(f"{f}: image file names must be integer ids") from None
    ann = read_annotations(root / "annotations.txt", ids)
    unknown = sorted(set(ann) - set(ids))
    if unknown:
        raise DataError(f"annotations reference missing images {unknown[:5]}")
    imgs = []
    for i, f in zip(ids, files):
        img = load_tensor(f)
        if img.ndim != 3 or img.shape[0] != 3:
            raise DataError(f"{f}: expected a [3,H,W] image, got {img.shape}")
        img, ann[i] = pad_to_multiple(img, ann[i], multiple)
        imgs.append(img)
    if len({im.shape for im in imgs}) != 1:
        raise DataError("images in one dataset must share an extent")
    return Dataset(np.stack(imgs), ann, ids)
