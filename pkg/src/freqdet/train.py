"""AdamW training loop, checkpoint round-trips and batched inference."""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .boxes import DetectionBox, decode_and_nms
from .config import dump_config, load_config
from .data import Dataset, load_dataset
from .errors import ConfigError, NonFiniteError
from .io import load_checkpoint, save_checkpoint
from .loss import build_targets, detection_loss
from .metrics import APResult, evaluate_ap
from .model import Model, ModelConfig, build_model
from .tensor import GradTape, Tensor

META = "meta."


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 4
    epochs: int = 10
    iterations: int = 0  # > 0 overrides epochs
    grad_clip: float = 10.0  # global norm; 0 disables
    box_weight: float = 2.0
    eval_every: int = 1  # epochs between evaluations; 0 disables
    conf_threshold: float = 0.05
    iou_threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigError("lr/weight_decay: must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size: must be >= 1")
        if self.epochs < 1 and self.iterations < 1:
            raise ConfigError("epochs/iterations: need a positive training length")
        if not (0 < self.conf_threshold < 1 and 0 < self.iou_threshold < 1):
            raise ConfigError("conf_threshold/iou_threshold: must lie in (0, 1)")


CONFIG_SECTIONS = {"model": ModelConfig, "train": TrainConfig}


class TrainingDiverged(NonFiniteError):
    def __init__(self, message: str, tensor: str):
        super().__init__(message)
        self.tensor = tensor


class AdamW:
    """Adam with decoupled weight decay."""

    def __init__(self, params: list, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 5e-4):
        self.params = list(params)
        self.lr, self.betas, self.eps, self.wd = lr, betas, eps, weight_decay
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.betas
        c1, c2 = 1 - b1 ** self.t, 1 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps) + self.wd * p.data
            p.data = p.data - self.lr * update


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def model_tensors(model: Model) -> dict[str, np.ndarray]:
    out = dict(model.state_dict())
    for k, v in model.cfg.to_dict().items():
        out[META + k] = np.atleast_1d(np.asarray(v, dtype=np.float64))
    out[META + "deployed"] = np.array([1.0 if model.deployed else 0.0])
    return out


def config_from_tensors(tensors: dict[str, np.ndarray]) -> ModelConfig:
    defaults = ModelConfig()
    kwargs = {}
    for f in dataclasses.fields(ModelConfig):
        key = META + f.name
        if key not in tensors:
            raise ConfigError(f"checkpoint lacks {key}")
        arr = np.asarray(tensors[key]).ravel()
        like = getattr(defaults, f.name)
        if isinstance(like, tuple):
            kwargs[f.name] = tuple(int(round(v)) for v in arr)
        elif isinstance(like, bool):
            kwargs[f.name] = bool(arr[0])
        elif isinstance(like, int):
            kwargs[f.name] = int(round(arr[0]))
        else:
            # stored as float32; its shortest repr recovers the configured decimal
            kwargs[f.name] = float(str(np.float32(arr[0])))
    return ModelConfig(**kwargs)


def model_from_tensors(tensors: dict[str, np.ndarray]) -> Model:
    model = build_model(config_from_tensors(tensors))
    if tensors.get(META + "deployed", np.zeros(1))[0] > 0.5:
        model.reparameterize()
    model.load_state_dict({k: v for k, v in tensors.items() if not k.startswith(META)})
    return model


def save_model(path, model: Model) -> None:
    save_checkpoint(path, model_tensors(model))


def load_model(path) -> Model:
    return model_from_tensors(load_checkpoint(path))


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

def predict(model: Model, data: Dataset, conf_threshold: float = 0.05, iou_threshold: float = 0.5,
            batch_size: int = 8) -> list[DetectionBox]:
    out: list[DetectionBox] = []
    for start in range(0, len(data), batch_size):
        batch = data.images[start:start + batch_size]
        raw = model(Tensor(batch))
        for b in range(len(batch)):
            out.extend(decode_and_nms(raw, data.image_size, conf_threshold, iou_threshold,
                                      image_index=b, image_id=data.ids[start + b]))
    return out


def evaluate(model: Model, data: Dataset, conf_threshold: float = 0.05, iou_threshold: float = 0.5) -> APResult:
    preds = predict(model, data, conf_threshold, iou_threshold)
    return evaluate_ap(preds, data.annotations, data.image_size)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    metrics: list[dict] = field(default_factory=list)
    iterations: int = 0
    seconds: float = 0.0


def _diagnose(model: Model, grads: dict | None, exc: Exception | None) -> TrainingDiverged:
    for name, p in model.named_parameters():
        if not np.isfinite(p.data).all():
            return TrainingDiverged(f"non-finite parameter {name}", name)
    if grads is not None:
        for name, p in model.named_parameters():
            g = grads.get(p)
            if g is not None and not np.isfinite(g).all():
                return TrainingDiverged(f"non-finite gradient for parameter {name}", name)
    what = str(exc) if exc is not None else "loss"
    return TrainingDiverged(f"non-finite loss: {what}", what)


def train_step(model: Model, opt: AdamW, images: np.ndarray, annotations: list[np.ndarray],
               cfg: TrainConfig) -> tuple[float, dict]:
    mcfg = model.cfg
    targets = build_targets(annotations, mcfg.detect, mcfg.num_classes, mcfg.input_size)
    grads = None
    try:
        with GradTape() as tape:
            raw = model(Tensor(images))
            loss, parts = detection_loss(raw, targets, cfg.box_weight)
        grads = tape.backward(loss, accumulate=False)
    except NonFiniteError as exc:
        raise _diagnose(model, grads, exc) from exc
    g = [grads.get(p, np.zeros_like(p.data)) for p in opt.params]
    norm = float(np.sqrt(sum(float((x * x).sum()) for x in g)))
    if not np.isfinite(norm):
        raise _diagnose(model, grads, None)
    if cfg.grad_clip > 0 and norm > cfg.grad_clip:
        g = [x * (cfg.grad_clip / norm) for x in g]
    opt.step(g)
    parts["grad_norm"] = norm
    return float(loss.data), parts


def format_record(fields: dict) -> str:
    def fmt(v):
        return f"{v:.6g}" if isinstance(v, float) else str(v)
    return " ".join(f"{k}={fmt(v)}" for k, v in fields.items())


def train(model: Model, data: Dataset, cfg: TrainConfig, log: Callable[[str], None] | None = None,
          eval_data: Dataset | None = None) -> TrainResult:
    """Sequential training; returns the per-iteration loss history and per-epoch metrics."""
    if data.image_size != model.cfg.input_size:
        raise ConfigError(f"model.input_size {model.cfg.input_size} != dataset extent {data.image_size}")
    log = log or (lambda s: None)
    eval_data = eval_data or data
    rng = np.random.default_rng(cfg.seed)
    opt = AdamW(model.parameters(), cfg.lr, (cfg.beta1, cfg.beta2), cfg.eps, cfg.weight_decay)
    per_epoch = -(-len(data) // cfg.batch_size)
    total = cfg.iterations if cfg.iterations > 0 else cfg.epochs * per_epoch
    res = TrainResult()
    t0 = time.perf_counter()
    it, epoch = 0, 0
    while it < total:
        epoch += 1
        order = rng.permutation(len(data))
        ep_losses = []
        for start in range(0, len(order), cfg.batch_size):
            if it >= total:
                break
            idx = order[start:start + cfg.batch_size]
            loss, parts = train_step(model, opt, data.images[idx], [data.boxes(i) for i in idx], cfg)
            res.losses.append(loss)
            ep_losses.append(loss)
            it += 1
        rec = {"epoch": epoch, "iter": it, "loss": float(np.mean(ep_losses)), "lr": cfg.lr}
        if cfg.eval_every > 0 and (epoch % cfg.eval_every == 0 or it >= total):
            ap = evaluate(model, eval_data, cfg.conf_threshold, cfg.iou_threshold)
            rec.update({k: float(v) for k, v in ap.as_dict().items()})
        res.metrics.append(rec)
        log(format_record(rec))
    res.iterations = it
    res.seconds = time.perf_counter() - t0
    return res


def run_training(config_path, data_dir, out_dir, log: Callable[[str], None] | None = None) -> TrainResult:
    cfgs = load_config(config_path, CONFIG_SECTIONS)
    mcfg, tcfg = cfgs["model"], cfgs["train"]
    data = load_dataset(data_dir, mcfg.required_multiple)
    model = build_model(mcfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines: list[str] = []

    def sink(line: str) -> None:
        lines.append(line)
        if log:
            log(line)

    res = train(model, data, tcfg, sink)
    save_model(out / "model.fmcw", model)
    (out / "train.log").write_text("\n".join(lines) + "\n")
    (out / "config.txt").write_text(dump_config(cfgs))
    return res
