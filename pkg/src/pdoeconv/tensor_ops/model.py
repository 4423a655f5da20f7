"""Model assembly, the training loop, evaluation and checkpoint I/O."""
from __future__ import annotations

import csv
import io
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..group2d import parse_group
from .layers import (
    Conv2d,
    Dense,
    Dropout,
    GlobalAvgPool,
    GroupBatchNorm,
    GroupConv,
    LiftingConv,
    MaxPool2d,
    OrientationPool,
    ReLU,
    Sequential,
    softmax_cross_entropy,
)
from .optim import SGD, Adam, step_decay

log = logging.getLogger(__name__)

MAGIC = b"PDEQ1"
PLAIN = ("cnn", "none", "plain")


class TrainingDivergedError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class ModelConfig:
    group: str = "p4"  # pN / pNm, or "cnn" for a plain pixel-basis baseline
    widths: tuple = (8, 12, 16, 16)
    pool_after: tuple = (1, 2)  # 2x2 max pooling after these layer indices
    num_classes: int = 3
    in_channels: int = 1
    kernel_size: int = 3  # plain baseline only
    epochs: int = 10
    lr: float = 1e-2
    optimizer: str = "adam"
    weight_decay: float = 0.0
    batch_size: int = 32
    dropout: float = 0.0
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        self.pool_after = tuple(int(i) for i in self.pool_after)
        if not self.widths or any(w <= 0 for w in self.widths):
            raise ValueError("layer widths must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    @property
    def is_plain(self) -> bool:
        return self.group.lower() in PLAIN

    def to_json(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        d["pool_after"] = list(self.pool_after)
        return d


def build_model(cfg: ModelConfig) -> Sequential:
    rng = np.random.default_rng(cfg.seed)
    layers = []
    if cfg.is_plain:
        prev = cfg.in_channels
        for i, w in enumerate(cfg.widths):
            layers += [Conv2d(prev, w, cfg.kernel_size, rng), GroupBatchNorm(w, 1), ReLU()]
            if i in cfg.pool_after:
                layers.append(MaxPool2d(2))
            prev = w
    else:
        group = parse_group(cfg.group)
        g = len(group)
        prev = cfg.in_channels
        for i, w in enumerate(cfg.widths):
            conv = LiftingConv(group, prev, w, rng=rng) if i == 0 else GroupConv(group, prev, w, rng=rng)
            layers += [conv, GroupBatchNorm(w, g), ReLU()]
            if i in cfg.pool_after:
                layers.append(MaxPool2d(2))
            prev = w
        layers.append(OrientationPool(g))
    layers.append(GlobalAvgPool())
    if cfg.dropout:
        layers.append(Dropout(cfg.dropout, np.random.default_rng([cfg.seed, 1])))
    layers.append(Dense(cfg.widths[-1], cfg.num_classes, rng))
    return Sequential(layers)


@dataclass
class Normalizer:
    mean: float = 0.0
    std: float = 1.0

    @classmethod
    def fit(cls, images: np.ndarray) -> "Normalizer":
        return cls(float(images.mean()), float(images.std()) or 1.0)

    def __call__(self, images: np.ndarray) -> np.ndarray:
        return (images - self.mean) / self.std


@dataclass
class TrainResult:
    model: Sequential
    config: ModelConfig
    normalizer: Normalizer
    log: list = field(default_factory=list)  # (epoch, train_acc, val_acc, loss)

    def metrics_csv(self) -> str:
        return metrics_to_csv(self.log)


def metrics_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_acc", "val_acc", "loss"])
    for epoch, tr, va, loss in rows:
        w.writerow([epoch, repr(float(tr)), repr(float(va)), repr(float(loss))])
    return buf.getvalue()


def _as_input(images: np.ndarray, dtype) -> np.ndarray:
    x = np.asarray(images, dtype=dtype)
    return x[:, None] if x.ndim == 3 else x


def predict_logits(model: Sequential, images: np.ndarray, normalizer: Normalizer | None = None,
                   batch_size: int = 128, dtype="float64") -> np.ndarray:
    out = []
    for i in range(0, len(images), batch_size):
        x = images[i : i + batch_size]
        if normalizer is not None:
            x = normalizer(x)
        out.append(model.forward(_as_input(x, dtype), train=False))
    return np.concatenate(out).astype(float)


def accuracy(model, images, labels, normalizer=None, batch_size=128, dtype="float64") -> float:
    if len(labels) == 0:
        return float("nan")
    logits = predict_logits(model, images, normalizer, batch_size, dtype)
    return float(np.mean(logits.argmax(axis=1) == np.asarray(labels)))


def train(cfg: ModelConfig, train_ds, val_ds=None, progress=None) -> TrainResult:
    """Train a freshly built model; deterministic for a fixed ``cfg.seed``.

    ``train_ds``/``val_ds`` expose ``images`` (N, H, W) and ``labels`` (N,).
    """
    model = build_model(cfg)
    norm = Normalizer.fit(np.asarray(train_ds.images, dtype=float))
    x_all = norm(np.asarray(train_ds.images, dtype=float))
    y_all = np.asarray(train_ds.labels, dtype=np.int64)
    params = model.parameters()
    if cfg.optimizer == "adam":
        opt = Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    else:
        opt = SGD(params, lr=cfg.lr, momentum=0.9, nesterov=True, weight_decay=cfg.weight_decay)
    order_rng = np.random.default_rng([cfg.seed, 2])
    result = TrainResult(model, cfg, norm)
    n = len(y_all)
    for epoch in range(cfg.epochs):
        opt.lr = step_decay(cfg.lr, epoch, cfg.epochs)
        perm = order_rng.permutation(n)
        total_loss, correct = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            x = _as_input(x_all[idx], cfg.dtype)
            y = y_all[idx]
            model.zero_grad()
            logits = model.forward(x, train=True)
            loss, grad = softmax_cross_entropy(logits.astype(float), y)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became {loss} at epoch {epoch}, batch starting {start}; lr={opt.lr}")
            model.backward(grad.astype(cfg.dtype))
            opt.step()
            total_loss += loss * len(idx)
            correct += int((logits.argmax(axis=1) == y).sum())
        train_acc = correct / n
        val_acc = accuracy(model, val_ds.images, val_ds.labels, norm, dtype=cfg.dtype) if val_ds is not None else float("nan")
        row = (epoch + 1, train_acc, val_acc, total_loss / n)
        result.log.append(row)
        log.info("epoch %d train_acc %.4f val_acc %.4f loss %.4f", *row)
        if progress is not None:
            progress(row)
    return result


def _state_arrays(model: Sequential):
    for i, layer in enumerate(model.layers):
        for k, v in layer.state().items():
            yield f"{i}.{k}", np.asarray(v, dtype="<f8")


def save_checkpoint(path, result: TrainResult, extra: dict | None = None):
    arrays = list(_state_arrays(result.model))
    header = {
        "format": "PDEQ1",
        "config": result.config.to_json(),
        "group": result.config.group,
        "seed": result.config.seed,
        "normalizer": {"mean": result.normalizer.mean, "std": result.normalizer.std},
        "arrays": [{"name": name, "shape": list(a.shape)} for name, a in arrays],
    }
    if extra:
        header["extra"] = extra
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(hbytes)))
        f.write(hbytes)
        for _, a in arrays:
            f.write(np.ascontiguousarray(a).tobytes())


def read_checkpoint(path) -> tuple[dict, dict]:
    """Return (header, name -> float64 array)."""
    raw = Path(path).read_bytes()
    if raw[:5] != MAGIC:
        raise CheckpointError(f"{path}: not a PDEQ1 checkpoint")
    if len(raw) < 13:
        raise CheckpointError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<Q", raw[5:13])
    try:
        header = json.loads(raw[13 : 13 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    offset = 13 + hlen
    arrays = {}
    for spec in header["arrays"]:
        count = int(np.prod(spec["shape"], dtype=np.int64))
        end = offset + 8 * count
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated parameter blob")
        arrays[spec["name"]] = np.frombuffer(raw[offset:end], dtype="<f8").reshape(spec["shape"]).copy()
        offset = end
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, arrays


def load_checkpoint(path) -> TrainResult:
    header, arrays = read_checkpoint(path)
    cfg = ModelConfig(**header["config"])
    model = build_model(cfg)
    for i, layer in enumerate(model.layers):
        names = list(layer.state())
        if names:
            layer.load_state({k: arrays[f"{i}.{k}"] for k in names})
    norm = Normalizer(**header["normalizer"])
    return TrainResult(model, cfg, norm)
