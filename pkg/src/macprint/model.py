"""Classifier model: network + input normalization + optional open-set
calibration, with training, gradient checking and (de)serialization."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from macprint import modelio
from macprint.features import ConfigError
from macprint.openset import OpenSetModel
from macprint.tcn import TCN, TCNConfig

log = logging.getLogger(__name__)

DEFAULT_LR = 1e-3


@dataclass
class TrainConfig:
    epochs: int = 20
    lr: float = DEFAULT_LR
    batch: int = 64
    clip_norm: float = 5.0
    seed: int = 0
    class_weights: bool = True
    keep_best: bool = True  # restore the epoch with the best validation accuracy
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class ClassifierModel:
    config: TCNConfig
    params: dict[str, np.ndarray]
    classes: list[str]
    norm_mean: np.ndarray
    norm_std: np.ndarray
    seed: int = 0
    kind: str = "app"
    meta: dict = field(default_factory=dict)  # training metadata, window size, ...
    openset: Optional[OpenSetModel] = None

    @property
    def net(self) -> TCN:
        return TCN(self.config, self.params)

    @property
    def window(self) -> int:
        return int(self.meta.get("window", 0))

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.norm_mean) / self.norm_std

    def forward(self, x: np.ndarray, batch: int = 1024) -> tuple[np.ndarray, np.ndarray]:
        """Softmax probabilities and activation vectors for raw samples."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 3 or x.shape[-1] != self.config.input_width:
            raise ConfigError(f"sample shape {x.shape[1:]} does not match model input width {self.config.input_width}")
        if self.window and x.shape[1] != self.window:
            raise ConfigError(f"window length {x.shape[1]} does not match model window {self.window}")
        net = self.net
        probs, acts = [], []
        for i in range(0, len(x), batch):
            p, a, _ = net.forward(self.normalize(x[i:i + batch]))
            probs.append(p)
            acts.append(a)
        if not probs:
            h = self.config.n_classes
            return np.empty((0, h)), np.empty((0, self.config.activation_width))
        return np.concatenate(probs), np.concatenate(acts)

    def predict(self, x: np.ndarray, use_openset: bool = True, delta: float | None = None) -> np.ndarray:
        """Class index per sample; index ``len(classes)`` means unknown."""
        probs, acts = self.forward(x)
        if use_openset and self.openset is not None:
            return self.openset.predict(probs, acts, delta)
        return np.argmax(probs, axis=-1)

    # ------------------------------------------------------------ storage

    def to_container(self) -> tuple[dict, dict[str, np.ndarray]]:
        meta = {
            "format": "macprint-classifier",
            "config": self.config.to_dict(),
            "classes": list(self.classes),
            "seed": self.seed,
            "kind": self.kind,
            "meta": self.meta,
        }
        arrays = {f"param.{k}": v for k, v in self.params.items()}
        arrays["norm.mean"] = self.norm_mean
        arrays["norm.std"] = self.norm_std
        if self.openset is not None:
            os_meta, os_arrays = self.openset.to_arrays()
            meta["openset"] = os_meta
            arrays.update(os_arrays)
        return meta, arrays

    def save(self, path) -> None:
        modelio.save(path, *self.to_container())

    @classmethod
    def load(cls, path) -> "ClassifierModel":
        meta, arrays = modelio.load(path)
        if meta.get("format") != "macprint-classifier":
            raise modelio.ContainerError(f"{path} is not a classifier model")
        params = {k[len("param."):]: v for k, v in arrays.items() if k.startswith("param.")}
        openset = OpenSetModel.from_arrays(meta["openset"], arrays) if "openset" in meta else None
        return cls(
            config=TCNConfig.from_dict(meta["config"]),
            params=params,
            classes=list(meta["classes"]),
            norm_mean=arrays["norm.mean"],
            norm_std=arrays["norm.std"],
            seed=meta["seed"],
            kind=meta["kind"],
            meta=meta["meta"],
            openset=openset,
        )


def normalization_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    flat = x.reshape(-1, x.shape[-1])
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    std[std < 1e-12] = 1.0
    return mean, std


def class_weights(y: np.ndarray, n_classes: int) -> np.ndarray:
    counts = np.bincount(y, minlength=n_classes).astype(float)
    present = counts > 0
    w = np.zeros(n_classes)
    w[present] = len(y) / (present.sum() * counts[present])
    return w


def _clip(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float((g**2).sum()) for g in grads.values())))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def train(
    x: np.ndarray,
    y: np.ndarray,
    classes: Sequence[str],
    cfg: TrainConfig | None = None,
    net_config: dict | None = None,
    kind: str = "app",
    validation: tuple[np.ndarray, np.ndarray] | None = None,
) -> ClassifierModel:
    """Train a classifier with Adam on class-weighted cross-entropy.

    When ``validation`` is given its accuracy is logged per epoch and, with
    ``cfg.keep_best``, the parameters of the best epoch are kept. Fully
    deterministic given ``cfg.seed``.
    """
    cfg = cfg or TrainConfig()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    n_classes = len(classes)
    if len(x) == 0:
        raise ConfigError("empty training set")
    if len(np.unique(y)) < 2:
        raise ConfigError("training needs at least two classes")
    if y.min() < 0 or y.max() >= n_classes:
        raise ConfigError("labels out of range")

    tcn_cfg = TCNConfig(input_width=x.shape[-1], n_classes=n_classes, **(net_config or {}))
    net = TCN(tcn_cfg, seed=cfg.seed)
    mean, std = normalization_stats(x)
    xn = (x - mean) / std
    weights = class_weights(y, n_classes) if cfg.class_weights else None

    rng = np.random.default_rng(cfg.seed + 1)
    drop_rng = np.random.default_rng(cfg.seed + 2) if tcn_cfg.dropout else None
    m = {k: np.zeros_like(v) for k, v in net.params.items()}
    v = {k: np.zeros_like(v) for k, v in net.params.items()}
    step = 0
    losses: list[float] = []
    val_acc: list[float] = []
    best = (-1.0, None)

    model = ClassifierModel(tcn_cfg, net.params, list(classes), mean, std, seed=cfg.seed, kind=kind)
    model.meta["window"] = int(x.shape[1])

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(xn))
        total, count = 0.0, 0
        for start in range(0, len(order), cfg.batch):
            idx = order[start:start + cfg.batch]
            loss, grads = net.loss_and_grads(xn[idx], y[idx], weights, drop_rng)
            _clip(grads, cfg.clip_norm)
            step += 1
            c1 = 1 - cfg.beta1**step
            c2 = 1 - cfg.beta2**step
            for k, g in grads.items():
                m[k] = cfg.beta1 * m[k] + (1 - cfg.beta1) * g
                v[k] = cfg.beta2 * v[k] + (1 - cfg.beta2) * g * g
                net.params[k] -= cfg.lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + cfg.eps)
            total += loss * len(idx)
            count += len(idx)
        losses.append(total / count)
        msg = f"epoch {epoch + 1}/{cfg.epochs} loss {losses[-1]:.4f}"
        if validation is not None and len(validation[0]):
            acc = float(np.mean(model.predict(validation[0], use_openset=False) == validation[1]))
            val_acc.append(acc)
            msg += f" val_acc {acc:.4f}"
            if cfg.keep_best and acc > best[0]:
                best = (acc, {k: p.copy() for k, p in net.params.items()})
        log.info(msg)

    if best[1] is not None:
        net.params.update(best[1])
    model.params = net.params
    model.meta.update(
        {
            "epochs": cfg.epochs,
            "lr": cfg.lr,
            "batch": cfg.batch,
            "clip_norm": cfg.clip_norm,
            "loss_curve": losses,
            "val_accuracy": val_acc,
            "train_samples": int(len(x)),
        }
    )
    return model


def grad_check(
    net: TCN,
    x: np.ndarray,
    y: np.ndarray,
    n_params: int = 100,
    step: float = 1e-5,
    seed: int = 0,
    floor: float = 1e-6,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error is ``|a - n| / max(|a|, |n|, floor)`` over ``n_params``
    coordinates drawn uniformly from all parameter tensors.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _, grads = net.loss_and_grads(x, y)
    rng = np.random.default_rng(seed)
    names = sorted(net.params)
    sizes = np.array([net.params[n].size for n in names])
    flat_choices = rng.choice(sizes.sum(), size=min(n_params, sizes.sum()), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for flat in flat_choices:
        t = int(np.searchsorted(offsets, flat, side="right") - 1)
        name = names[t]
        arr = net.params[name]
        idx = np.unravel_index(int(flat - offsets[t]), arr.shape)
        old = arr[idx]
        arr[idx] = old + step
        up = net.loss(x, y)
        arr[idx] = old - step
        down = net.loss(x, y)
        arr[idx] = old
        numeric = (up - down) / (2 * step)
        analytic = grads[name][idx]
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        worst = max(worst, rel)
    return worst
