"""Adam training with a seeded validation split, checkpointing and early stopping."""

from __future__ import annotations

import copy
import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from ..autodiff.functional import cross_entropy, log_softmax
from ..autodiff.serialize import save_module
from ..autodiff.tensor import no_grad_enabled
from ..data import LabeledDataset
from ..net import PhaserModel, spectral_features

__all__ = [
    "TrainConfig",
    "Adam",
    "MetricsRow",
    "TrainResult",
    "TrainingDivergedError",
    "validation_split",
    "train",
    "predict_logits",
    "evaluate",
    "metrics_from_logits",
    "metrics_csv",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 150
    batch_size: int = 32
    validation_fraction: float = 0.2
    patience: int = 15
    seed: int = 2711
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not 1e-5 <= self.learning_rate <= 1e-3:
            raise ValueError("learning_rate must lie in [1e-5, 1e-3]")
        if not 0 <= self.max_epochs <= 150:
            raise ValueError("max_epochs must lie in [0, 150]")
        if self.batch_size < 1 or self.patience < 1:
            raise ValueError("batch_size and patience must be positive")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            p.data = (p.data - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)).astype(p.dtype)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


@dataclass
class MetricsRow:
    scenario: str
    seed: int
    split: str
    accuracy: float
    loss: float
    per_class: list = field(default_factory=list)
    confusion: np.ndarray | None = None

    def as_csv_fields(self) -> list[str]:
        return [str(self.scenario), str(self.seed), self.split, repr(float(self.accuracy)), repr(float(self.loss))] + [
            repr(float(a)) for a in self.per_class
        ]


class TrainingDivergedError(ArithmeticError):
    def __init__(self, msg: str, state: dict):
        super().__init__(msg)
        self.state = state


@dataclass
class TrainResult:
    model: PhaserModel
    history: list = field(default_factory=list)
    initial_val_loss: float = float("nan")
    best_val_loss: float = float("nan")
    best_epoch: int = -1
    val_indices: np.ndarray | None = None
    train_indices: np.ndarray | None = None
    val_row: MetricsRow | None = None


def validation_split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded, unstratified (train_idx, val_idx) partition of range(n)."""
    perm = np.random.default_rng([seed, 0xDA7A]).permutation(n)
    n_val = int(round(fraction * n))
    n_val = min(max(n_val, 1), n - 1) if n >= 2 else 0
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def predict_logits(model: PhaserModel, mag: np.ndarray, pha: np.ndarray, batch_size: int = 256) -> np.ndarray:
    model.eval()
    outs = []
    with no_grad_enabled():
        for s in range(0, len(mag), batch_size):
            outs.append(model((mag[s : s + batch_size], pha[s : s + batch_size])).data.astype(np.float64))
    return np.concatenate(outs) if outs else np.zeros((0, model.cfg.num_classes))


def _mean_loss(logits: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return float("nan")
    return float(-log_softmax(logits)[np.arange(len(labels)), labels].mean())


def _snapshot(model: PhaserModel) -> tuple[dict, dict]:
    return (
        {k: p.data.copy() for k, p in model.named_parameters().items()},
        copy.deepcopy(model.named_buffers()),
    )


def _restore(model: PhaserModel, snap) -> None:
    params, buffers = snap
    for k, p in model.named_parameters().items():
        p.data = params[k].copy()
    for k, b in buffers.items():
        model.set_buffer(k, b)


def _initial_loss(model: PhaserModel, mag, pha, labels) -> float:
    # no running statistics exist yet: use batch statistics, then put the buffers back
    if len(labels) < 2:
        return float("nan")
    buffers = copy.deepcopy(model.named_buffers())
    model.train()
    with no_grad_enabled():
        logits = model((mag, pha)).data.astype(np.float64)
    for k, b in buffers.items():
        model.set_buffer(k, b)
    return _mean_loss(logits, labels)


def train(model: PhaserModel, dataset: LabeledDataset, cfg: TrainConfig, *, features=None, dump_path=None) -> TrainResult:
    """Fit ``model`` on ``dataset`` with Adam on cross-entropy.

    Domain ids are dropped before anything else happens; only samples and
    labels reach the optimizer.  The parameters with the lowest validation
    loss are restored at the end.  ``features`` may pass precomputed
    ``(mag, pha)`` for ``dataset``.
    """
    x, labels = dataset.x, dataset.labels.copy()
    del dataset
    if labels.max(initial=0) >= model.cfg.num_classes:
        raise ValueError("dataset labels exceed the model's class count")
    mag, pha = features if features is not None else spectral_features(x, model.cfg)
    mag, pha = mag.astype(model.dtype), pha.astype(model.dtype)
    tr_idx, va_idx = validation_split(len(labels), cfg.validation_fraction, cfg.seed)
    result = TrainResult(model, val_indices=va_idx, train_indices=tr_idx)

    def val_loss() -> float:
        return _mean_loss(predict_logits(model, mag[va_idx], pha[va_idx]), labels[va_idx])

    result.initial_val_loss = _initial_loss(model, mag[va_idx], pha[va_idx], labels[va_idx])
    params = model.trainable_parameters()
    opt = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    rng = np.random.default_rng([cfg.seed, 0x7EA1])
    best = None
    stale = 0
    for epoch in range(cfg.max_epochs):
        model.train()
        order = tr_idx[rng.permutation(len(tr_idx))]
        losses = []
        for s in range(0, len(order), cfg.batch_size):
            b = order[s : s + cfg.batch_size]
            if len(b) < 2:
                continue  # batch statistics need at least two samples
            opt.zero_grad()
            loss = cross_entropy(model((mag[b], pha[b])), labels[b])
            lv = float(loss.data)
            if not np.isfinite(lv):
                state = {k: p.data.copy() for k, p in model.named_parameters().items()}
                if dump_path is not None:
                    save_module(model, dump_path)
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}", state)
            loss.backward()
            opt.step()
            losses.append(lv)
        vl = val_loss()
        result.history.append({"epoch": epoch, "train_loss": float(np.mean(losses)) if losses else float("nan"), "val_loss": vl})
        log.debug("epoch %d train %.4f val %.4f", epoch, result.history[-1]["train_loss"], vl)
        if best is None or vl < result.best_val_loss:
            result.best_val_loss, result.best_epoch = vl, epoch
            best = _snapshot(model)
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    if best is not None:
        _restore(model, best)
    # with zero epochs there are no running statistics to evaluate with
    if len(va_idx) and best is not None:
        logits = predict_logits(model, mag[va_idx], pha[va_idx])
        result.val_row = metrics_from_logits(logits, labels[va_idx], model.cfg.num_classes, "val", seed=cfg.seed)
    return result


def metrics_from_logits(logits: np.ndarray, labels: np.ndarray, k: int, split: str, *, scenario="", seed=0) -> MetricsRow:
    labels = np.asarray(labels, dtype=np.int64)
    pred = logits.argmax(axis=1) if len(logits) else np.zeros(0, dtype=np.int64)
    conf = np.zeros((k, k), dtype=np.int64)
    np.add.at(conf, (labels, pred), 1)
    total = conf.sum()
    acc = float(np.trace(conf) / total) if total else float("nan")
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = (np.diag(conf) / conf.sum(axis=1)).tolist()
    return MetricsRow(scenario, seed, split, acc, _mean_loss(logits, labels), per_class, conf)


def evaluate(model: PhaserModel, dataset: LabeledDataset, split: str, *, scenario="", seed=0, features=None) -> MetricsRow:
    """Per-segment accuracy, mean loss, per-class accuracy and confusion matrix."""
    k = model.cfg.num_classes
    if len(dataset.labels) and dataset.labels.max() >= k:
        raise ValueError(f"dataset has labels outside the model's {k} classes")
    mag, pha = features if features is not None else spectral_features(dataset.x, model.cfg)
    logits = predict_logits(model, mag, pha)
    return metrics_from_logits(logits, dataset.labels, k, split, scenario=scenario, seed=seed)


def metrics_csv(rows: list[MetricsRow], num_classes: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "seed", "split", "accuracy", "loss"] + [f"acc_class_{i}" for i in range(num_classes)])
    for r in rows:
        w.writerow(r.as_csv_fields())
    return buf.getvalue()
