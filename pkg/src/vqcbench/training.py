"""Supervised training: datasets, Adam, cross-entropy and the epoch loop."""
from __future__ import annotations

import csv
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .models import PROBABILITIES, ModelSpec

log = logging.getLogger(__name__)

DATA_DIR = Path(__file__).with_name("data")
DATASET_FILES = {"iris": "iris.csv", "wine": "wine.csv", "wdbc": "wdbc.csv"}
EXPECTED_SHAPES = {"iris": (150, 4, 3), "wine": (178, 13, 3), "wdbc": (569, 30, 2)}

PROB_FLOOR = 1e-12


class DatasetError(ValueError):
    pass


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    n_classes: int

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def split(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        idx = {"train": self.train, "val": self.val, "test": self.test}[which]
        return self.features[idx], self.labels[idx]


def split_sizes(n: int) -> tuple[int, int, int]:
    """75% train; the remainder halved into validation and test (test gets the odd one)."""
    n_train = math.floor(0.75 * n)
    rest = n - n_train
    return n_train, rest // 2, rest - rest // 2


def read_csv(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    with path.open(newline="") as f:
        rows = list(csv.reader(f))
    if len(rows) < 2:
        raise DatasetError(f"{path}: no data rows")
    width = len(rows[0])
    if width < 2:
        raise DatasetError(f"{path}: need at least one feature column and a label column")
    feats, labels = [], []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise DatasetError(f"{path}:{line_no}: expected {width} columns, got {len(row)}")
        try:
            feats.append([float(v) for v in row[:-1]])
            labels.append(int(float(row[-1])))
        except ValueError as exc:
            raise DatasetError(f"{path}:{line_no}: {exc}") from None
    return np.array(feats), np.array(labels, dtype=int)


def minmax_scale(X: np.ndarray) -> np.ndarray:
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    scaled = np.divide(X - lo, span, out=np.zeros_like(X), where=span > 0)
    return np.clip(scaled, 0.0, 1.0)


def load_dataset(name: str, seed: int = 0, path=None, resplit: bool = True) -> Dataset:
    """Scale every column to [0, 1] on the full data, then shuffle and split.

    With ``resplit=False`` the split is the seed-0 split whatever ``seed`` is.
    """
    name = name.lower()
    if path is None:
        if name not in DATASET_FILES:
            raise DatasetError(f"unknown dataset {name!r}")
        path = DATA_DIR / DATASET_FILES[name]
    X, y = read_csv(path)
    if name in EXPECTED_SHAPES:
        n, d, _ = EXPECTED_SHAPES[name]
        if X.shape != (n, d):
            raise DatasetError(f"{name}: expected {n}x{d} features, got {X.shape}")
    classes = np.unique(y)
    if classes[0] != 0 or classes[-1] != len(classes) - 1:
        raise DatasetError(f"{name}: labels must be 0..K-1, got {classes}")
    X = minmax_scale(X)
    rng = np.random.default_rng([int(seed) if resplit else 0, 1])
    perm = rng.permutation(len(y))
    n_train, n_val, _ = split_sizes(len(y))
    return Dataset(
        name,
        X,
        y,
        np.sort(perm[:n_train]),
        np.sort(perm[n_train : n_train + n_val]),
        np.sort(perm[n_train + n_val :]),
        len(classes),
    )


# -- optimisation ----------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, grads, state: AdamState, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update; returns ``(new_params, new_state)``."""
    grads = np.asarray(grads, dtype=float)
    if not np.all(np.isfinite(grads)):
        bad = np.flatnonzero(~np.isfinite(grads))
        raise TrainingDiverged(f"non-finite gradient at step {state.t + 1}, entries {bad[:10].tolist()}")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new = np.asarray(params, dtype=float) - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new, AdamState(m, v, t)


class Adam:
    def __init__(self, n_params: int, lr: float = 0.01):
        self.lr = lr
        self.state = AdamState.zeros(n_params)

    def step(self, model, grads) -> None:
        flat, self.state = adam_step(model.get_flat(), grads, self.state, self.lr)
        model.set_flat(flat)


def cross_entropy(probs, label: int) -> tuple[float, np.ndarray]:
    """-log p[label] and its gradient w.r.t. the logits (softmax fused)."""
    probs = np.asarray(probs, dtype=float)
    p = probs[label]
    if p < PROB_FLOOR:
        warnings.warn(f"probability {p:g} of the true class clamped to {PROB_FLOOR:g}", RuntimeWarning)
        p = PROB_FLOOR
    grad = probs.copy()
    grad[label] -= 1.0
    return -math.log(p), grad


def batch_cross_entropy(probs: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and d(mean loss)/d logits."""
    rows = np.arange(len(labels))
    p = probs[rows, labels]
    if np.any(p < PROB_FLOOR):
        warnings.warn("true-class probability clamped to 1e-12", RuntimeWarning)
    loss = float(-np.mean(np.log(np.maximum(p, PROB_FLOOR))))
    grad = probs.copy()
    grad[rows, labels] -= 1.0
    return loss, grad / len(labels)


def accuracy(probs: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def evaluate(model, dataset: Dataset, split: str) -> tuple[float, float]:
    X, y = dataset.split(split)
    if len(y) == 0:
        raise ValueError(f"{split} split is empty")
    out = model.forward(X, PROBABILITIES)
    loss, _ = batch_cross_entropy(out.values, y)
    return accuracy(out.values, y), loss


# -- epoch loop --------------------------------------------------------------------


@dataclass
class SlConfig:
    learning_rate: float = 0.01
    epochs: int = 50
    batch_size: int = 8
    # Among epochs with equal best validation accuracy keep the "latest" or "earliest".
    checkpoint_ties: str = "latest"


@dataclass
class RunMetrics:
    task: str
    model_id: str
    description: str
    seed: int
    n_params: int
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    test_accuracy: float = float("nan")
    test_loss: float = float("nan")
    train_seconds: float = 0.0
    circuit_seconds: float = 0.0
    circuit_count: int = 0

    @property
    def per_circuit_seconds(self) -> float:
        return self.circuit_seconds / self.circuit_count if self.circuit_count else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = "sl"
        d["per_circuit_seconds"] = self.per_circuit_seconds
        return d


@dataclass
class SlResult:
    metrics: RunMetrics
    model: object


def train_sl(model_or_spec, dataset: Dataset, config: SlConfig | None = None, seed: int = 0, recorder=None) -> SlResult:
    """Mini-batch training; keeps the checkpoint with the best validation accuracy.

    Ties follow ``config.checkpoint_ties``. With zero epochs the initial
    model is the checkpoint.
    """
    config = config or SlConfig()
    if config.checkpoint_ties not in ("latest", "earliest"):
        raise ValueError(f"checkpoint_ties must be 'latest' or 'earliest', got {config.checkpoint_ties!r}")
    model = model_or_spec.build(seed) if isinstance(model_or_spec, ModelSpec) else model_or_spec
    if model.forward(dataset.features[:1]).values.shape[1] != dataset.n_classes:
        raise ValueError("model output size does not match the number of classes")
    if hasattr(model, "circuit_seconds"):
        model.circuit_seconds, model.circuit_count = 0.0, 0
        model.recorder = recorder
    metrics = RunMetrics(dataset.name, model.model_id, model.describe(), int(seed), model.n_params)
    opt = Adam(model.n_params, config.learning_rate)
    rng = np.random.default_rng([int(seed), 2])
    X_train, y_train = dataset.split("train")
    best_acc, best_flat = -1.0, model.get_flat().copy()
    train_seconds = 0.0
    circuit_seconds, circuit_count = 0.0, 0
    quantum = hasattr(model, "circuit_seconds")

    for epoch in range(1, config.epochs + 1):
        if recorder is not None:
            recorder.set_point(epoch)
        if quantum:
            sec0, cnt0 = model.circuit_seconds, model.circuit_count
        start = time.perf_counter()
        order = rng.permutation(len(y_train))
        losses, correct = [], 0
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo : lo + config.batch_size]
            out = model.forward(X_train[batch], PROBABILITIES)
            loss, grad_logits = batch_cross_entropy(out.values, y_train[batch])
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss in epoch {epoch}")
            opt.step(model, model.backward(out, grad_logits))
            losses.append(loss * len(batch))
            correct += int(np.sum(np.argmax(out.values, axis=1) == y_train[batch]))
        train_seconds += time.perf_counter() - start
        if quantum:
            circuit_seconds += model.circuit_seconds - sec0
            circuit_count += model.circuit_count - cnt0
        if recorder is not None:
            train_seconds -= recorder.take_overhead()
            recorder.set_point(None)
        val_acc, val_loss = evaluate(model, dataset, "val")
        metrics.epochs.append(
            {
                "epoch": epoch,
                "train_loss": float(np.sum(losses) / len(y_train)),
                "train_accuracy": correct / len(y_train),
                "val_loss": val_loss,
                "val_accuracy": val_acc,
            }
        )
        improved = val_acc >= best_acc if config.checkpoint_ties == "latest" else val_acc > best_acc
        if improved:
            best_acc, best_flat = val_acc, model.get_flat().copy()
            metrics.best_epoch = epoch
        log.debug("%s epoch %d loss %.4f val %.3f", model.model_id, epoch, metrics.epochs[-1]["train_loss"], val_acc)

    if quantum:
        metrics.circuit_seconds, metrics.circuit_count = circuit_seconds, circuit_count
        model.recorder = None
    model.set_flat(best_flat)
    metrics.train_seconds = train_seconds
    metrics.test_accuracy, metrics.test_loss = evaluate(model, dataset, "test")
    return SlResult(metrics, model)
