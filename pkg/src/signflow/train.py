"""Training loop, metrics, evaluation, and the confusion matrix.

One epoch = seeded reshuffle, sequential mini-batches (final partial batch
included), forward, loss/accuracy accumulation, backward, one Adamax step
per batch. With the deterministic flag set, identical inputs reproduce
bit-identical parameters, metrics, and logs.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from .dataset import TensorDataset
from .nn import ModelParams, cross_entropy, model_backward, model_forward
from .optim import AdamaxHyper, UpdateError, adamax_step, init_state


class DivergedError(RuntimeError):
    """Training hit a non-finite loss or gradient; carries epoch and batch."""

    def __init__(self, epoch: int, batch: int, reason: str = "non-finite loss"):
        super().__init__(f"training diverged at epoch {epoch}, batch {batch}: {reason}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 32
    seed: int = 0
    shuffle: bool = True
    clip_norm: float | None = None
    deterministic: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError(f"clip_norm must be > 0, got {self.clip_norm}")


@dataclass
class EpochMetrics:
    epoch: int  # 1-based
    loss: float
    categorical_accuracy: float
    seconds: float
    steps: int

    def json_line(self, deterministic: bool = True) -> str:
        """One log line; wall time is zeroed in deterministic mode so logs are byte-stable."""
        return json.dumps({
            "epoch": self.epoch,
            "loss": self.loss,
            "categorical_accuracy": self.categorical_accuracy,
            "seconds": 0.0 if deterministic else self.seconds,
        })


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValueError("confusion matrix counts must be nonnegative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def correct(self) -> int:
        return int(np.trace(self.counts))

    @property
    def accuracy(self) -> float:
        return self.correct / self.total

    def accuracy_percent(self) -> str:
        return format_percent(self.correct, self.total)


def format_percent(correct: int, total: int) -> str:
    """Two-decimal percentage, truncated (60/68 reports as 88.23%, not 88.24%)."""
    if total <= 0:
        raise ValueError(f"total must be positive, got {total}")
    basis_points = (correct * 10000) // total
    return f"{basis_points // 100}.{basis_points % 100:02d}%"


def steps_per_epoch(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)


def _clip_gradients(grads, max_norm: float):
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if total <= max_norm or total == 0.0:
        return grads
    scale = max_norm / total
    return [g * scale for g in grads]


def fit(params: ModelParams, data: TensorDataset, cfg: TrainConfig,
        hyper: AdamaxHyper = AdamaxHyper(), log_stream=None):
    """Train for cfg.epochs; returns (updated params, per-epoch history).

    When ``log_stream`` is given, one JSON line per epoch is appended as it
    completes.
    """
    spec = params.spec
    n = len(data)
    if n == 0:
        raise ValueError("cannot fit on an empty dataset")
    if data.X.shape[1:] != (spec.frames, spec.dim) or data.Y.shape[1] != spec.num_classes:
        raise ValueError(
            f"data ({data.X.shape}, {data.Y.shape}) does not match model "
            f"({spec.frames}, {spec.dim}) with {spec.num_classes} classes"
        )
    tensors = params.tensors()
    names = params.tensor_names()
    state = init_state(tensors)
    history: list[EpochMetrics] = []
    num_steps = steps_per_epoch(n, cfg.batch_size)
    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        if cfg.shuffle:
            order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        else:
            order = np.arange(n)
        loss_sum = 0.0
        correct = 0
        for step in range(num_steps):
            rows = order[step * cfg.batch_size:(step + 1) * cfg.batch_size]
            xb, yb = data.X[rows], data.Y[rows]
            current = params.replace_tensors(tensors)
            probs, cache = model_forward(current, xb)
            batch_loss = cross_entropy(probs, yb)
            if not math.isfinite(batch_loss):
                raise DivergedError(epoch, step)
            loss_sum += batch_loss * len(rows)
            correct += int((np.argmax(probs, axis=1) == np.argmax(yb, axis=1)).sum())
            grads = model_backward(cache, yb)
            if cfg.clip_norm is not None:
                grads = _clip_gradients(grads, cfg.clip_norm)
            try:
                tensors, state = adamax_step(tensors, grads, state, hyper, names=names)
            except UpdateError as exc:
                raise DivergedError(epoch, step, reason=str(exc)) from exc
        metrics = EpochMetrics(
            epoch=epoch,
            loss=loss_sum / n,
            categorical_accuracy=correct / n,
            seconds=time.perf_counter() - started,
            steps=num_steps,
        )
        history.append(metrics)
        if log_stream is not None:
            log_stream.write(metrics.json_line(deterministic=cfg.deterministic) + "\n")
    return params.replace_tensors(tensors), history


def evaluate(params: ModelParams, data: TensorDataset, batch_size: int = 64):
    """Score a dataset; returns (accuracy, mean loss, ConfusionMatrix).

    Predictions take the argmax of the output distribution, ties broken
    toward the lowest class index.
    """
    n = len(data)
    if n == 0:
        raise ValueError("cannot evaluate an empty dataset")
    classes = data.num_classes
    counts = np.zeros((classes, classes), np.int64)
    loss_sum = 0.0
    for start in range(0, n, batch_size):
        xb = data.X[start:start + batch_size]
        yb = data.Y[start:start + batch_size]
        probs, _ = model_forward(params, xb)
        loss_sum += cross_entropy(probs, yb) * len(xb)
        predicted = np.argmax(probs, axis=1)
        true = np.argmax(yb, axis=1)
        np.add.at(counts, (true, predicted), 1)
    matrix = ConfusionMatrix(counts)
    return matrix.accuracy, loss_sum / n, matrix
