"""SGD with Nesterov momentum under a cosine schedule with warm restarts."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import InputError, NumericError, TrainingError
from .datasets import LabeledDataset, augment
from .tensor import NetworkInstance, network_backward

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    momentum: float = 0.9
    l_max: float = 0.05
    T0: float = 1
    T_mult: float = 2
    weight_decay: float = 1e-4
    epochs: int = 15
    # Constant-rate SGD epochs run before the first SGDR period.
    warmup_epochs: int = 0
    nesterov: bool = True
    augment: bool = False
    pad: int = 4
    flip: bool = True
    cutout: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise InputError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 <= self.momentum < 1:
            raise InputError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.l_max < 0:
            raise InputError(f"l_max must be >= 0, got {self.l_max}")
        if self.T0 < 1 or self.T_mult < 1:
            raise InputError("T0 and T_mult must be >= 1")
        if self.epochs < 0 or self.warmup_epochs < 0:
            raise InputError("epoch counts must be >= 0")
        if self.weight_decay < 0:
            raise InputError(f"weight_decay must be >= 0, got {self.weight_decay}")


def sgdr_learning_rate(epoch_in_period: float, period_length: float, l_max: float) -> float:
    """Cosine-annealed rate within one period; the minimum rate is 0."""
    if not 0 <= epoch_in_period <= period_length:
        raise InputError(f"epoch_in_period {epoch_in_period} outside [0, {period_length}]")
    return max(0.0, l_max * (1.0 + math.cos(math.pi * epoch_in_period / period_length)) / 2.0)


def sgdr_position(epoch: float, T0: float = 1, T_mult: float = 2) -> tuple[float, float]:
    """Map a cumulative (fractional) epoch to ``(epoch_in_period, period_length)``."""
    if epoch < 0:
        raise InputError(f"epoch must be >= 0, got {epoch}")
    start, period = 0.0, float(T0)
    while epoch >= start + period:
        start += period
        period *= T_mult
    return epoch - start, period


def restart_boundaries(T0: float = 1, T_mult: float = 2, count: int = 5) -> list[float]:
    """Cumulative epochs at which the first ``count`` periods end."""
    bounds, total, period = [], 0.0, float(T0)
    for _ in range(count):
        total += period
        bounds.append(total)
        period *= T_mult
    return bounds


def learning_rate_at(epoch: float, cfg: TrainConfig) -> float:
    if epoch < cfg.warmup_epochs:
        return cfg.l_max
    t, period = sgdr_position(epoch - cfg.warmup_epochs, cfg.T0, cfg.T_mult)
    return sgdr_learning_rate(t, period, cfg.l_max)


class NesterovSGD:
    """SGD with (Nesterov) momentum and L2 decay on weight tensors only."""

    def __init__(self, params: dict[str, np.ndarray], momentum: float, weight_decay: float, nesterov: bool = True):
        self.params = params
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.nesterov = nesterov
        self.velocity = {name: np.zeros_like(value) for name, value in params.items()}

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        for name, param in self.params.items():
            grad = grads[name].astype(param.dtype, copy=False)
            if self.weight_decay and name.endswith(".weight"):
                grad = grad + self.weight_decay * param
            velocity = self.velocity[name]
            velocity *= self.momentum
            velocity += grad
            update = grad + self.momentum * velocity if self.nesterov else velocity
            param -= (lr * update).astype(param.dtype, copy=False)


def train(
    net: NetworkInstance,
    data: LabeledDataset,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> tuple[NetworkInstance, list[float]]:
    """Train ``net`` in place; returns it with one mean loss per epoch."""
    if len(data) == 0:
        raise InputError("cannot train on an empty dataset")
    optimizer = NesterovSGD(net.parameters(), cfg.momentum, cfg.weight_decay, cfg.nesterov)
    batches = math.ceil(len(data) / cfg.batch_size)
    trace: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(data))
        losses = []
        for index in range(batches):
            picked = order[index * cfg.batch_size : (index + 1) * cfg.batch_size]
            images = data.images[picked]
            if cfg.augment:
                images = augment(images, rng, pad=cfg.pad, crop=images.shape[1], flip=cfg.flip, cutout=cfg.cutout or None)
            try:
                grads, loss = network_backward(net, images, data.labels[picked], rng)
            except NumericError as exc:
                raise TrainingError(f"non-finite activations: {exc}", epoch) from exc
            if not math.isfinite(loss):
                raise TrainingError("loss diverged", epoch)
            optimizer.step(grads, learning_rate_at(epoch + index / batches, cfg))
            losses.append(loss)
        trace.append(float(np.mean(losses)))
        logger.debug("Epoch %d/%d: loss=%.4f", epoch + 1, cfg.epochs, trace[-1])
    return net, trace


def predict(net: NetworkInstance, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    preds = [
        net.forward(images[start : start + batch_size]).argmax(axis=1)
        for start in range(0, len(images), batch_size)
    ]
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def evaluate_accuracy(net: NetworkInstance, data: LabeledDataset, batch_size: int = 256) -> float:
    """Top-1 accuracy in evaluation mode (running batch-norm statistics)."""
    if len(data) == 0:
        raise InputError("cannot evaluate on an empty dataset")
    return float((predict(net, data.images, batch_size) == data.labels).mean())
