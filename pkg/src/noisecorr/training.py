"""Minibatch training with a held-out noisy validation split.

The validation split is the last `validation_fraction` of the data after a
single seeded shuffle; validation loss uses the same corrected loss as
training and validation accuracy is measured against the noisy labels, so
no clean information leaks into training-time metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import LabeledDataset
from .losses import CorrectedLoss
from .network import MlpNetwork, backward_batch, forward_batch


class TrainingDivergedError(RuntimeError):
    """Raised when a non-finite loss appears; names the epoch and batch."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 128
    seed: int = 0
    validation_fraction: float = 0.10
    init: str = "he_relu"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "val_accuracy": self.val_accuracy,
        }


def train(
    net: MlpNetwork,
    dataset: LabeledDataset,
    loss: CorrectedLoss,
    optimizer,
    config: TrainConfig,
) -> tuple[MlpNetwork, list[EpochStats]]:
    """Train on the noisy labels; returns (final-epoch model, history).

    The input network is left untouched; training runs on a copy. Given the
    same network, dataset, and config seed, the returned history is
    bit-identical across runs.
    """
    if dataset.n < 2:
        raise ValueError("need at least 2 examples to hold out validation data")
    net = net.copy()
    rng = np.random.default_rng(config.seed)

    order = rng.permutation(dataset.n)
    n_val = max(1, int(dataset.n * config.validation_fraction))
    train_idx, val_idx = order[: dataset.n - n_val], order[dataset.n - n_val :]
    x_train = dataset.features[train_idx]
    y_train = dataset.noisy_labels[train_idx]
    x_val = dataset.features[val_idx]
    y_val = dataset.noisy_labels[val_idx]

    params = net.parameters()
    optimizer.init(params)
    n_train = len(train_idx)
    history: list[EpochStats] = []
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n_train)
        loss_sum = 0.0
        for batch_no, start in enumerate(range(0, n_train, config.batch_size)):
            take = perm[start : start + config.batch_size]
            logits, cache = forward_batch(net, x_train[take], training=True, rng=rng)
            values, grad_logits = loss.batch_evaluate(y_train[take], logits)
            batch_loss = values.sum()
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}"
                )
            weight_grads, bias_grads = backward_batch(net, cache, grad_logits / len(take))
            optimizer.step(params, weight_grads + bias_grads)
            loss_sum += batch_loss

        val_logits, _ = forward_batch(net, x_val, training=False)
        val_values, _ = loss.batch_evaluate(y_val, val_logits)
        history.append(
            EpochStats(
                epoch=epoch,
                train_loss=loss_sum / n_train,
                val_loss=float(val_values.mean()),
                val_accuracy=float((val_logits.argmax(axis=1) == y_val).mean()),
            )
        )
    return net, history


def accuracy(net: MlpNetwork, features: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of argmax predictions matching `labels`."""
    logits, _ = forward_batch(net, features, training=False)
    return float((logits.argmax(axis=1) == np.asarray(labels)).mean())
