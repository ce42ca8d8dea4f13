"""Stochastic optimizers for the training loop.

Each optimizer owns per-parameter state created by init(); step() mutates
the parameter arrays in place. Accumulator layouts mirror the parameter
list order.
"""

from __future__ import annotations

import numpy as np


class AdaGrad:
    """Per-coordinate adaptive learning rates.

    Update: accum += g^2; param -= lr * g / (sqrt(accum) + delta).
    """

    kind = "adagrad"

    def __init__(self, learning_rate: float = 0.01, delta: float = 1e-6):
        if learning_rate <= 0 or delta <= 0:
            raise ValueError("learning_rate and delta must be positive")
        self.learning_rate = learning_rate
        self.delta = delta
        self.accumulators = None

    def init(self, params: list[np.ndarray]) -> None:
        self.accumulators = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.accumulators is None:
            raise RuntimeError("call init() before step()")
        for p, g, a in zip(params, grads, self.accumulators):
            a += g * g
            p -= self.learning_rate * g / (np.sqrt(a) + self.delta)


class SgdMomentum:
    """Classical momentum with optional decoupled L2 weight decay."""

    kind = "sgd_momentum"

    def __init__(self, learning_rate: float, momentum: float = 0.9, weight_decay: float = 0.0):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocities = None

    def init(self, params: list[np.ndarray]) -> None:
        self.velocities = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.velocities is None:
            raise RuntimeError("call init() before step()")
        for p, g, v in zip(params, grads, self.velocities):
            g_eff = g + self.weight_decay * p if self.weight_decay else g
            v *= self.momentum
            v -= self.learning_rate * g_eff
            p += v
