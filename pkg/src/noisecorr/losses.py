"""Cross-entropy and its two noise-corrected variants.

Three evaluation modes over network logits:

* plain:    -log softmax(z)_y
* backward: row y of T^-1 applied to the vector of per-class plain losses;
            an unbiased estimator of the clean loss under the noise process
            (values may be negative)
* forward:  -log (T^T softmax(z))_y; the prediction is pushed through the
            noise channel before comparison with the noisy label

Probabilities are clamped below at PROB_CLAMP before any log, identically
in plain and forward modes, so the T = I reduction is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import softmax
from .noise import NoiseMatrix, invert_noise_matrix, mixed_matrix

PROB_CLAMP = 1e-12

MODES = ("plain", "backward", "forward")


@dataclass(frozen=True)
class LossEval:
    value: float
    grad_logits: np.ndarray


def loss_vector(p: np.ndarray) -> np.ndarray:
    """Per-class cross-entropy losses -log p_i for a probability vector."""
    p = np.asarray(p, dtype=np.float64)
    if (p < 0.0).any() or abs(p.sum(axis=-1) - 1.0).max() > 1e-9:
        raise ValueError("input must lie in the probability simplex")
    return -np.log(np.maximum(p, PROB_CLAMP))


class CorrectedLoss:
    """A loss evaluator in plain, backward, or forward mode.

    Backward mode precomputes the inverse of (1 - identity_mix) T +
    identity_mix I at construction; evaluation is then O(c^2) per example.
    """

    def __init__(self, mode: str, t: NoiseMatrix | None = None, identity_mix: float = 0.0):
        if mode not in MODES:
            raise ValueError(f"unknown loss mode {mode!r}")
        if mode != "plain" and t is None:
            raise ValueError(f"{mode} mode requires a noise matrix")
        self.mode = mode
        self.t = None if mode == "plain" else t
        self.identity_mix = identity_mix
        self.t_inverse = None
        if mode == "backward":
            self.t_inverse = invert_noise_matrix(t, identity_mix).matrix
            residual = self.t_inverse @ mixed_matrix(t, identity_mix) - np.eye(t.classes)
            if np.abs(residual).max() > 1e-8:
                raise ValueError("inverse check failed: T_inverse @ mixed(T) != I within 1e-8")

    @classmethod
    def plain(cls) -> "CorrectedLoss":
        return cls("plain")

    @classmethod
    def backward(cls, t: NoiseMatrix, identity_mix: float = 0.0) -> "CorrectedLoss":
        return cls("backward", t, identity_mix)

    @classmethod
    def forward(cls, t: NoiseMatrix) -> "CorrectedLoss":
        return cls("forward", t)

    def evaluate(self, y: int, logits: np.ndarray) -> LossEval:
        """Loss value and gradient w.r.t. the logits for one example."""
        logits = np.asarray(logits, dtype=np.float64)
        values, grads = self.batch_evaluate(np.array([y]), logits[None, :])
        return LossEval(float(values[0]), grads[0])

    def batch_evaluate(self, y: np.ndarray, logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized evaluate: y is (n,) class indices, logits is (n, c).

        Returns per-example values (n,) and gradients (n, c).
        """
        y = np.asarray(y, dtype=np.int64)
        logits = np.asarray(logits, dtype=np.float64)
        n, c = logits.shape
        if y.shape != (n,):
            raise ValueError(f"labels shape {y.shape} does not match logits {logits.shape}")
        if (y < 0).any() or (y >= c).any():
            raise ValueError("label index out of range")
        p = softmax(logits)
        rows = np.arange(n)

        if self.mode == "plain":
            values = -np.log(np.maximum(p[rows, y], PROB_CLAMP))
            grads = p.copy()
            grads[rows, y] -= 1.0
            return values, grads

        if self.mode == "backward":
            # Row y of T^-1 against the per-class plain losses; the gradient
            # is the matching linear combination of per-class plain gradients.
            ell = -np.log(np.maximum(p, PROB_CLAMP))
            tinv_rows = self.t_inverse[y]
            values = np.einsum("ij,ij->i", tinv_rows, ell)
            grads = tinv_rows.sum(axis=1)[:, None] * p - tinv_rows
            return values, grads

        # forward: compare the noisy label against T^T p.
        q = p @ self.t.matrix
        qy = np.maximum(q[rows, y], PROB_CLAMP)
        values = -np.log(qy)
        col = self.t.matrix[:, y].T  # (n, c): row i holds T[., y_i]
        grads = p - (p * col) / qy[:, None]
        return values, grads


def expected_clean_loss_check(t: NoiseMatrix, p: np.ndarray, identity_mix: float = 0.0) -> float:
    """Algebraic unbiasedness residual of the backward correction.

    Returns max_i | sum_j T_ij * (T^-1 l(p))_j - l_i(p) |, which is zero in
    exact arithmetic because T T^-1 = I. Propagates SingularMatrixError for
    ill-conditioned T.
    """
    ell = loss_vector(p)
    t_inv = invert_noise_matrix(t, identity_mix).matrix
    corrected = t_inv @ ell
    residual = mixed_matrix(t, identity_mix) @ corrected - ell
    return float(np.abs(residual).max())
