"""Noise transition matrix estimation from noisy-model softmax scores.

A model trained on noisy labels approximates p(noisy label | x). For each
class i, the instance scoring highest on column i acts as an anchor whose
full score row approximates row i of the transition matrix. The percentile
mode picks the row at the alpha-quantile of the per-class score
distribution instead of the maximum, which resists overconfident outliers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .linalg import SingularMatrixError, softmax, solve_or_invert
from .network import MlpNetwork, forward_batch
from .noise import NoiseMatrix, row_normalize

ESTIMATOR_MODES = ("argmax", "percentile")

WEAK_ANCHOR_SCORE = 0.5


@dataclass(frozen=True)
class EstimatorConfig:
    mode: str = "percentile"
    alpha: float = 0.97
    row_normalize: bool = True

    def __post_init__(self):
        if self.mode not in ESTIMATOR_MODES:
            raise ValueError(f"unknown estimator mode {self.mode!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")


@dataclass(frozen=True)
class EstimatedT:
    matrix: NoiseMatrix
    anchors: np.ndarray
    anchor_scores: np.ndarray
    condition_estimate: float
    warnings: tuple[str, ...]

    def save(self, csv_path, sidecar_path=None) -> None:
        """Write the matrix CSV plus a JSON sidecar with the diagnostics."""
        self.matrix.to_csv(csv_path)
        if sidecar_path is not None:
            doc = {
                "anchors": [int(a) for a in self.anchors],
                "anchor_scores": [float(s) for s in self.anchor_scores],
                "condition_estimate": self.condition_estimate,
                "warnings": list(self.warnings),
            }
            with open(sidecar_path, "w", encoding="utf-8", newline="\n") as f:
                json.dump(doc, f, indent=1, sort_keys=True)
                f.write("\n")


def collect_scores(net: MlpNetwork, features: np.ndarray) -> np.ndarray:
    """Softmax outputs of a frozen network, one row per instance."""
    features = np.asarray(features, dtype=np.float64)
    logits, _ = forward_batch(net, features, training=False)
    return softmax(logits)


def _anchor_row(column: np.ndarray, config: EstimatorConfig) -> int:
    if config.mode == "argmax":
        return int(column.argmax())
    # alpha-percentile of the score distribution, sorted ascending; ties
    # resolve to the lowest row index holding the percentile value, which
    # makes alpha = 1.0 coincide with argmax.
    n = column.shape[0]
    pos = min(max(math.ceil(config.alpha * n) - 1, 0), n - 1)
    value = np.sort(column)[pos]
    return int(np.argmax(column == value))


def estimate_transition_matrix(scores: np.ndarray, config: EstimatorConfig) -> EstimatedT:
    """Estimate T from an (n, c) matrix of noisy-posterior scores.

    Row i of the estimate is the full score row of the class-i anchor,
    optionally row-normalized. Requires n >= c and rows in the simplex
    within 1e-6.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError("scores must be a 2-D matrix")
    n, c = scores.shape
    if n < c:
        raise ValueError(f"need at least {c} rows of scores, got {n}")
    if (scores < 0.0).any() or np.abs(scores.sum(axis=1) - 1.0).max() > 1e-6:
        raise ValueError("score rows must lie in the probability simplex (1e-6)")

    anchors = np.array([_anchor_row(scores[:, i], config) for i in range(c)])
    matrix = scores[anchors].copy()
    anchor_scores = matrix[np.arange(c), np.arange(c)].copy()

    warnings = tuple(
        f"weak anchor for class {i}: score {anchor_scores[i]:.4f} < {WEAK_ANCHOR_SCORE}"
        for i in range(c)
        if anchor_scores[i] < WEAK_ANCHOR_SCORE
    )
    t_hat = row_normalize(matrix) if config.row_normalize else NoiseMatrix(matrix)
    try:
        condition = solve_or_invert(t_hat.matrix).condition
    except SingularMatrixError as err:
        condition = err.condition
    return EstimatedT(t_hat, anchors, anchor_scores, float(condition), warnings)


def estimate_from_network(
    net: MlpNetwork, features: np.ndarray, config: EstimatorConfig
) -> EstimatedT:
    """Convenience composition: collect scores, then estimate."""
    return estimate_transition_matrix(collect_scores(net, features), config)
