"""Row-stochastic label-noise transition matrices.

A transition matrix T has T[i, j] = probability that a clean label i is
observed as label j. Matrices are built from compact specs (identity,
symmetric, pair_flip), can corrupt label arrays reproducibly, and invert
with an optional identity mix to tame conditioning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import Inverse, dense_matrix, solve_or_invert

ROW_SUM_TOL = 1e-9

NOISE_KINDS = ("identity", "symmetric", "pair_flip")


@dataclass(frozen=True)
class PairFlip:
    """One directed flip source -> target; `level` overrides the global N."""

    source: int
    target: int
    level: float | None = None


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    level: float = 0.0
    pairs: tuple[PairFlip, ...] = ()

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.level <= 1.0:
            raise ValueError(f"noise level must be in [0, 1], got {self.level}")
        sources = [p.source for p in self.pairs]
        if len(sources) != len(set(sources)):
            raise ValueError("each class may appear at most once as a flip source")
        for p in self.pairs:
            if p.level is not None and not 0.0 <= p.level <= 1.0:
                raise ValueError(f"pair level must be in [0, 1], got {p.level}")


class NoiseMatrix:
    """A validated c x c row-stochastic matrix."""

    def __init__(self, matrix):
        m = dense_matrix(matrix)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"noise matrix must be square, got {m.shape}")
        if (m < 0.0).any() or (m > 1.0).any():
            raise ValueError("noise matrix entries must lie in [0, 1]")
        row_sums = m.sum(axis=1)
        if np.abs(row_sums - 1.0).max() > ROW_SUM_TOL:
            worst = int(np.abs(row_sums - 1.0).argmax())
            raise ValueError(
                f"row {worst} sums to {row_sums[worst]!r}, not 1 within {ROW_SUM_TOL}"
            )
        self.matrix = m
        self.classes = m.shape[0]

    def __eq__(self, other):
        return isinstance(other, NoiseMatrix) and np.array_equal(self.matrix, other.matrix)

    def __repr__(self):
        return f"NoiseMatrix(classes={self.classes})"

    def to_csv(self, path) -> None:
        """Write as plain-text CSV, one row per line, full double precision."""
        lines = [",".join(f"{x:.17g}" for x in row) for row in self.matrix]
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "NoiseMatrix":
        rows = []
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    rows.append([float(tok) for tok in line.split(",")])
        return cls(rows)


def build_noise_matrix(spec: NoiseSpec, classes: int) -> NoiseMatrix:
    """Materialize a NoiseSpec as a c x c transition matrix.

    identity  -> I
    symmetric -> 1 - N on the diagonal, N / (c - 1) elsewhere
    pair_flip -> listed source rows get 1 - N on the diagonal and N on the
                 target column; unlisted rows stay identity rows
    """
    if classes < 2:
        raise ValueError("need at least 2 classes")
    n = spec.level
    if spec.kind == "identity":
        m = np.eye(classes)
    elif spec.kind == "symmetric":
        m = np.full((classes, classes), n / (classes - 1))
        np.fill_diagonal(m, 1.0 - n)
    elif spec.kind == "pair_flip":
        m = np.eye(classes)
        for p in spec.pairs:
            if not (0 <= p.source < classes and 0 <= p.target < classes):
                raise ValueError(
                    f"pair {p.source}->{p.target} out of range for {classes} classes"
                )
            if p.source == p.target:
                raise ValueError(f"pair source and target coincide: {p.source}")
            level = n if p.level is None else p.level
            m[p.source, p.source] = 1.0 - level
            m[p.source, p.target] = level
    else:  # pragma: no cover - guarded by NoiseSpec
        raise ValueError(spec.kind)
    return NoiseMatrix(m)


def corrupt_labels(labels: np.ndarray, t: NoiseMatrix, seed: int) -> np.ndarray:
    """Resample each label from its row of T, independently and reproducibly.

    Accepts integer class labels of shape (n,) or one-hot labels of shape
    (n, c) and returns the same representation. Sampling draws a single
    uniform per label and inverts the row CDF, so results are reproducible
    for a given seed regardless of platform.
    """
    labels = np.asarray(labels)
    one_hot = labels.ndim == 2
    if one_hot:
        if labels.shape[1] != t.classes:
            raise ValueError(
                f"one-hot width {labels.shape[1]} != {t.classes} classes"
            )
        idx = labels.argmax(axis=1)
    else:
        idx = labels.astype(np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= t.classes):
            raise ValueError("label index out of range")

    rng = np.random.default_rng(seed)
    u = rng.random(idx.shape[0])
    cdf = np.cumsum(t.matrix, axis=1)
    # First column j with cdf[j] > u; clip guards the u ~ 1.0 edge.
    new_idx = (u[:, None] >= cdf[idx]).sum(axis=1)
    new_idx = np.minimum(new_idx, t.classes - 1)

    if one_hot:
        out = np.zeros_like(labels)
        out[np.arange(len(new_idx)), new_idx] = 1
        return out
    return new_idx.astype(labels.dtype)


def invert_noise_matrix(t: NoiseMatrix, identity_mix: float = 0.0) -> Inverse:
    """Invert (1 - lambda) T + lambda I, lambda = identity_mix.

    With identity_mix = 0 this is plain T^-1. Raises SingularMatrixError
    when the mixed matrix is still numerically singular.
    """
    if not 0.0 <= identity_mix < 1.0:
        raise ValueError(f"identity_mix must be in [0, 1), got {identity_mix}")
    mixed = mixed_matrix(t, identity_mix)
    return solve_or_invert(mixed)


def mixed_matrix(t: NoiseMatrix, identity_mix: float) -> np.ndarray:
    if identity_mix == 0.0:
        return t.matrix
    return (1.0 - identity_mix) * t.matrix + identity_mix * np.eye(t.classes)


def row_normalize(m: np.ndarray) -> NoiseMatrix:
    """Divide each row by its sum. A zero row means an unobserved class."""
    m = dense_matrix(m)
    if (m < 0.0).any():
        raise ValueError("row_normalize requires non-negative entries")
    sums = m.sum(axis=1)
    if (sums == 0.0).any():
        row = int(np.argmin(sums))
        raise ValueError(f"row {row} sums to zero (class {row} unobserved)")
    return NoiseMatrix(m / sums[:, None])
