"""Datasets: labeled feature matrices, IDX files, synthetic Gaussian blobs.

LabeledDataset keeps the clean and noisy label channels side by side; the
noisy channel starts equal to the clean one and is replaced when noise is
injected. Features are never touched by corruption.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .linalg import softmax
from .noise import NoiseMatrix, corrupt_labels

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """IDX parse failure; the message carries the offending byte offset."""


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    clean_labels: np.ndarray
    noisy_labels: np.ndarray
    class_count: int

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        cl = np.asarray(self.clean_labels, dtype=np.int64)
        nl = np.asarray(self.noisy_labels, dtype=np.int64)
        if f.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if not np.isfinite(f).all():
            raise ValueError("features must be finite")
        n = f.shape[0]
        if cl.shape != (n,) or nl.shape != (n,):
            raise ValueError("label arrays must match the number of rows")
        for name, lab in (("clean", cl), ("noisy", nl)):
            if lab.size and (lab.min() < 0 or lab.max() >= self.class_count):
                raise ValueError(f"{name} labels out of range for {self.class_count} classes")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "clean_labels", cl)
        object.__setattr__(self, "noisy_labels", nl)

    @classmethod
    def from_clean(cls, features, labels, class_count: int | None = None) -> "LabeledDataset":
        labels = np.asarray(labels, dtype=np.int64)
        if class_count is None:
            class_count = int(labels.max()) + 1 if labels.size else 0
        return cls(features, labels, labels.copy(), class_count)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def corrupted(self, t: NoiseMatrix, seed: int) -> "LabeledDataset":
        """New dataset whose noisy channel is resampled from T."""
        if t.classes != self.class_count:
            raise ValueError("noise matrix classes != dataset classes")
        return replace(self, noisy_labels=corrupt_labels(self.clean_labels, t, seed))

    def subset(self, index) -> "LabeledDataset":
        return LabeledDataset(
            self.features[index], self.clean_labels[index],
            self.noisy_labels[index], self.class_count,
        )

    def one_hot(self, noisy: bool = True) -> np.ndarray:
        labels = self.noisy_labels if noisy else self.clean_labels
        out = np.zeros((self.n, self.class_count))
        out[np.arange(self.n), labels] = 1.0
        return out


# --- IDX container (the MNIST distribution format) ---

def _read_exact(f, count: int, offset: int, what: str) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise IdxFormatError(
            f"truncated file: wanted {count} bytes for {what} at offset {offset}, got {len(data)}"
        )
    return data


def read_idx_images(path) -> np.ndarray:
    """Read an IDX image file into a uint8 array (count, rows, cols)."""
    with open(path, "rb") as f:
        header = _read_exact(f, 16, 0, "image header")
        magic, count, rows, cols = struct.unpack(">iiii", header)
        if magic != IDX_IMAGE_MAGIC:
            raise IdxFormatError(
                f"bad image magic 0x{magic:08x} at offset 0 (expected 0x{IDX_IMAGE_MAGIC:08x})"
            )
        body = _read_exact(f, count * rows * cols, 16, f"{count}x{rows}x{cols} pixels")
        return np.frombuffer(body, dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    """Read an IDX label file into a uint8 array (count,)."""
    with open(path, "rb") as f:
        header = _read_exact(f, 8, 0, "label header")
        magic, count = struct.unpack(">ii", header)
        if magic != IDX_LABEL_MAGIC:
            raise IdxFormatError(
                f"bad label magic 0x{magic:08x} at offset 0 (expected 0x{IDX_LABEL_MAGIC:08x})"
            )
        body = _read_exact(f, count, 8, f"{count} labels")
        return np.frombuffer(body, dtype=np.uint8)


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.ascontiguousarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError("images must have shape (count, rows, cols)")
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", IDX_IMAGE_MAGIC, *images.shape))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise ValueError("labels must be 1-D")
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", IDX_LABEL_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def load_idx(images_path, labels_path) -> LabeledDataset:
    """Load an IDX image/label pair; pixels are scaled to [0, 1]."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels"
        )
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return LabeledDataset.from_clean(features, labels.astype(np.int64), 10)


# --- synthetic Gaussians with a closed-form posterior ---

@dataclass(frozen=True)
class SyntheticGaussians:
    """Isotropic unit-variance Gaussian blobs with equal class priors.

    Means sit at `separation` times the standard simplex vertices (scaled
    basis vectors), so the exact posterior is a softmax over the linear
    scores x . mu_i - |mu_i|^2 / 2 and is exposed for oracle tests.
    """

    dataset: LabeledDataset
    means: np.ndarray

    def posterior(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        scores = x @ self.means.T - 0.5 * (self.means**2).sum(axis=1)
        return softmax(scores)

    def bayes_accuracy(self) -> float:
        post = self.posterior(self.dataset.features)
        return float((post.argmax(axis=1) == self.dataset.clean_labels).mean())


def synthetic_gaussians(
    classes: int,
    per_class: int,
    dim: int | None = None,
    separation: float = 1.0,
    seed: int = 0,
) -> SyntheticGaussians:
    """Sample `per_class` points per class around simplex-vertex means."""
    if classes < 2:
        raise ValueError("need at least 2 classes")
    if separation < 0:
        raise ValueError("separation must be non-negative")
    if dim is None:
        dim = classes
    if dim < classes:
        raise ValueError("dim must be at least the number of classes")
    rng = np.random.default_rng(seed)
    means = np.zeros((classes, dim))
    means[np.arange(classes), np.arange(classes)] = separation

    labels = np.repeat(np.arange(classes), per_class)
    features = means[labels] + rng.standard_normal((labels.size, dim))
    perm = rng.permutation(labels.size)
    dataset = LabeledDataset.from_clean(features[perm], labels[perm], classes)
    return SyntheticGaussians(dataset, means)


def load_csv_dataset(path, class_count: int | None = None) -> LabeledDataset:
    """Numeric CSV: feature columns followed by one integer label column."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] < 2:
        raise ValueError("CSV needs at least one feature column and a label column")
    labels = data[:, -1]
    if not np.array_equal(labels, np.round(labels)):
        raise ValueError("last CSV column must hold integer class labels")
    return LabeledDataset.from_clean(data[:, :-1], labels.astype(np.int64), class_count)
