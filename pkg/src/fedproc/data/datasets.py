"""Labeled datasets, the synthetic blob generator and mini-batching."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import numpy as np

from ..errors import ConfigurationError, UsageError


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = _freeze(np.asarray(self.features, dtype=np.float64))
        labels = _freeze(np.asarray(self.labels, dtype=np.int64))
        if labels.ndim != 1 or features.shape[:1] != labels.shape:
            raise UsageError(f"{features.shape[0]} feature rows but labels of shape {labels.shape}")
        if labels.size == 0:
            raise UsageError("dataset is empty")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise UsageError(f"labels must lie in 0..{self.num_classes - 1}")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.size

    @property
    def sample_shape(self) -> tuple[int, ...]:
        return self.features.shape[1:]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, indices) -> LabeledDataset:
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[indices], self.labels[indices], self.num_classes)

    def flattened(self) -> LabeledDataset:
        return LabeledDataset(self.features.reshape(len(self), -1), self.labels, self.num_classes)


@dataclass(frozen=True, eq=False)
class ClientDataset(LabeledDataset):
    client_id: int = 0

    @cached_property
    def per_class_index(self) -> dict[int, np.ndarray]:
        """Class -> sorted sample indices, for the classes this client holds."""
        return {int(k): np.flatnonzero(self.labels == k) for k in np.unique(self.labels)}

    @property
    def classes_present(self) -> np.ndarray:
        return self.class_counts() > 0


def generate_blobs(num_classes: int, dim: int, per_class: int, spread: float, seed: int) -> LabeledDataset:
    """Isotropic Gaussian clusters, ``per_class`` samples each, class-sorted.

    Class means are orthogonal with norm 1/sqrt(2), so every pair of means
    is exactly distance 1 apart.
    """
    if num_classes < 2:
        raise ConfigurationError(f"need at least 2 classes, got {num_classes}")
    if per_class < 1:
        raise ConfigurationError(f"per_class must be >= 1, got {per_class}")
    if dim < num_classes:
        raise ConfigurationError(f"dim ({dim}) must be >= num_classes ({num_classes}) for unit-separated means")
    if spread < 0:
        raise ConfigurationError(f"spread must be non-negative, got {spread}")
    rng = np.random.default_rng(seed)
    means = _orthogonal_means(rng, num_classes, dim)
    labels = np.repeat(np.arange(num_classes), per_class)
    noise = rng.standard_normal((labels.size, dim)) * spread
    return LabeledDataset(means[labels] + noise, labels, num_classes)


def _orthogonal_means(rng: np.random.Generator, num_classes: int, dim: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((dim, num_classes)))
    return q.T / np.sqrt(2.0)


def blob_means(num_classes: int, dim: int, seed: int) -> np.ndarray:
    """The class means :func:`generate_blobs` uses for the same arguments."""
    return _orthogonal_means(np.random.default_rng(seed), num_classes, dim)


def train_test_split(data: LabeledDataset, test_fraction: float, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified split: round(test_fraction * n_k) samples of each class go to the test side."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigurationError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for k in range(data.num_classes):
        idx = np.flatnonzero(data.labels == k)
        idx = idx[rng.permutation(idx.size)]
        n_test = int(round(test_fraction * idx.size))
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    if train_idx.size == 0 or test_idx.size == 0:
        raise ConfigurationError("train/test split left one side empty")
    return data.subset(train_idx), data.subset(test_idx)


def batches(ds: LabeledDataset, batch_size: int, epoch_seed) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """One epoch of shuffled mini-batches; the last partial batch is kept."""
    if batch_size < 1:
        raise ConfigurationError(f"batch size must be >= 1, got {batch_size}")
    order = np.random.default_rng(epoch_seed).permutation(len(ds))
    for start in range(0, order.size, batch_size):
        idx = order[start: start + batch_size]
        yield ds.features[idx], ds.labels[idx]
