"""Deterministic desk-scale classification data.

The built-in task is a 3-class Gaussian blob problem with 16 non-negative
features. Feature scales are spread over two decades so trained first-layer
weights span a wide magnitude range; clipping those weights at a low level
visibly costs accuracy, which is the regime the conductance-window tooling
is meant to exercise. Inputs are shifted to be non-negative because crossbar
rows only accept non-negative read voltages.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

N_FEATURES = 16
N_CLASSES = 3
N_TRAIN = 2000
N_TEST = 500
_NOISE_STD = 0.9  # relative to unit-scale class centers
_DATA_SEED = 7


@dataclass(frozen=True)
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray

    @property
    def n_features(self) -> int:
        return self.x_train.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.y_train.max()) + 1


def make_blobs(n_train: int = N_TRAIN, n_test: int = N_TEST,
               n_features: int = N_FEATURES, n_classes: int = N_CLASSES,
               seed: int = _DATA_SEED) -> Dataset:
    """Gaussian blobs with per-feature scales spanning two decades."""
    if n_train < n_classes or n_test < n_classes:
        raise DomainError("need at least one sample per class in each split")
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 1.0, (n_classes, n_features))
    scales = np.logspace(-1.0, 1.0, n_features)
    rng.shuffle(scales)

    n = n_train + n_test
    y = np.arange(n) % n_classes
    x = centers[y] + rng.normal(0.0, _NOISE_STD, (n, n_features))
    x *= scales
    x -= x.min(axis=0)  # crossbar rows need non-negative inputs
    return Dataset(x[:n_train], y[:n_train], x[n_train:], y[n_train:])


def write_dataset_csv(path, x, y) -> None:
    """Feature columns f0..fk then an integer ``label`` column."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DomainError("x must be (samples, features) aligned with y")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(x.shape[1])] + ["label"])
        for row, label in zip(x, y):
            writer.writerow([format(v, ".9g") for v in row] + [int(label)])


def read_dataset_csv(path):
    """Inverse of write_dataset_csv; returns (x, y)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][-1] != "label":
        raise DomainError(f"{path}: expected a header ending in 'label'")
    n_feat = len(rows[0]) - 1
    if n_feat < 1:
        raise DomainError(f"{path}: no feature columns")
    x, y = [], []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != n_feat + 1:
            raise DomainError(f"{path}:{i}: expected {n_feat + 1} columns")
        try:
            x.append([float(v) for v in row[:-1]])
            y.append(int(row[-1]))
        except ValueError as exc:
            raise DomainError(f"{path}:{i}: {exc}") from exc
    if not x:
        raise DomainError(f"{path}: no data rows")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=int)
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{path}: non-finite feature values")
    if y.min() < 0:
        raise DomainError(f"{path}: labels must be non-negative integers")
    return x, y
