"""Synthetic worker pools, annotations, and feature datasets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import AnnotationMatrix, ConfusionMatrix, FeatureMatrix, ProblemDims
from ..errors import InputError


@dataclass(frozen=True)
class WorkerPoolSpec:
    """Symmetric-noise worker pool: each worker reports the truth with its own
    accuracy drawn uniformly from [accuracy_low, accuracy_high] and spreads
    the rest evenly over the other classes."""

    m: int
    k: int
    accuracy_low: float
    accuracy_high: float
    seed: int

    def __post_init__(self):
        if self.m < 1 or self.k < 2:
            raise InputError(f"need m >= 1 and k >= 2, got m={self.m}, k={self.k}")
        if not (1.0 / self.k < self.accuracy_low <= self.accuracy_high <= 1.0):
            raise InputError(
                f"need 1/k < accuracy_low <= accuracy_high <= 1, got "
                f"[{self.accuracy_low}, {self.accuracy_high}] with k={self.k}"
            )


def gen_workers(spec: WorkerPoolSpec) -> list[ConfusionMatrix]:
    rng = np.random.default_rng(spec.seed)
    acc = rng.uniform(spec.accuracy_low, spec.accuracy_high, size=spec.m)
    out = []
    for a in acc:
        table = np.full((spec.k, spec.k), (1.0 - a) / (spec.k - 1))
        np.fill_diagonal(table, a)
        out.append(ConfusionMatrix.from_raw(table))
    return out


def _draw_labels(confusion: np.ndarray, truths: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF categorical draws: label j ~ confusion[:, truths[j]]."""
    cum = np.cumsum(confusion, axis=0)
    thresholds = cum[:, truths]
    labels = (thresholds <= u[None, :]).sum(axis=0)
    return np.minimum(labels, confusion.shape[0] - 1)


def gen_annotations(
    true_labels: np.ndarray,
    confusions: list[ConfusionMatrix],
    observe_prob: float,
    rng: np.random.Generator,
) -> AnnotationMatrix:
    """Draw the training annotation matrix: each (worker, item) pair is
    observed independently with observe_prob and, if observed, labeled from
    the worker's confusion column for the item's true label."""
    if not 0.0 < observe_prob <= 1.0:
        raise InputError(f"observe_prob must be in (0, 1], got {observe_prob}")
    truths = np.asarray(true_labels, dtype=np.int64)
    m, n = len(confusions), truths.size
    k = confusions[0].k
    if truths.min() < 0 or truths.max() >= k:
        raise InputError("true label out of range")
    observed = rng.random((m, n)) < observe_prob
    u = rng.random((m, n))
    workers, items, labels = [], [], []
    for i, conf in enumerate(confusions):
        cols = np.flatnonzero(observed[i])
        if cols.size == 0:
            continue
        drawn = _draw_labels(conf.table, truths[cols], u[i, cols])
        workers.append(np.full(cols.size, i, dtype=np.int64))
        items.append(cols)
        labels.append(drawn)
    dims = ProblemDims(n=n, m=m, k=k)
    if not workers:
        return AnnotationMatrix({}, dims)
    return AnnotationMatrix.from_triplets(
        np.concatenate(workers), np.concatenate(items), np.concatenate(labels), dims
    )


def draw_worker_labels(
    true_labels: np.ndarray, confusions: list[ConfusionMatrix], rng: np.random.Generator
) -> np.ndarray:
    """(m, n) matrix of hard labels every worker would give every item."""
    truths = np.asarray(true_labels, dtype=np.int64)
    u = rng.random((len(confusions), truths.size))
    return np.stack(
        [_draw_labels(conf.table, truths, u[i]) for i, conf in enumerate(confusions)], axis=0
    )


@dataclass(frozen=True)
class SyntheticDataSpec:
    """Class-conditional Gaussian items: class y has mean class_sep on its own
    axis (first k of d dimensions) and isotropic unit-scaled noise."""

    n: int = 2000
    k: int = 5
    d: int = 10
    class_sep: float = 3.0
    noise: float = 1.0

    def __post_init__(self):
        if self.n < 1 or self.k < 2 or self.d < 1:
            raise InputError(f"invalid synthetic data spec: {self}")
        if self.class_sep < 0 or self.noise <= 0:
            raise InputError(f"invalid synthetic data spec: {self}")


def class_means(k: int, d: int, class_sep: float) -> np.ndarray:
    means = np.zeros((k, d))
    for y in range(k):
        means[y, y % d] += class_sep
        if d > k:
            # tilt off-axis so classes beyond d stay separable
            means[y, k + (y % (d - k))] += 0.5 * class_sep * ((-1) ** y)
    return means


def gen_features(
    labels: np.ndarray, spec: SyntheticDataSpec, rng: np.random.Generator
) -> FeatureMatrix:
    """Class-conditional Gaussian features for the given true labels."""
    labels = np.asarray(labels, dtype=np.int64)
    means = class_means(spec.k, spec.d, spec.class_sep)
    x = means[labels] + spec.noise * rng.standard_normal((labels.size, spec.d))
    return FeatureMatrix(x)


def gen_dataset(spec: SyntheticDataSpec, rng: np.random.Generator):
    """Feature matrix and uniformly-drawn true labels."""
    labels = rng.integers(0, spec.k, size=spec.n).astype(np.int64)
    return gen_features(labels, spec, rng), labels
