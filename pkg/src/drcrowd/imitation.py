"""Per-worker imitators: multinomial logistic models trained to predict a
worker's annotation from item features.

The imitators predict what the worker would say, not the true label. A
feature-free uniform imitator stands in for workers with no training
annotations so the estimation pipeline never lacks a surrogate.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import AnnotationMatrix, FeatureMatrix, SoftAnnotation
from .errors import InputError

_FORMAT_TAG = 1


@dataclass(frozen=True)
class ImitatorTrainConfig:
    epochs: int = 300
    learning_rate: float = 0.1
    l2: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise InputError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0.0:
            raise InputError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.l2 < 0.0:
            raise InputError(f"l2 must be >= 0, got {self.l2}")


@dataclass(frozen=True)
class ImitatorModel:
    """Softmax model over [k]; weights are k x (d+1) with a trailing bias
    column, applied to standardized features. d=0 models ignore features
    (used for the uniform fallback imitator)."""

    worker: int
    weights: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    fallback: bool = False

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] < 1:
            raise InputError(f"weights must be k x (d+1), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise InputError("weights must be finite")
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        std = np.ascontiguousarray(self.std, dtype=np.float64)
        if mean.shape != (w.shape[1] - 1,) or std.shape != mean.shape:
            raise InputError("standardization vectors must have length d")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1] - 1


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=1, keepdims=True)


def _augment(x_std: np.ndarray) -> np.ndarray:
    return np.hstack([x_std, np.ones((x_std.shape[0], 1))])


def ce_loss_grad(weights: np.ndarray, x_aug: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its analytic gradient (no penalty term)."""
    probs = _softmax_rows(x_aug @ weights.T)
    n = x_aug.shape[0]
    loss = float(-np.log(probs[np.arange(n), labels]).mean())
    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    grad = delta.T @ x_aug / n
    return loss, grad


def fit_imitator(
    features: FeatureMatrix,
    ann: AnnotationMatrix,
    worker: int,
    cfg: ImitatorTrainConfig = ImitatorTrainConfig(),
) -> ImitatorModel:
    """Fit one worker's imitator by full-batch gradient descent.

    Cross-entropy over the worker's annotated items; the L2 penalty is
    applied as an implicit shrinkage step each epoch, which stays stable for
    arbitrarily large l2. A worker with no annotations gets the uniform
    fallback imitator.
    """
    k = ann.dims.k
    items, labels = ann.by_worker(worker)
    if items.size == 0:
        model = random_imitator(k)
        return ImitatorModel(
            worker=worker, weights=model.weights, mean=model.mean, std=model.std, fallback=True
        )
    x = features.values[items]
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    x_aug = _augment((x - mean) / std)

    rng = np.random.default_rng(cfg.seed)
    w = rng.normal(0.0, 0.01, size=(k, x.shape[1] + 1))
    for _ in range(cfg.epochs):
        _, grad = ce_loss_grad(w, x_aug, labels)
        w = (w - cfg.learning_rate * grad) / (1.0 + cfg.learning_rate * cfg.l2)
    return ImitatorModel(worker=worker, weights=w, mean=mean, std=std)


def random_imitator(k: int) -> ImitatorModel:
    """Feature-free imitator that is uniform over [k] for every input."""
    if k < 2:
        raise InputError(f"need at least 2 classes, got k={k}")
    return ImitatorModel(
        worker=-1,
        weights=np.zeros((k, 1)),
        mean=np.zeros(0),
        std=np.zeros(0),
        fallback=True,
    )


def imitate_batch(model: ImitatorModel, x: np.ndarray) -> np.ndarray:
    """(n, k) soft annotations for a batch of feature rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise InputError(f"expected 2-D feature batch, got shape {x.shape}")
    if model.d == 0:
        z = np.tile(model.weights[:, -1], (x.shape[0], 1))
        return _softmax_rows(z)
    if x.shape[1] != model.d:
        raise InputError(f"feature dimension {x.shape[1]} != model dimension {model.d}")
    x_aug = _augment((x - model.mean) / model.std)
    return _softmax_rows(x_aug @ model.weights.T)


def imitate(model: ImitatorModel, x) -> SoftAnnotation:
    """Soft annotation for one feature vector."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.ndim != 1:
        raise InputError(f"expected a feature vector, got shape {x.shape}")
    return SoftAnnotation(imitate_batch(model, x[None, :])[0])


def agreement_rate(
    model: ImitatorModel, features: FeatureMatrix, ann: AnnotationMatrix, worker: int
) -> float:
    """Fraction of the worker's annotations matched by the imitator's argmax."""
    items, labels = ann.by_worker(worker)
    if items.size == 0:
        raise InputError(f"worker {worker} has no annotations")
    probs = imitate_batch(model, features.values[items])
    return float((probs.argmax(axis=1) == labels).mean())


def save_imitator(model: ImitatorModel, path) -> None:
    """Write the versioned binary record (little-endian, tag byte first)."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<BqqqB", _FORMAT_TAG, model.worker, model.k, model.d, int(model.fallback)))
        fh.write(model.mean.astype("<f8").tobytes())
        fh.write(model.std.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(model.weights).astype("<f8").tobytes())


def load_imitator(path) -> ImitatorModel:
    with open(path, "rb") as fh:
        head = fh.read(struct.calcsize("<BqqqB"))
        tag, worker, k, d, fallback = struct.unpack("<BqqqB", head)
        if tag != _FORMAT_TAG:
            raise InputError(f"unsupported imitator format tag {tag}")
        mean = np.frombuffer(fh.read(8 * d), dtype="<f8").copy()
        std = np.frombuffer(fh.read(8 * d), dtype="<f8").copy()
        weights = np.frombuffer(fh.read(8 * k * (d + 1)), dtype="<f8").reshape(k, d + 1).copy()
    return ImitatorModel(worker=worker, weights=weights, mean=mean, std=std, fallback=bool(fallback))
