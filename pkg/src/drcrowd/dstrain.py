"""EM fitting of Dawid-Skene parameters from a training annotation matrix.

The estimation pipeline treats the crowdsourcing model as a pre-trained
blackbox; this module supplies that blackbox. Initialization is from soft
majority-vote posteriors, the M-step uses pseudo-count smoothing, and the
whole fit is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    EPS_SMOOTH,
    AnnotationMatrix,
    ConfusionMatrix,
    DSParams,
    ProblemDims,
    SoftAnnotation,
    floor_simplex,
)
from .errors import InputError


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 100
    tol: float = 1e-6
    smoothing: float = 1.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise InputError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol < 0.0:
            raise InputError(f"tol must be >= 0, got {self.tol}")
        if self.smoothing < 0.0:
            raise InputError(f"smoothing must be >= 0, got {self.smoothing}")


def _vote_fractions(ann: AnnotationMatrix) -> np.ndarray:
    """(n, k) normalized vote counts; rows without annotations are uniform."""
    n, k = ann.dims.n, ann.dims.k
    _, items, labels = ann.triplets()
    counts = np.zeros((n, k))
    np.add.at(counts, (items, labels), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    out = np.full((n, k), 1.0 / k)
    seen = totals[:, 0] > 0
    out[seen] = counts[seen] / totals[seen]
    return out


def mv_labels(ann: AnnotationMatrix) -> list[SoftAnnotation]:
    """Per-item majority-vote fractions as soft labels."""
    return [SoftAnnotation(row) for row in _vote_fractions(ann)]


def _floor_columns(table: np.ndarray) -> np.ndarray:
    """Apply the simplex floor to each column of a k x k stochastic matrix."""
    if np.min(table) >= EPS_SMOOTH:
        return table
    return np.stack(
        [floor_simplex(table[:, y]) for y in range(table.shape[1])], axis=1
    )


def _m_step(q: np.ndarray, workers, items, labels, m: int, k: int, smoothing: float):
    tau = q.sum(axis=0) + smoothing
    tau = floor_simplex(tau / tau.sum())
    counts = np.full((m, k, k), smoothing)
    np.add.at(counts, (workers, labels), q[items])
    col_mass = counts.sum(axis=1, keepdims=True)
    if np.any(col_mass <= 0.0):
        raise InputError("degenerate confusion column; increase smoothing")
    mu = counts / col_mass
    mu = np.stack([_floor_columns(mu[i]) for i in range(m)], axis=0)
    return tau, mu


def _e_step(tau: np.ndarray, mu: np.ndarray, workers, items, labels, n: int):
    logp = np.tile(np.log(tau), (n, 1))
    np.add.at(logp, items, np.log(mu[workers, labels, :]))
    mx = logp.max(axis=1, keepdims=True)
    ll = float((mx[:, 0] + np.log(np.exp(logp - mx).sum(axis=1))).sum())
    q = np.exp(logp - mx)
    q /= q.sum(axis=1, keepdims=True)
    return q, ll


def em_fit(ann: AnnotationMatrix, dims: ProblemDims, cfg: EmConfig, with_trace: bool = False):
    """Fit DSParams by EM.

    E-step: per-item posterior over the true label from the observed
    annotations. M-step: prior = smoothed mean posterior, confusion entries =
    smoothed posterior-weighted counts. Stops at max_iters or when the
    observed-data log-likelihood improves by less than tol.

    With ``with_trace`` also returns the per-iteration log-likelihood array.
    """
    if (ann.dims.n, ann.dims.m, ann.dims.k) != (dims.n, dims.m, dims.k):
        raise InputError(f"dims {dims} inconsistent with annotations {ann.dims}")
    if len(ann) == 0:
        raise InputError("cannot fit from an empty annotation matrix")
    workers, items, labels = ann.triplets()
    n, m, k = dims.n, dims.m, dims.k

    q = _vote_fractions(ann)
    tau, mu = _m_step(q, workers, items, labels, m, k, cfg.smoothing)
    trace = []
    prev = None
    for _ in range(cfg.max_iters):
        q, ll = _e_step(tau, mu, workers, items, labels, n)
        trace.append(ll)
        if prev is not None and ll - prev < cfg.tol:
            break
        prev = ll
        tau, mu = _m_step(q, workers, items, labels, m, k, cfg.smoothing)

    params = DSParams(prior=tau, confusions=tuple(ConfusionMatrix(mu[i]) for i in range(m)))
    if with_trace:
        return params, np.asarray(trace)
    return params


def log_likelihood(params: DSParams, ann: AnnotationMatrix) -> float:
    """Observed-data log-likelihood of an annotation matrix under the model."""
    workers, items, labels = ann.triplets()
    mu = params.confusion_tensor()
    _, ll = _e_step(params.prior, mu, workers, items, labels, ann.dims.n)
    return ll
