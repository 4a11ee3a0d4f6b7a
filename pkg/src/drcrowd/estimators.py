"""Voting-score estimators: ideal-world, importance sampling, direct method,
doubly robust, and clipped doubly robust, plus their exact bias/variance
calculators and the automatic clip-threshold selector.

The variance/bias calculators take ground-truth worker label distributions
and exist for simulation and testing; in deployment those distributions are
unknown.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import ScoreTable, SoftAnnotation, make_estimate, EstimateVector
from .errors import InputError


@dataclass(frozen=True)
class SamplingPlan:
    """Per-worker independent inclusion probabilities (Poisson sampling)."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise InputError(f"plan must be a nonempty vector, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or np.min(p) <= 0.0 or np.max(p) > 1.0:
            raise InputError("plan probabilities must lie in (0, 1]")
        object.__setattr__(self, "probs", p)

    @property
    def m(self) -> int:
        return self.probs.size

    @property
    def expected_cost(self) -> float:
        return float(self.probs.sum())

    @classmethod
    def uniform(cls, m: int, pi: float) -> "SamplingPlan":
        return cls(np.full(m, float(pi)))


@dataclass(frozen=True)
class SampleRealization:
    """A realized inclusion set with the hard labels of included workers."""

    included: frozenset
    labels: Mapping

    def __post_init__(self):
        inc = frozenset(int(i) for i in self.included)
        lab = {int(i): int(l) for i, l in self.labels.items()}
        if set(lab) != inc:
            raise InputError("realization labels must be keyed exactly by the included set")
        object.__setattr__(self, "included", inc)
        object.__setattr__(self, "labels", lab)

    @property
    def cost(self) -> int:
        return len(self.included)

    def as_arrays(self, m: int):
        """Inclusion mask (uint8) and label array (int64, 0 where excluded)."""
        mask = np.zeros(m, dtype=np.uint8)
        labels = np.zeros(m, dtype=np.int64)
        for i, l in self.labels.items():
            if not 0 <= i < m:
                raise InputError(f"included worker {i} out of range [0, {m})")
            mask[i] = 1
            labels[i] = l
        return mask, labels


@dataclass(frozen=True)
class ClipThreshold:
    """Cap on the importance weight min(eta, 1/pi); eta below 1 is dominated."""

    eta: float

    def __post_init__(self):
        if not (math.isfinite(self.eta) and self.eta >= 1.0):
            raise InputError(f"clip threshold must be >= 1, got {self.eta}")


def _tables_tensor(tables) -> np.ndarray:
    if isinstance(tables, np.ndarray):
        t = np.ascontiguousarray(tables, dtype=np.float64)
    else:
        t = np.ascontiguousarray(np.stack([st.table for st in tables], axis=0))
    if t.ndim != 3 or t.shape[1] != t.shape[2]:
        raise InputError(f"score tables must stack to (m, k, k), got {t.shape}")
    return t


def _softs_matrix(softs, m: int, k: int) -> np.ndarray:
    if isinstance(softs, np.ndarray):
        s = np.ascontiguousarray(softs, dtype=np.float64)
    else:
        s = np.ascontiguousarray(np.stack([sa.probs for sa in softs], axis=0))
    if s.shape != (m, k):
        raise InputError(f"expected {m} soft annotations of length {k}, got shape {s.shape}")
    return s


def _labels_array(labels, m: int, k: int) -> np.ndarray:
    if isinstance(labels, Mapping):
        if set(labels) != set(range(m)):
            missing = sorted(set(range(m)) - set(labels))
            raise InputError(f"labels missing for workers {missing}")
        arr = np.array([labels[i] for i in range(m)], dtype=np.int64)
    else:
        arr = np.ascontiguousarray(labels, dtype=np.int64)
    if arr.shape != (m,):
        raise InputError(f"need all {m} worker labels, got {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= k):
        raise InputError(f"label out of range [0, {k})")
    return arr


def estimate_iw(tables, labels, offset=None) -> EstimateVector:
    """Ideal-world estimate from all m workers' hard labels; cost m."""
    t = _tables_tensor(tables)
    m, k = t.shape[0], t.shape[1]
    lab = _labels_array(labels, m, k)
    values = _kernels.impl.iw_values(t, lab)
    return make_estimate(values, cost=m, offset=offset)


def sample_workers(plan: SamplingPlan, rng: np.random.Generator):
    """Poisson sampling: include each worker independently with prob pi_i."""
    u = rng.random(plan.m)
    return {int(i) for i in np.flatnonzero(u < plan.probs)}


def _check_realization(real: SampleRealization, plan: SamplingPlan, k: int):
    mask, labels = real.as_arrays(plan.m)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise InputError(f"realized label out of range [0, {k})")
    return mask, labels


def estimate_is(tables, real: SampleRealization, plan: SamplingPlan, offset=None) -> EstimateVector:
    """Importance-sampling estimate: inverse-propensity-weighted scores."""
    t = _tables_tensor(tables)
    if plan.m != t.shape[0]:
        raise InputError("plan size does not match score tables")
    mask, labels = _check_realization(real, plan, t.shape[1])
    values = _kernels.impl.is_values(t, mask, labels, 1.0 / plan.probs)
    return make_estimate(values, cost=real.cost, offset=offset)


def estimate_dm(tables, softs, offset=None) -> EstimateVector:
    """Direct method: expected scores under imitated annotations; cost 0."""
    t = _tables_tensor(tables)
    s = _softs_matrix(softs, t.shape[0], t.shape[1])
    values = _kernels.impl.dm_values(t, s)
    return make_estimate(values, cost=0, offset=offset)


def estimate_dr(tables, softs, real: SampleRealization, plan: SamplingPlan, offset=None) -> EstimateVector:
    """Doubly robust estimate: direct-method baseline plus an
    inverse-propensity-weighted correction on the sampled workers."""
    t = _tables_tensor(tables)
    if plan.m != t.shape[0]:
        raise InputError("plan size does not match score tables")
    s = _softs_matrix(softs, t.shape[0], t.shape[1])
    mask, labels = _check_realization(real, plan, t.shape[1])
    values = _kernels.impl.dr_values(t, s, mask, labels, 1.0 / plan.probs)
    return make_estimate(values, cost=real.cost, offset=offset)


def estimate_dr_clipped(
    tables, softs, real: SampleRealization, plan: SamplingPlan, clip: ClipThreshold, offset=None
) -> EstimateVector:
    """Doubly robust estimate with the importance weight capped at eta."""
    t = _tables_tensor(tables)
    if plan.m != t.shape[0]:
        raise InputError("plan size does not match score tables")
    s = _softs_matrix(softs, t.shape[0], t.shape[1])
    mask, labels = _check_realization(real, plan, t.shape[1])
    weights = np.minimum(clip.eta, 1.0 / plan.probs)
    values = _kernels.impl.dr_values(t, s, mask, labels, weights)
    return make_estimate(values, cost=real.cost, offset=offset)


def auto_threshold(plan: SamplingPlan) -> ClipThreshold:
    """Clip threshold minimizing |eta - #{i: 1/pi_i > eta} / sqrt(m)|.

    Inverse propensities are sorted; on each interval between consecutive
    breakpoints the count is constant, so the only candidates are the
    breakpoints and the per-interval target count/sqrt(m) clamped into the
    (half-open) interval. Ties resolve to the lowest eta; result >= 1.
    """
    w = np.sort(1.0 / plan.probs)
    sqrt_m = math.sqrt(plan.m)

    def objective(eta: float) -> float:
        return abs(eta - np.count_nonzero(w > eta) / sqrt_m)

    edges = np.unique(np.concatenate([[1.0], w]))
    candidates = set(edges.tolist())
    for t, lo in enumerate(edges):
        hi = edges[t + 1] if t + 1 < edges.size else math.inf
        target = np.count_nonzero(w > lo) / sqrt_m
        if target < lo:
            candidates.add(float(lo))
        elif target >= hi:
            # interval is half-open; the attainable minimum is just inside
            candidates.add(math.nextafter(hi, lo))
        else:
            candidates.add(float(target))

    best_eta, best_obj = 1.0, objective(1.0)
    for eta in sorted(c for c in candidates if c >= 1.0):
        obj = objective(eta)
        if obj < best_obj:
            best_eta, best_obj = eta, obj
    return ClipThreshold(best_eta)


def _dists_matrix(dists, m: int, k: int) -> np.ndarray:
    d = _softs_matrix(dists, m, k)
    if np.min(d) < -1e-15 or np.max(np.abs(d.sum(axis=1) - 1.0)) > 1e-9:
        raise InputError("worker label distributions must be simplex vectors")
    return d


def _score_moments(t: np.ndarray, d: np.ndarray):
    """Per-worker mean and variance of S_i(y, l) under label distribution d_i."""
    mean = np.einsum("il,iyl->iy", d, t)
    centered = t - mean[:, :, None]
    var = np.einsum("il,iyl->iy", d, centered**2)
    return mean, var


def var_is(tables, dists, plan: SamplingPlan) -> np.ndarray:
    """Exact variance vector of the importance-sampling estimator."""
    t = _tables_tensor(tables)
    m, k = t.shape[0], t.shape[1]
    d = _dists_matrix(dists, m, k)
    mean, var = _score_moments(t, d)
    inv = 1.0 / plan.probs
    per_worker = inv[:, None] * var + (inv - 1.0)[:, None] * mean**2
    return per_worker.sum(axis=0) / m**2


def var_dr(tables, dists, softs, plan: SamplingPlan) -> np.ndarray:
    """Exact variance vector of the doubly robust estimator."""
    t = _tables_tensor(tables)
    m, k = t.shape[0], t.shape[1]
    d = _dists_matrix(dists, m, k)
    s = _softs_matrix(softs, m, k)
    mean, var = _score_moments(t, d)
    baseline = np.einsum("il,iyl->iy", s, t)
    gap = mean - baseline
    inv = 1.0 / plan.probs
    per_worker = inv[:, None] * var + (inv - 1.0)[:, None] * gap**2
    return per_worker.sum(axis=0) / m**2


def bias_var_dr_clipped(tables, dists, softs, plan: SamplingPlan, clip: ClipThreshold):
    """Exact (bias, variance) vectors of the clipped doubly robust estimator."""
    t = _tables_tensor(tables)
    m, k = t.shape[0], t.shape[1]
    d = _dists_matrix(dists, m, k)
    s = _softs_matrix(softs, m, k)
    mean, var = _score_moments(t, d)
    baseline = np.einsum("il,iyl->iy", s, t)
    gap = mean - baseline
    shortfall = np.minimum(plan.probs * clip.eta - 1.0, 0.0)
    bias = np.abs((shortfall[:, None] * gap).sum(axis=0)) / m
    inv = 1.0 / plan.probs
    damp = np.minimum(clip.eta**2 * plan.probs**2, 1.0)
    per_worker = damp[:, None] * (inv[:, None] * var + (inv - 1.0)[:, None] * gap**2)
    variance = per_worker.sum(axis=0) / m**2
    return bias, variance
