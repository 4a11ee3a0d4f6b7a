"""Domain types, voting-score tables, and Dawid-Skene posterior inference.

Conventions: workers, items, and class labels are 0-based everywhere in
memory; 1-based indices appear only in external file formats. A worker's
confusion matrix is indexed [reported, truth] and is column-stochastic;
a score table is indexed [candidate truth, reported].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

# Probability floor applied to priors and confusion columns so that log
# scores stay finite (log 1e-6 ~ -13.8).
EPS_SMOOTH = 1e-6

SIMPLEX_ATOL = 1e-9


def floor_simplex(p: np.ndarray, eps: float = EPS_SMOOTH) -> np.ndarray:
    """Push every entry of a probability vector up to at least ``eps``.

    Vectors already above the floor are returned unchanged. Otherwise the
    vector is mixed with the uniform distribution just enough that every
    entry is exactly >= eps and the sum stays 1 (a plain clip-and-renormalize
    can fall back below the floor).
    """
    p = np.asarray(p, dtype=np.float64)
    k = p.shape[-1]
    if k * eps >= 1.0:
        raise InputError(f"floor {eps} infeasible for {k} classes")
    if np.min(p) >= eps:
        return p
    return (1.0 - k * eps) * p + eps


def argmax_lowest(values: np.ndarray) -> int:
    """Index of the maximum, ties broken toward the lowest index."""
    return int(np.argmax(values))


def _check_simplex(p: np.ndarray, what: str, floor: float = 0.0) -> None:
    if p.ndim != 1:
        raise InputError(f"{what} must be a vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InputError(f"{what} has non-finite entries")
    if np.min(p) < floor - 1e-15:
        raise InputError(f"{what} entry {np.min(p)} below floor {floor}")
    s = float(np.sum(p))
    if abs(s - 1.0) > SIMPLEX_ATOL:
        raise InputError(f"{what} sums to {s}, expected 1")


@dataclass(frozen=True)
class ProblemDims:
    """Problem sizes: n items, m workers, k classes, d feature dimensions."""

    n: int
    m: int
    k: int
    d: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.d < 0:
            raise InputError(f"non-positive dims: {self}")
        if self.k < 2:
            raise InputError(f"need at least 2 classes, got k={self.k}")


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense n x d feature matrix."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise InputError(f"features must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InputError("features contain non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


class AnnotationMatrix:
    """Sparse store of observed hard labels keyed by (worker, item).

    The key set is the observation set; per-item and per-worker slices give
    the respective observation subsets. Immutable after construction.
    """

    def __init__(self, entries, dims: ProblemDims):
        self.dims = dims
        items = sorted(entries.items())
        w = np.array([key[0] for key, _ in items], dtype=np.int64)
        j = np.array([key[1] for key, _ in items], dtype=np.int64)
        lab = np.array([val for _, val in items], dtype=np.int64)
        if w.size:
            if w.min() < 0 or w.max() >= dims.m:
                raise InputError("worker index out of range")
            if j.min() < 0 or j.max() >= dims.n:
                raise InputError("item index out of range")
            if lab.min() < 0 or lab.max() >= dims.k:
                raise InputError("label out of range")
        self._workers = w
        self._items = j
        self._labels = lab
        self._by_item = None
        self._by_worker = None

    @classmethod
    def from_triplets(cls, workers, items, labels, dims: ProblemDims) -> "AnnotationMatrix":
        entries = {}
        for i, j, lab in zip(workers, items, labels):
            key = (int(i), int(j))
            if key in entries and entries[key] != int(lab):
                raise InputError(f"conflicting labels for worker {i}, item {j}")
            entries[key] = int(lab)
        return cls(entries, dims)

    def __len__(self) -> int:
        return self._labels.size

    def __contains__(self, key) -> bool:
        i, j = key
        idx = np.searchsorted(self._workers, i)
        while idx < self._workers.size and self._workers[idx] == i:
            if self._items[idx] == j:
                return True
            idx += 1
        return False

    def triplets(self):
        """Arrays (workers, items, labels) over all observed annotations."""
        return self._workers, self._items, self._labels

    def _index_by(self, keys, within):
        groups = [[] for _ in range(within)]
        for pos, key in enumerate(keys):
            groups[key].append(pos)
        return [np.array(g, dtype=np.int64) for g in groups]

    def by_item(self, j: int):
        """(worker indices, labels) of all annotations on item j."""
        if self._by_item is None:
            self._by_item = self._index_by(self._items, self.dims.n)
        pos = self._by_item[j]
        return self._workers[pos], self._labels[pos]

    def by_worker(self, i: int):
        """(item indices, labels) of all annotations by worker i."""
        if self._by_worker is None:
            self._by_worker = self._index_by(self._workers, self.dims.m)
        pos = self._by_worker[i]
        return self._items[pos], self._labels[pos]


@dataclass(frozen=True)
class ConfusionMatrix:
    """k x k column-stochastic matrix; entry [reported, truth]."""

    table: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.table, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise InputError(f"confusion matrix must be square, got {t.shape}")
        if t.shape[0] < 2:
            raise InputError("confusion matrix needs k >= 2")
        if not np.all(np.isfinite(t)):
            raise InputError("confusion matrix has non-finite entries")
        if np.min(t) < EPS_SMOOTH - 1e-15 or np.max(t) > 1.0 + 1e-12:
            raise InputError("confusion entries outside [eps_smooth, 1]")
        sums = t.sum(axis=0)
        if np.max(np.abs(sums - 1.0)) > SIMPLEX_ATOL:
            raise InputError(f"confusion columns must sum to 1, got {sums}")
        object.__setattr__(self, "table", t)

    @classmethod
    def from_raw(cls, table: np.ndarray) -> "ConfusionMatrix":
        """Build from nonnegative columns, normalizing and flooring."""
        t = np.asarray(table, dtype=np.float64)
        sums = t.sum(axis=0)
        if np.any(sums <= 0):
            raise InputError("confusion column sums to zero")
        t = t / sums
        t = np.stack([floor_simplex(t[:, y]) for y in range(t.shape[1])], axis=1)
        return cls(t)

    @property
    def k(self) -> int:
        return self.table.shape[0]


@dataclass(frozen=True)
class DSParams:
    """Dawid-Skene parameters: class prior plus one confusion matrix per worker."""

    prior: np.ndarray
    confusions: tuple[ConfusionMatrix, ...]

    def __post_init__(self):
        p = np.ascontiguousarray(self.prior, dtype=np.float64)
        _check_simplex(p, "prior", floor=EPS_SMOOTH)
        conf = tuple(self.confusions)
        if not conf:
            raise InputError("need at least one confusion matrix")
        k = p.shape[0]
        for c in conf:
            if c.k != k:
                raise InputError("confusion matrix size mismatch with prior")
        object.__setattr__(self, "prior", p)
        object.__setattr__(self, "confusions", conf)

    @property
    def m(self) -> int:
        return len(self.confusions)

    @property
    def k(self) -> int:
        return self.prior.shape[0]

    def confusion_tensor(self) -> np.ndarray:
        """(m, k, k) array stacking the per-worker confusion matrices."""
        return np.stack([c.table for c in self.confusions], axis=0)


@dataclass(frozen=True)
class SoftAnnotation:
    """Probability vector over the k classes: a probabilistic label guess."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.probs, dtype=np.float64)
        _check_simplex(p, "soft annotation")
        object.__setattr__(self, "probs", p)

    @classmethod
    def point_mass(cls, label: int, k: int) -> "SoftAnnotation":
        p = np.zeros(k)
        p[label] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, k: int) -> "SoftAnnotation":
        return cls(np.full(k, 1.0 / k))

    @property
    def k(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class ScoreTable:
    """Per-worker voting score; entry [candidate truth y, reported label]."""

    table: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.table, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise InputError(f"score table must be square, got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise InputError("score table has non-finite entries")
        object.__setattr__(self, "table", t)

    @property
    def k(self) -> int:
        return self.table.shape[0]


@dataclass(frozen=True)
class EstimateVector:
    """Estimated per-class voting-score means plus the decided label.

    ``chosen`` is the lowest index attaining the maximum of
    ``values + offset`` where the offset is the model's prior adjustment
    (log(prior)/m for Dawid-Skene pipelines, zero for majority voting).
    """

    values: np.ndarray
    chosen: int
    realized_cost: int
    offset: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise InputError("estimate values must be finite")
        if self.realized_cost < 0:
            raise InputError("realized cost must be nonnegative")
        object.__setattr__(self, "values", v)


def make_estimate(values: np.ndarray, cost: int, offset: np.ndarray | None = None) -> EstimateVector:
    """Assemble an EstimateVector, deciding the label via offset argmax."""
    values = np.asarray(values, dtype=np.float64)
    decision = values if offset is None else values + offset
    return EstimateVector(values=values, chosen=argmax_lowest(decision), realized_cost=int(cost), offset=offset)


def ds_prior_offset(params: DSParams) -> np.ndarray:
    """Additive prior term log(tau)/m applied before the argmax decision."""
    return np.log(params.prior) / params.m


def ds_posterior(params: DSParams, obs) -> SoftAnnotation:
    """Posterior belief over the true label given observed hard annotations.

    ``obs`` is a sequence of (worker index, label) pairs with distinct
    workers. Computed in log space: log tau[y] + sum_i log mu_i[l_i, y],
    then exponentiated and normalized. With no observations this is the
    prior itself.
    """
    k = params.k
    logp = np.log(params.prior).copy()
    seen = set()
    for i, lab in obs:
        i, lab = int(i), int(lab)
        if not 0 <= i < params.m:
            raise InputError(f"worker index {i} out of range [0, {params.m})")
        if not 0 <= lab < k:
            raise InputError(f"label {lab} out of range [0, {k})")
        if i in seen:
            raise InputError(f"duplicate observation for worker {i}")
        seen.add(i)
        logp += np.log(params.confusions[i].table[lab, :])
    logp -= logp.max()
    p = np.exp(logp)
    return SoftAnnotation(p / p.sum())


def ds_score_table(params: DSParams, worker: int) -> ScoreTable:
    """Dawid-Skene score for one worker: entry [y, l] = log mu[l, y].

    The prior term log tau[y] is not folded in; it enters decisions as the
    documented offset (see ``ds_prior_offset``).
    """
    if not 0 <= worker < params.m:
        raise InputError(f"worker index {worker} out of range [0, {params.m})")
    return ScoreTable(np.log(params.confusions[worker].table).T)


def mv_score_table(k: int) -> ScoreTable:
    """Majority-voting score: the identity indicator table."""
    if k < 2:
        raise InputError(f"need at least 2 classes, got k={k}")
    return ScoreTable(np.eye(k))


def expected_score(table: ScoreTable, soft: SoftAnnotation, y: int) -> float:
    """Expected score sum_l soft[l] * table[y, l] under a soft annotation."""
    return float(table.table[y, :] @ soft.probs)
