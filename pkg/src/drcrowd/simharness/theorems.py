"""Enumeration-vs-formula regression battery for the estimator theorems:
importance-sampling variance, doubly-robust variance, and clipped-DR
bias/variance, each checked exactly on a catalog of randomized small
instances."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..estimators import (
    ClipThreshold,
    SamplingPlan,
    bias_var_dr_clipped,
    var_dr,
    var_is,
)
from .enumeration import enumerate_oracle

TOLERANCE = 1e-12


@dataclass(frozen=True)
class TheoremCheck:
    name: str
    max_mean_dev: float
    max_var_dev: float
    max_bias_dev: float
    worst_instance: int
    passed: bool


@dataclass(frozen=True)
class TheoremReport:
    instances: int
    seed: int
    tolerance: float
    checks: tuple[TheoremCheck, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def random_instance(rng: np.random.Generator):
    """One randomized small estimator instance (m <= 4, k <= 3)."""
    m = int(rng.integers(1, 5))
    k = int(rng.integers(2, 4))
    if rng.random() < 0.5:
        tables = np.stack([np.eye(k)] * m, axis=0)
    else:
        # log-score style tables from moderately-conditioned confusions
        raw = rng.dirichlet(np.full(k, 2.0), size=(m, k)).transpose(0, 2, 1)
        raw = 0.9 * raw + 0.1 / k
        tables = np.log(raw).transpose(0, 2, 1)
    tables = np.ascontiguousarray(tables)

    dists = np.empty((m, k))
    for i in range(m):
        if rng.random() < 0.4:
            dists[i] = 0.0
            dists[i, rng.integers(k)] = 1.0
        else:
            dists[i] = rng.dirichlet(np.full(k, 1.5))
    softs = np.empty((m, k))
    for i in range(m):
        if rng.random() < 0.3:
            softs[i] = 0.0
            softs[i, rng.integers(k)] = 1.0
        else:
            softs[i] = rng.dirichlet(np.full(k, 1.5))

    plan = SamplingPlan(rng.uniform(0.1, 1.0, size=m))
    eta = float(rng.uniform(1.0, 1.0 / plan.probs.min() + 0.5))
    return tables, dists, softs, plan, ClipThreshold(eta)


def score_target(tables: np.ndarray, dists: np.ndarray) -> np.ndarray:
    """The estimation target: mean over workers of E[S_i(y, l_i)]."""
    return np.einsum("il,iyl->y", dists, tables) / tables.shape[0]


def theorem_suite(instances: int = 50, seed: int = 20250809, tolerance: float = TOLERANCE) -> TheoremReport:
    """Run the full battery; deviations are absolute and exact-arithmetic
    scale (tolerance 1e-12 by default)."""
    rng = np.random.default_rng(seed)
    devs = {name: [0.0, 0.0, 0.0, -1] for name in ("importance_sampling", "doubly_robust", "clipped_dr")}

    def update(name, idx, mean_dev, var_dev, bias_dev=0.0):
        entry = devs[name]
        worst = max(mean_dev, var_dev, bias_dev)
        if worst > max(entry[0], entry[1], entry[2]):
            entry[3] = idx
        entry[0] = max(entry[0], mean_dev)
        entry[1] = max(entry[1], var_dev)
        entry[2] = max(entry[2], bias_dev)

    for idx in range(instances):
        tables, dists, softs, plan, clip = random_instance(rng)
        target = score_target(tables, dists)

        mean, var = enumerate_oracle(tables, dists, softs, plan, "is")
        update(
            "importance_sampling", idx,
            float(np.abs(mean - target).max()),
            float(np.abs(var - var_is(tables, dists, plan)).max()),
        )

        mean, var = enumerate_oracle(tables, dists, softs, plan, "dr")
        update(
            "doubly_robust", idx,
            float(np.abs(mean - target).max()),
            float(np.abs(var - var_dr(tables, dists, softs, plan)).max()),
        )

        mean, var = enumerate_oracle(tables, dists, softs, plan, "dr_clipped", clip)
        bias_fml, var_fml = bias_var_dr_clipped(tables, dists, softs, plan, clip)
        update(
            "clipped_dr", idx,
            0.0,
            float(np.abs(var - var_fml).max()),
            float(np.abs(np.abs(mean - target) - bias_fml).max()),
        )

    checks = tuple(
        TheoremCheck(
            name=name,
            max_mean_dev=entry[0],
            max_var_dev=entry[1],
            max_bias_dev=entry[2],
            worst_instance=entry[3],
            passed=max(entry[0], entry[1], entry[2]) <= tolerance,
        )
        for name, entry in devs.items()
    )
    return TheoremReport(instances=instances, seed=seed, tolerance=tolerance, checks=checks)
