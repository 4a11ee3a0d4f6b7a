"""Exact enumeration oracle for the sampling estimators.

Walks every inclusion pattern and every joint annotation outcome of the
included workers, weights each outcome by its exact probability, and runs
the estimator under test on it. Exact first and second central moments come
out; the variance/bias theorem calculators are checked against them.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..errors import InputError
from ..estimators import (
    ClipThreshold,
    SamplingPlan,
    SampleRealization,
    estimate_dr,
    estimate_dr_clipped,
    estimate_is,
    _dists_matrix,
    _softs_matrix,
    _tables_tensor,
)

ESTIMATORS = ("is", "dr", "dr_clipped")

MAX_OUTCOMES = 10**6


def enumerate_oracle(tables, dists, softs, plan: SamplingPlan, estimator: str, clip: ClipThreshold | None = None):
    """Exact (mean, variance) vectors over y of a sampling estimator."""
    if estimator not in ESTIMATORS:
        raise InputError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")
    if estimator == "dr_clipped" and clip is None:
        raise InputError("dr_clipped enumeration needs a clip threshold")
    t = _tables_tensor(tables)
    m, k = t.shape[0], t.shape[1]
    if m > 6 or (k**m) * (2**m) > MAX_OUTCOMES:
        raise InputError(f"enumeration intractable for m={m}, k={k}")
    d = _dists_matrix(dists, m, k)
    s = None
    if estimator != "is":
        s = _softs_matrix(softs, m, k)
    if plan.m != m:
        raise InputError("plan size does not match score tables")

    outcomes = []
    probs = []
    for pattern in itertools.product((0, 1), repeat=m):
        included = [i for i in range(m) if pattern[i]]
        p_inc = 1.0
        for i in range(m):
            p_inc *= plan.probs[i] if pattern[i] else 1.0 - plan.probs[i]
        if p_inc == 0.0:
            continue
        for joint in itertools.product(range(k), repeat=len(included)):
            p_lab = p_inc
            for i, lab in zip(included, joint):
                p_lab *= d[i, lab]
            real = SampleRealization(
                included=frozenset(included), labels=dict(zip(included, joint))
            )
            if estimator == "is":
                est = estimate_is(t, real, plan)
            elif estimator == "dr":
                est = estimate_dr(t, s, real, plan)
            else:
                est = estimate_dr_clipped(t, s, real, plan, clip)
            outcomes.append(est.values)
            probs.append(p_lab)

    values = np.asarray(outcomes)
    weights = np.asarray(probs)
    mean = weights @ values
    var = weights @ (values - mean) ** 2
    return mean, var
