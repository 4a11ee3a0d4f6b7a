import itertools

import numpy as np

from drcrowd.estimators import SampleRealization
from drcrowd.simharness import theorem_suite
from drcrowd.simharness.theorems import random_instance, score_target


def test_fresh_battery_passes():
    report = theorem_suite(instances=50)
    assert report.passed
    for check in report.checks:
        assert max(check.max_mean_dev, check.max_var_dev, check.max_bias_dev) <= 1e-12
        assert 0 <= check.worst_instance < 50


def test_report_carries_worst_instance_and_sizes():
    report = theorem_suite(instances=12, seed=3)
    assert report.instances == 12
    names = {c.name for c in report.checks}
    assert names == {"importance_sampling", "doubly_robust", "clipped_dr"}


def test_mutated_dr_weight_detected():
    # fault injection: replacing 1/pi with 1 must break the mean identity
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(10):
        tables, dists, softs, plan, _ = random_instance(rng)
        if np.all(plan.probs > 0.95):
            continue
        m, k = tables.shape[0], tables.shape[1]
        target = score_target(tables, dists)
        mean = np.zeros(k)
        for pattern in itertools.product((0, 1), repeat=m):
            inc = [i for i in range(m) if pattern[i]]
            p_inc = np.prod([plan.probs[i] if pattern[i] else 1 - plan.probs[i] for i in range(m)])
            for joint in itertools.product(range(k), repeat=len(inc)):
                p = p_inc * np.prod([dists[i][lab] for i, lab in zip(inc, joint)])
                real = SampleRealization(included=frozenset(inc), labels=dict(zip(inc, joint)))
                mask, labels = real.as_arrays(m)
                baseline = np.einsum("il,iyl->iy", softs, tables)
                gathered = tables[np.arange(m), :, labels]
                # broken estimator: unit weight instead of 1/pi
                contrib = np.where(mask[:, None].astype(bool), gathered, baseline)
                mean += p * contrib.sum(axis=0) / m
        worst = max(worst, float(np.abs(mean - target).max()))
    assert worst > 1e-6
