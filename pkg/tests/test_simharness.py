import io

import numpy as np
import pytest

from drcrowd import InputError, ParseError
from drcrowd.core import EPS_SMOOTH
from drcrowd.estimators import ClipThreshold, SamplingPlan
from drcrowd.simharness import (
    ExperimentConfig,
    SyntheticDataSpec,
    WorkerPoolSpec,
    enumerate_oracle,
    gen_annotations,
    gen_dataset,
    gen_workers,
    parse_libsvm,
    run_experiment,
    write_libsvm,
)

MV1 = np.eye(2)[None, :, :]


class TestParseLibsvm:
    def test_basic_line(self):
        data = parse_libsvm(["2 1:0.5 3:-1", "1 2:1.0"])
        assert data.d == 3 and data.n == 2 and data.k == 2
        np.testing.assert_allclose(data.features.values[0], [0.5, 0.0, -1.0])
        np.testing.assert_allclose(data.features.values[1], [0.0, 1.0, 0.0])
        # sorted remap: original 1.0 -> class 0, original 2.0 -> class 1
        assert data.classes == (1.0, 2.0)
        assert data.labels.tolist() == [1, 0]

    def test_plus_minus_one_remap(self):
        data = parse_libsvm(["-1 1:2.0", "+1 1:-2.0", "-1 2:0.5"])
        assert data.classes == (-1.0, 1.0)
        assert data.labels.tolist() == [0, 1, 0]

    def test_empty_stream_rejected(self):
        with pytest.raises(ParseError):
            parse_libsvm([])
        with pytest.raises(ParseError):
            parse_libsvm(["", "   "])

    def test_malformed_token_reports_line(self):
        with pytest.raises(ParseError) as err:
            parse_libsvm(["1 1:0.5", "2 nonsense"])
        assert err.value.line == 2

    def test_non_increasing_index_reports_line(self):
        with pytest.raises(ParseError) as err:
            parse_libsvm(["1 1:0.5", "2 3:1 2:4"])
        assert err.value.line == 2

    def test_bad_label_reports_line(self):
        with pytest.raises(ParseError) as err:
            parse_libsvm(["abc 1:0.5"])
        assert err.value.line == 1

    def test_round_trip_identical(self):
        rng = np.random.default_rng(0)
        lines = []
        for _ in range(10):
            label = int(rng.integers(1, 4))
            pairs = sorted(rng.choice(np.arange(1, 7), size=3, replace=False))
            lines.append(
                f"{label} " + " ".join(f"{p}:{rng.normal():.6f}" for p in pairs)
            )
        first = parse_libsvm(lines)
        buf = io.StringIO()
        write_libsvm(first.features, first.labels, buf, classes=first.classes)
        second = parse_libsvm(buf.getvalue().splitlines())
        np.testing.assert_array_equal(first.features.values, second.features.values)
        np.testing.assert_array_equal(first.labels, second.labels)
        assert first.classes == second.classes


class TestGenWorkers:
    def test_perfect_accuracy_is_floored_identity(self):
        spec = WorkerPoolSpec(m=3, k=2, accuracy_low=1.0, accuracy_high=1.0, seed=0)
        for conf in gen_workers(spec):
            assert conf.table[0, 0] > 1 - 1e-5
            assert conf.table.min() >= EPS_SMOOTH
            np.testing.assert_allclose(conf.table.sum(axis=0), 1.0, atol=1e-12)

    def test_chance_accuracy_rejected(self):
        with pytest.raises(InputError):
            WorkerPoolSpec(m=2, k=3, accuracy_low=1 / 3, accuracy_high=0.9, seed=0)

    def test_symmetric_noise_structure(self):
        spec = WorkerPoolSpec(m=1, k=2, accuracy_low=0.8, accuracy_high=0.8, seed=5)
        table = gen_workers(spec)[0].table
        np.testing.assert_allclose(table[:, 0], [0.8, 0.2], atol=1e-9)
        np.testing.assert_allclose(table[:, 1], [0.2, 0.8], atol=1e-9)

    def test_deterministic(self):
        spec = WorkerPoolSpec(m=4, k=3, accuracy_low=0.5, accuracy_high=0.9, seed=11)
        a = gen_workers(spec)
        b = gen_workers(spec)
        for ca, cb in zip(a, b):
            np.testing.assert_array_equal(ca.table, cb.table)


class TestGenAnnotations:
    def test_full_observation_identity_workers(self):
        spec = WorkerPoolSpec(m=3, k=3, accuracy_low=1.0, accuracy_high=1.0, seed=1)
        workers = gen_workers(spec)
        y = np.random.default_rng(2).integers(0, 3, size=50)
        ann = gen_annotations(y, workers, 1.0, np.random.default_rng(3))
        assert len(ann) == 150
        w, j, lab = ann.triplets()
        np.testing.assert_array_equal(lab, y[j])

    def test_observation_rate_concentrates(self):
        spec = WorkerPoolSpec(m=10, k=2, accuracy_low=0.6, accuracy_high=0.9, seed=4)
        workers = gen_workers(spec)
        y = np.random.default_rng(5).integers(0, 2, size=1000)
        ann = gen_annotations(y, workers, 0.3, np.random.default_rng(6))
        assert abs(len(ann) - 3000) < 0.03 * 3000

    def test_same_seed_identical(self):
        spec = WorkerPoolSpec(m=3, k=2, accuracy_low=0.7, accuracy_high=0.9, seed=7)
        workers = gen_workers(spec)
        y = np.random.default_rng(8).integers(0, 2, size=40)
        a = gen_annotations(y, workers, 0.5, np.random.default_rng(9))
        b = gen_annotations(y, workers, 0.5, np.random.default_rng(9))
        assert dict(zip(zip(*a.triplets()[:2]), a.triplets()[2])) == dict(
            zip(zip(*b.triplets()[:2]), b.triplets()[2])
        )

    def test_label_frequencies_match_confusion(self):
        spec = WorkerPoolSpec(m=1, k=3, accuracy_low=0.7, accuracy_high=0.7, seed=10)
        workers = gen_workers(spec)
        y = np.zeros(30000, dtype=np.int64)
        ann = gen_annotations(y, workers, 1.0, np.random.default_rng(11))
        _, _, labels = ann.triplets()
        freq = np.bincount(labels, minlength=3) / labels.size
        np.testing.assert_allclose(freq, workers[0].table[:, 0], atol=0.01)


class TestEnumerateOracle:
    def test_tractability_guard(self):
        tables = np.stack([np.eye(2)] * 7)
        dists = np.full((7, 2), 0.5)
        softs = np.full((7, 2), 0.5)
        plan = SamplingPlan.uniform(7, 0.5)
        with pytest.raises(InputError):
            enumerate_oracle(tables, dists, softs, plan, "is")

    def test_unknown_estimator_rejected(self):
        with pytest.raises(InputError):
            enumerate_oracle(MV1, np.array([[1.0, 0.0]]), None, SamplingPlan.uniform(1, 0.5), "magic")

    def test_is_worked_example(self):
        dists = np.array([[1.0, 0.0]])
        plan = SamplingPlan(np.array([0.5]))
        mean, var = enumerate_oracle(MV1, dists, None, plan, "is")
        np.testing.assert_allclose(mean, [1.0, 0.0], atol=1e-15)
        assert var[0] == pytest.approx(1.0, abs=1e-15)

    def test_dr_perfect_imitation_zero_variance(self):
        dists = np.array([[1.0, 0.0], [0.0, 1.0]])
        softs = dists.copy()
        tables = np.stack([np.eye(2)] * 2)
        plan = SamplingPlan(np.array([0.5, 0.8]))
        _, var = enumerate_oracle(tables, dists, softs, plan, "dr")
        np.testing.assert_allclose(var, 0.0, atol=1e-15)

    def test_clipped_worked_example(self):
        dists = np.array([[1.0, 0.0]])
        softs = np.array([[0.5, 0.5]])
        plan = SamplingPlan(np.array([0.5]))
        mean, var = enumerate_oracle(MV1, dists, softs, plan, "dr_clipped", ClipThreshold(1.0))
        np.testing.assert_allclose(mean, [0.75, 0.25], atol=1e-15)
        assert var[0] == pytest.approx(0.0625, abs=1e-15)


class TestGenDataset:
    def test_shapes_and_determinism(self):
        spec = SyntheticDataSpec(n=100, k=4, d=6, class_sep=2.0)
        a_x, a_y = gen_dataset(spec, np.random.default_rng(1))
        b_x, b_y = gen_dataset(spec, np.random.default_rng(1))
        assert a_x.values.shape == (100, 6)
        np.testing.assert_array_equal(a_x.values, b_x.values)
        np.testing.assert_array_equal(a_y, b_y)
        assert set(np.unique(a_y)) <= set(range(4))


def tiny_config(**kwargs):
    defaults = dict(
        methods=("IW", "IS", "DR-DS"),
        sweep_values=(0.3, 1.0),
        replicates=2,
        m=6,
        synth=SyntheticDataSpec(n=120, k=3, d=5),
        master_seed=5,
        accuracy_low=0.7,
        accuracy_high=0.95,
        imitation=None,
    )
    defaults.update(kwargs)
    if defaults["imitation"] is None:
        from drcrowd.imitation import ImitatorTrainConfig

        defaults["imitation"] = ImitatorTrainConfig(epochs=60)
    return ExperimentConfig(**defaults)


class TestRunExperiment:
    def test_iw_ignores_sweep_and_costs_m(self):
        res = run_experiment(tiny_config(methods=("IW",)))
        for rep in (0, 1):
            rows = [r for r in res.rows if r.replicate == rep]
            assert len({r.accuracy for r in rows}) == 1
            assert all(r.cost_per_item == 6.0 for r in rows)

    def test_is_at_full_sampling_matches_iw(self):
        res = run_experiment(tiny_config(methods=("IW", "IS", "DR-DS")))
        for rep in (0, 1):
            at_one = {r.method: r for r in res.rows if r.replicate == rep and r.param_value == 1.0}
            assert at_one["IS"].accuracy == at_one["IW"].accuracy
            assert at_one["DR-DS"].accuracy == at_one["IW"].accuracy

    def test_bitwise_deterministic(self):
        cfg = tiny_config(methods=("IW", "IS", "DM", "DR-DS", "DR-MV", "MV", "DRC-AWS-AIS"))
        a = run_experiment(cfg)
        b = run_experiment(cfg)
        assert a.to_csv() == b.to_csv()

    def test_is_cost_concentration(self):
        cfg = tiny_config(methods=("IS",), sweep_values=(0.4,), replicates=4)
        res = run_experiment(cfg)
        n_test = 60
        mean_cost = np.mean([r.cost_per_item for r in res.rows])
        m, pi = 6, 0.4
        tol = 3 * np.sqrt(m * pi * (1 - pi) / (n_test * 4))
        assert abs(mean_cost - m * pi) < tol

    def test_unknown_method_rejected(self):
        from drcrowd import ConfigError

        with pytest.raises(ConfigError):
            tiny_config(methods=("IW", "NOPE"))

    def test_csv_schema(self):
        res = run_experiment(tiny_config(methods=("DM",), sweep_values=(0.5,), replicates=1))
        lines = res.to_csv().strip().splitlines()
        assert lines[0] == "method,param_name,param_value,replicate,cost_per_item,accuracy"
        assert lines[1].startswith("DM,pi,0.5,0,0.0,")

    def test_adaptive_cost_monotone_in_rho(self):
        cfg = tiny_config(
            methods=("DRC-AIS",),
            sweep_param="rho",
            sweep_values=(0.0, 0.3, 0.6, 0.9, 1.0),
            replicates=2,
        )
        res = run_experiment(cfg)
        for rep in (0, 1):
            costs = [r.cost_per_item for r in res.rows if r.replicate == rep]
            assert all(b >= a - 1e-12 for a, b in zip(costs, costs[1:]))

    def test_aws_cost_monotone_in_lambda(self):
        cfg = tiny_config(
            methods=("DRC-AWS",),
            sweep_param="lambda",
            sweep_values=(0.5, 1.0, 2.0, 4.0, 8.0),
            replicates=2,
        )
        res = run_experiment(cfg)
        for rep in (0, 1):
            costs = [r.cost_per_item for r in res.rows if r.replicate == rep]
            assert all(b >= a - 1e-12 for a, b in zip(costs, costs[1:]))
