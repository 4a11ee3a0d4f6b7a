"""End-to-end sweep runner: synthesize (or load) a dataset, fit the
blackbox crowdsourcing model and the worker imitators on training
annotations, then score every estimation method on the test items across a
sweep grid, reporting per-replicate accuracy and mean annotation cost."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .. import _kernels
from ..adaptive import AdaptiveConfig, run_adaptive
from ..core import (
    AnnotationMatrix,
    ConfusionMatrix,
    DSParams,
    FeatureMatrix,
    ProblemDims,
    make_estimate,
)
from ..dstrain import EmConfig, em_fit
from ..errors import ConfigError
from ..estimators import (
    SamplingPlan,
    SampleRealization,
    estimate_dm,
    estimate_dr,
    estimate_is,
    estimate_iw,
)
from ..imitation import ImitatorModel, ImitatorTrainConfig, agreement_rate, fit_imitator, imitate_batch
from .libsvm import parse_libsvm
from .synthetic import (
    SyntheticDataSpec,
    WorkerPoolSpec,
    draw_worker_labels,
    gen_annotations,
    gen_dataset,
    gen_workers,
)

METHOD_NAMES = ("IW", "IS", "DM", "DR-DS", "DR-MV", "MV", "DRC-AIS", "DRC-AWS", "DRC-AWS-AIS")
SWEEP_PARAMS = ("pi", "rho", "lambda")

_TAG_DATA = 10
_TAG_SPLIT = 11
_TAG_POOL = 12
_TAG_TRAIN = 13
_TAG_IMIT = 14
_TAG_TESTLAB = 15
_TAG_INCL = 16

CSV_HEADER = "method,param_name,param_value,replicate,cost_per_item,accuracy"


@dataclass(frozen=True)
class ExperimentConfig:
    methods: tuple = ("IW", "IS", "DM", "DR-DS")
    sweep_param: str = "pi"
    sweep_values: tuple = (0.05, 0.1, 0.2, 0.5)
    replicates: int = 20
    master_seed: int = 0
    data_path: str | None = None
    synth: SyntheticDataSpec = field(default_factory=SyntheticDataSpec)
    split: float = 0.5
    m: int = 50
    accuracy_low: float = 0.85
    accuracy_high: float = 0.95
    observe_prob: float = 0.3
    em: EmConfig = field(default_factory=EmConfig)
    imitation: ImitatorTrainConfig = field(default_factory=ImitatorTrainConfig)
    imitator_hard: bool = False
    pi: float = 0.2
    rho: float = 0.9
    lam: float = 5.0
    base_pi: float = 0.1
    eta_mode: str = "auto"
    eta: float = 1.0
    margin_base: str = "likelihood"

    def __post_init__(self):
        methods = tuple(self.methods)
        if not methods:
            raise ConfigError("no methods selected")
        for name in methods:
            if name not in METHOD_NAMES:
                raise ConfigError(f"unknown method {name!r}; valid: {', '.join(METHOD_NAMES)}")
        if len(set(methods)) != len(methods):
            raise ConfigError("duplicate method names")
        object.__setattr__(self, "methods", methods)
        if self.sweep_param not in SWEEP_PARAMS:
            raise ConfigError(f"unknown sweep parameter {self.sweep_param!r}; valid: {SWEEP_PARAMS}")
        values = tuple(float(v) for v in self.sweep_values)
        if not values:
            raise ConfigError("empty sweep grid")
        for v in values:
            if self.sweep_param == "pi" and not 0.0 < v <= 1.0:
                raise ConfigError(f"swept pi must be in (0, 1], got {v}")
            if self.sweep_param == "rho" and not 0.0 <= v <= 1.0:
                raise ConfigError(f"swept rho must be in [0, 1], got {v}")
            if self.sweep_param == "lambda" and v <= 0.0:
                raise ConfigError(f"swept lambda must be positive, got {v}")
        object.__setattr__(self, "sweep_values", values)
        if not 0.0 < self.split < 1.0:
            raise ConfigError(f"split fraction must be in (0, 1), got {self.split}")
        if self.replicates < 1:
            raise ConfigError(f"replicates must be >= 1, got {self.replicates}")
        if not 0.0 < self.pi <= 1.0 or not 0.0 < self.base_pi <= 1.0:
            raise ConfigError("pi and base_pi must be in (0, 1]")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must be in [0, 1], got {self.rho}")
        if self.lam <= 0.0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if not 0.0 < self.observe_prob <= 1.0:
            raise ConfigError(f"observe_prob must be in (0, 1], got {self.observe_prob}")


@dataclass(frozen=True)
class SweepRow:
    method: str
    param_name: str
    param_value: float
    replicate: int
    cost_per_item: float
    accuracy: float

    def as_csv(self) -> str:
        return ",".join(
            [
                self.method,
                self.param_name,
                repr(self.param_value),
                str(self.replicate),
                repr(self.cost_per_item),
                repr(self.accuracy),
            ]
        )


@dataclass(frozen=True)
class SweepResult:
    rows: tuple

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        lines.extend(row.as_csv() for row in self.rows)
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        obj = [
            {
                "method": r.method,
                "param_name": r.param_name,
                "param_value": r.param_value,
                "replicate": r.replicate,
                "cost_per_item": r.cost_per_item,
                "accuracy": r.accuracy,
            }
            for r in self.rows
        ]
        return json.dumps({"rows": obj}, indent=2) + "\n"

    def select(self, method: str, param_value: float | None = None):
        out = [r for r in self.rows if r.method == method]
        if param_value is not None:
            out = [r for r in out if r.param_value == param_value]
        return out


@dataclass(frozen=True)
class PretrainedBundle:
    """Externally fitted artifacts: evaluation skips training when given."""

    params: DSParams
    imitators: tuple
    true_workers: tuple


@dataclass
class Replicate:
    """Everything one replicate's evaluation loop needs."""

    test_y: np.ndarray
    ds_tables: np.ndarray
    mv_tables: np.ndarray
    offset: np.ndarray
    params: DSParams
    softs: np.ndarray  # (m, n_test, k)
    worker_labels: np.ndarray  # (m, n_test)
    mean_agreement: float


def _seed(master: int, tag: int, *rest) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), int(tag), *map(int, rest)])


def _rng(master: int, tag: int, *rest) -> np.random.Generator:
    return np.random.default_rng(_seed(master, tag, *rest))


def _seed_int(master: int, tag: int, *rest) -> int:
    return int(_seed(master, tag, *rest).generate_state(1, np.uint64)[0])


def load_dataset(cfg: ExperimentConfig):
    """(features, labels, k) from the libsvm path or the synthetic spec."""
    if cfg.data_path is not None:
        with open(cfg.data_path, "r", encoding="utf-8") as fh:
            ds = parse_libsvm(fh)
        return ds.features, ds.labels, ds.k
    features, labels = gen_dataset(cfg.synth, _rng(cfg.master_seed, _TAG_DATA))
    return features, labels, cfg.synth.k


def _ds_tables(params: DSParams) -> np.ndarray:
    mu = params.confusion_tensor()
    return np.ascontiguousarray(np.log(mu).transpose(0, 2, 1))


def prepare_replicate(
    cfg: ExperimentConfig,
    features: FeatureMatrix,
    labels: np.ndarray,
    k: int,
    replicate: int,
    pretrained: PretrainedBundle | None = None,
) -> Replicate:
    """Split, generate the worker pool and training annotations, fit the
    blackbox model and imitators, and pre-draw what the true workers would
    answer on every test item."""
    master = cfg.master_seed
    n = features.n

    if pretrained is None:
        perm = _rng(master, _TAG_SPLIT, replicate).permutation(n)
        n_train = int(round(cfg.split * n))
        n_train = min(max(n_train, 1), n - 1)
        train_idx, test_idx = perm[:n_train], perm[n_train:]

        pool = WorkerPoolSpec(
            m=cfg.m,
            k=k,
            accuracy_low=cfg.accuracy_low,
            accuracy_high=cfg.accuracy_high,
            seed=_seed_int(master, _TAG_POOL, replicate),
        )
        true_workers = gen_workers(pool)
        train_ann = gen_annotations(
            labels[train_idx], true_workers, cfg.observe_prob, _rng(master, _TAG_TRAIN, replicate)
        )
        dims = ProblemDims(n=train_idx.size, m=cfg.m, k=k, d=features.d)
        params = em_fit(train_ann, dims, cfg.em)
        train_x = features.values[train_idx]
        imitators = []
        agreements = []
        for i in range(cfg.m):
            icfg = ImitatorTrainConfig(
                epochs=cfg.imitation.epochs,
                learning_rate=cfg.imitation.learning_rate,
                l2=cfg.imitation.l2,
                seed=_seed_int(master, _TAG_IMIT, replicate, i),
            )
            model = fit_imitator(FeatureMatrix(train_x), train_ann, i, icfg)
            imitators.append(model)
            items, _ = train_ann.by_worker(i)
            if items.size:
                agreements.append(agreement_rate(model, FeatureMatrix(train_x), train_ann, i))
        mean_agreement = float(np.mean(agreements)) if agreements else 0.0
    else:
        test_idx = np.arange(n)
        true_workers = list(pretrained.true_workers)
        params = pretrained.params
        imitators = list(pretrained.imitators)
        mean_agreement = float("nan")

    test_x = features.values[test_idx]
    test_y = labels[test_idx]
    softs = np.stack([imitate_batch(model, test_x) for model in imitators], axis=0)
    if cfg.imitator_hard:
        hard = softs.argmax(axis=2)
        softs = np.zeros_like(softs)
        m_idx, j_idx = np.meshgrid(np.arange(softs.shape[0]), np.arange(softs.shape[1]), indexing="ij")
        softs[m_idx, j_idx, hard] = 1.0
    softs = np.ascontiguousarray(softs)

    worker_labels = draw_worker_labels(test_y, true_workers, _rng(master, _TAG_TESTLAB, replicate))

    return Replicate(
        test_y=test_y,
        ds_tables=_ds_tables(params),
        mv_tables=np.ascontiguousarray(np.stack([np.eye(k)] * len(true_workers), axis=0)),
        offset=np.log(params.prior) / params.m,
        params=params,
        softs=softs,
        worker_labels=worker_labels,
        mean_agreement=mean_agreement,
    )


class _CountingOracle:
    """Answers worker queries for one item from the pre-drawn label matrix."""

    def __init__(self, column: np.ndarray):
        self.column = column
        self.queries = 0

    def __call__(self, worker: int) -> int:
        self.queries += 1
        return int(self.column[worker])


def _evaluate_point(cfg: ExperimentConfig, rep: Replicate, replicate: int, value: float):
    """Accuracy and mean cost per method at one sweep point."""
    master = cfg.master_seed
    m = rep.worker_labels.shape[0]
    n_test = rep.test_y.size

    pi_val = value if cfg.sweep_param == "pi" else cfg.pi
    rho_val = value if cfg.sweep_param == "rho" else cfg.rho
    lam_val = value if cfg.sweep_param == "lambda" else cfg.lam
    base_pi = value if cfg.sweep_param == "pi" else cfg.base_pi

    plan = SamplingPlan.uniform(m, pi_val)
    adaptive_cfgs = {}
    for name, ais, aws in (("DRC-AIS", True, False), ("DRC-AWS", False, True), ("DRC-AWS-AIS", True, True)):
        adaptive_cfgs[name] = AdaptiveConfig(
            rho=rho_val,
            lam=lam_val,
            base_pi=base_pi,
            eta_mode=cfg.eta_mode,
            eta=cfg.eta,
            use_ais=ais,
            use_aws=aws,
            margin_base=cfg.margin_base,
        )

    correct = {name: 0 for name in cfg.methods}
    cost = {name: 0 for name in cfg.methods}
    needs_realization = any(name in ("IS", "DR-DS", "DR-MV", "MV") for name in cfg.methods)

    for jt in range(n_test):
        # entropy deliberately excludes the sweep index: common random
        # numbers across sweep points make cost monotone in rho/lambda and
        # comparisons paired along the grid
        entropy = _seed(master, _TAG_INCL, replicate, jt)
        labels_col = rep.worker_labels[:, jt]
        softs_j = np.ascontiguousarray(rep.softs[:, jt, :])
        real = None
        if needs_realization:
            u = np.random.default_rng(entropy).random(m)
            included = np.flatnonzero(u < plan.probs)
            real = SampleRealization(
                included=frozenset(int(i) for i in included),
                labels={int(i): int(labels_col[i]) for i in included},
            )
        for name in cfg.methods:
            if name == "IW":
                est = estimate_iw(rep.ds_tables, labels_col, offset=rep.offset)
            elif name == "IS":
                est = estimate_is(rep.ds_tables, real, plan, offset=rep.offset)
            elif name == "DM":
                est = estimate_dm(rep.ds_tables, softs_j, offset=rep.offset)
            elif name == "DR-DS":
                est = estimate_dr(rep.ds_tables, softs_j, real, plan, offset=rep.offset)
            elif name == "DR-MV":
                est = estimate_dr(rep.mv_tables, softs_j, real, plan)
            elif name == "MV":
                mask, labs = real.as_arrays(m)
                values = _kernels.impl.subset_counts(mask, labs, rep.ds_tables.shape[1], m)
                est = make_estimate(values, cost=real.cost)
            else:
                oracle = _CountingOracle(labels_col)
                decision = run_adaptive(
                    rep.params,
                    rep.ds_tables,
                    softs_j,
                    oracle,
                    adaptive_cfgs[name],
                    np.random.default_rng(entropy),
                    offset=rep.offset,
                )
                est = decision.estimate
            correct[name] += int(est.chosen == rep.test_y[jt])
            cost[name] += est.realized_cost

    return {
        name: (cost[name] / n_test, correct[name] / n_test) for name in cfg.methods
    }


def run_experiment(cfg: ExperimentConfig, pretrained: PretrainedBundle | None = None) -> SweepResult:
    """Full sweep: deterministic given the config (and its master seed)."""
    features, labels, k = load_dataset(cfg)
    rows = []
    for r in range(cfg.replicates):
        rep = prepare_replicate(cfg, features, labels, k, r, pretrained)
        for value in cfg.sweep_values:
            stats = _evaluate_point(cfg, rep, r, value)
            for name in cfg.methods:
                cost_per_item, accuracy = stats[name]
                rows.append(
                    SweepRow(
                        method=name,
                        param_name=cfg.sweep_param,
                        param_value=value,
                        replicate=r,
                        cost_per_item=cost_per_item,
                        accuracy=accuracy,
                    )
                )
    return SweepResult(tuple(rows))
