"""Simulation harness: synthetic pools, dataset ingestion, enumeration
oracles, the theorem regression battery, and the sweep experiment runner."""

from .enumeration import enumerate_oracle
from .experiment import (
    CSV_HEADER,
    METHOD_NAMES,
    SWEEP_PARAMS,
    ExperimentConfig,
    PretrainedBundle,
    SweepResult,
    SweepRow,
    load_dataset,
    prepare_replicate,
    run_experiment,
)
from .libsvm import Dataset, parse_libsvm, write_libsvm
from .synthetic import (
    SyntheticDataSpec,
    WorkerPoolSpec,
    draw_worker_labels,
    gen_annotations,
    gen_dataset,
    gen_features,
    gen_workers,
)
from .theorems import TheoremCheck, TheoremReport, theorem_suite

__all__ = [
    "CSV_HEADER",
    "Dataset",
    "ExperimentConfig",
    "METHOD_NAMES",
    "PretrainedBundle",
    "SWEEP_PARAMS",
    "SweepResult",
    "SweepRow",
    "SyntheticDataSpec",
    "TheoremCheck",
    "TheoremReport",
    "WorkerPoolSpec",
    "draw_worker_labels",
    "enumerate_oracle",
    "gen_annotations",
    "gen_dataset",
    "gen_features",
    "gen_workers",
    "load_dataset",
    "parse_libsvm",
    "prepare_replicate",
    "run_experiment",
    "theorem_suite",
    "write_libsvm",
]
