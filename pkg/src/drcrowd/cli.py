"""Command line: ``gen`` (synthetic pools and annotations), ``train``
(blackbox model + imitators), ``eval`` (sweep experiments), ``verify``
(theorem regression battery).

Configuration is a flat key=value text file plus command-line overrides
(flags win). Every run echoes its fully resolved configuration; feeding the
echoed block back through --config reproduces the run byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import ProblemDims
from .dstrain import EmConfig, em_fit
from .errors import ConfigError, InputError, ParseError
from .imitation import (
    ImitatorTrainConfig,
    agreement_rate,
    fit_imitator,
    load_imitator,
    save_imitator,
)
from .io import (
    read_annotations,
    read_workers,
    write_annotations,
    write_dsparams,
    write_labels,
    write_workers,
)
from .simharness import (
    ExperimentConfig,
    PretrainedBundle,
    SyntheticDataSpec,
    WorkerPoolSpec,
    gen_annotations,
    gen_features,
    gen_workers,
    parse_libsvm,
    run_experiment,
    theorem_suite,
    write_libsvm,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

_TAG_POOL = 21
_TAG_LABELS = 22
_TAG_ANN = 23
_TAG_FEATURES = 24
_TAG_IMIT = 25

CONFIG_BEGIN = "# resolved-config v1"
CONFIG_END = "# end resolved-config"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


@dataclass(frozen=True)
class Opt:
    name: str
    typ: str  # int | float | str | bool | floats | strs
    default: object
    help: str


def _parse_typed(opt: Opt, text: str):
    text = text.strip()
    if text == "":
        return None
    try:
        if opt.typ == "int":
            return int(text)
        if opt.typ == "float":
            return float(text)
        if opt.typ == "str":
            return text
        if opt.typ == "bool":
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if opt.typ == "floats":
            return tuple(float(p) for p in text.split(","))
        if opt.typ == "strs":
            return tuple(p.strip() for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"bad value {text!r} for key {opt.name}") from None
    raise ConfigError(f"unknown option type {opt.typ}")


def _serialize(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(_serialize(v) for v in value)
    return str(value)


def _add_options(parser: argparse.ArgumentParser, opts: list[Opt]):
    parser.add_argument("--config", help="flat key=value config file; flags override it")
    for opt in opts:
        flag = "--" + opt.name.replace("_", "-")
        if opt.typ == "bool":
            parser.add_argument(flag, dest=opt.name, action="store_const", const=True, default=None, help=opt.help)
        else:
            parser.add_argument(flag, dest=opt.name, type=str, default=None, help=opt.help)


def _load_config_file(path: str, opts: dict[str, Opt], subcommand: str) -> dict:
    values = {}
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key = key.strip()
            if key == "subcommand":
                if value.strip() != subcommand:
                    raise ConfigError(
                        f"{path}:{lineno}: config is for subcommand {value.strip()!r}, not {subcommand!r}"
                    )
                continue
            if key not in opts:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _parse_typed(opts[key], value)
    return values


def _resolve(opts: list[Opt], ns: argparse.Namespace, subcommand: str) -> dict:
    table = {o.name: o for o in opts}
    values = {o.name: o.default for o in opts}
    if ns.config:
        values.update(_load_config_file(ns.config, table, subcommand))
    for opt in opts:
        cli_value = getattr(ns, opt.name)
        if cli_value is None:
            continue
        values[opt.name] = cli_value if opt.typ == "bool" else _parse_typed(opt, cli_value)
    return values


def _echo_config(subcommand: str, values: dict, stream) -> str:
    lines = [CONFIG_BEGIN, f"subcommand={subcommand}"]
    lines.extend(f"{key}={_serialize(values[key])}" for key in sorted(values))
    lines.append(CONFIG_END)
    block = "\n".join(lines) + "\n"
    stream.write(block)
    stream.flush()
    return block


def _seed_int(seed: int, tag: int, *rest) -> int:
    ss = np.random.SeedSequence([int(seed), int(tag), *map(int, rest)])
    return int(ss.generate_state(1, np.uint64)[0])


def _rng(seed: int, tag: int, *rest) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(tag), *map(int, rest)]))


def _parse_acc(text: str):
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ConfigError(f"accuracy range must be low:high, got {text!r}")
    try:
        return float(lo), float(hi)
    except ValueError:
        raise ConfigError(f"accuracy range must be low:high, got {text!r}") from None


# ---------------------------------------------------------------- gen

GEN_OPTS = [
    Opt("m", "int", 10, "worker count"),
    Opt("k", "int", 3, "class count"),
    Opt("n", "int", 200, "item count"),
    Opt("acc", "str", "0.6:0.9", "worker accuracy range low:high"),
    Opt("observe", "float", 0.5, "annotation observation probability"),
    Opt("seed", "int", 0, "master seed"),
    Opt("out_dir", "str", ".", "output directory"),
    Opt("features_out", "str", None, "also write a synthetic libsvm features file here"),
    Opt("d", "int", 10, "feature dimension for --features-out"),
    Opt("class_sep", "float", 3.0, "class separation for --features-out"),
    Opt("noise", "float", 1.0, "feature noise scale for --features-out"),
    Opt("json", "bool", False, "print the report as JSON"),
]


def cmd_gen(values: dict) -> int:
    acc_lo, acc_hi = _parse_acc(values["acc"])
    try:
        pool = WorkerPoolSpec(
            m=values["m"],
            k=values["k"],
            accuracy_low=acc_lo,
            accuracy_high=acc_hi,
            seed=_seed_int(values["seed"], _TAG_POOL),
        )
        if values["n"] < 1:
            raise InputError(f"n must be >= 1, got {values['n']}")
    except InputError as exc:
        raise ConfigError(str(exc)) from None

    workers = gen_workers(pool)
    labels = _rng(values["seed"], _TAG_LABELS).integers(0, values["k"], size=values["n"]).astype(np.int64)
    ann = gen_annotations(labels, workers, values["observe"], _rng(values["seed"], _TAG_ANN))

    out_dir = values["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    workers_path = os.path.join(out_dir, "workers.txt")
    ann_path = os.path.join(out_dir, "annotations.csv")
    labels_path = os.path.join(out_dir, "labels.csv")
    write_workers(workers_path, workers)
    write_annotations(ann_path, ann)
    write_labels(labels_path, labels)
    report = {
        "workers_file": workers_path,
        "annotations_file": ann_path,
        "labels_file": labels_path,
        "n_annotations": len(ann),
    }
    if values["features_out"]:
        spec = SyntheticDataSpec(
            n=values["n"], k=values["k"], d=values["d"],
            class_sep=values["class_sep"], noise=values["noise"],
        )
        features = gen_features(labels, spec, _rng(values["seed"], _TAG_FEATURES))
        with open(values["features_out"], "w", encoding="utf-8") as fh:
            write_libsvm(features, labels, fh)
        report["features_file"] = values["features_out"]
    if values["json"]:
        print(json.dumps(report, indent=2))
    else:
        for key, val in report.items():
            print(f"{key}: {val}")
    return EXIT_OK


# ---------------------------------------------------------------- train

TRAIN_OPTS = [
    Opt("annotations", "str", None, "annotation CSV (worker_id,item_id,label)"),
    Opt("features", "str", None, "libsvm features file (required for imitators)"),
    Opt("out_dir", "str", "models", "output directory"),
    Opt("m", "int", 0, "worker count override (0 = infer)"),
    Opt("k", "int", 0, "class count override (0 = infer)"),
    Opt("n", "int", 0, "item count override (0 = infer)"),
    Opt("no_imitators", "bool", False, "fit only the blackbox model"),
    Opt("em_max_iters", "int", 100, "EM iteration cap"),
    Opt("em_tol", "float", 1e-6, "EM log-likelihood stop tolerance"),
    Opt("em_smoothing", "float", 1.0, "EM pseudo-count smoothing"),
    Opt("epochs", "int", 300, "imitator training epochs"),
    Opt("learning_rate", "float", 0.1, "imitator learning rate"),
    Opt("l2", "float", 1e-4, "imitator L2 penalty"),
    Opt("seed", "int", 0, "master seed"),
    Opt("json", "bool", False, "print the agreement report as JSON"),
]


def cmd_train(values: dict) -> int:
    if not values["annotations"]:
        raise ConfigError("--annotations is required")
    want_imitators = not values["no_imitators"]
    if want_imitators and not values["features"]:
        raise ConfigError("imitator training requires --features (or pass --no-imitators)")

    dataset = None
    if values["features"]:
        if not os.path.exists(values["features"]):
            raise ParseError(f"features file not found: {values['features']}")
        with open(values["features"], "r", encoding="utf-8") as fh:
            dataset = parse_libsvm(fh)

    ann = read_annotations(values["annotations"])
    n = values["n"] or (dataset.n if dataset is not None else ann.dims.n)
    m = values["m"] or ann.dims.m
    k = values["k"] or max(ann.dims.k, dataset.k if dataset is not None else 0)
    dims = ProblemDims(n=n, m=m, k=k, d=dataset.d if dataset is not None else 0)
    if dataset is not None and dataset.n < ann.dims.n:
        raise ParseError(
            f"features file has {dataset.n} items but annotations reference {ann.dims.n}"
        )
    workers_arr, items_arr, labels_arr = ann.triplets()
    from .core import AnnotationMatrix

    ann = AnnotationMatrix.from_triplets(workers_arr, items_arr, labels_arr, dims)

    em_cfg = EmConfig(
        max_iters=values["em_max_iters"], tol=values["em_tol"], smoothing=values["em_smoothing"]
    )
    params = em_fit(ann, dims, em_cfg)

    out_dir = values["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    dsparams_path = os.path.join(out_dir, "dsparams.txt")
    write_dsparams(dsparams_path, params)
    report = {"dsparams_file": dsparams_path, "m": m, "k": k, "n": n}

    if want_imitators:
        imit_dir = os.path.join(out_dir, "imitators")
        os.makedirs(imit_dir, exist_ok=True)
        rows = []
        for i in range(m):
            cfg = ImitatorTrainConfig(
                epochs=values["epochs"],
                learning_rate=values["learning_rate"],
                l2=values["l2"],
                seed=_seed_int(values["seed"], _TAG_IMIT, i),
            )
            model = fit_imitator(dataset.features, ann, i, cfg)
            save_imitator(model, os.path.join(imit_dir, f"worker_{i:04d}.imit"))
            items, _ = ann.by_worker(i)
            agree = agreement_rate(model, dataset.features, ann, i) if items.size else float("nan")
            rows.append({"worker": i + 1, "annotations": int(items.size), "agreement": agree, "fallback": model.fallback})
        report["imitators_dir"] = imit_dir
        finite = [r["agreement"] for r in rows if not np.isnan(r["agreement"])]
        report["mean_agreement"] = float(np.mean(finite)) if finite else None
        report["workers"] = rows
        if not values["json"]:
            print(f"{'worker':>8} {'annotations':>12} {'agreement':>10} fallback")
            for r in rows:
                agree = "nan" if np.isnan(r["agreement"]) else f"{r['agreement']:.4f}"
                print(f"{r['worker']:>8} {r['annotations']:>12} {agree:>10} {r['fallback']}")
            print(f"mean agreement: {report['mean_agreement']}")

    if values["json"]:
        print(json.dumps(report, indent=2))
    elif not want_imitators:
        for key, val in report.items():
            print(f"{key}: {val}")
    else:
        print(f"dsparams_file: {dsparams_path}")
    return EXIT_OK


# ---------------------------------------------------------------- eval

EVAL_OPTS = [
    Opt("methods", "strs", ("IW", "IS", "DM", "DR-DS"), "comma list of methods"),
    Opt("sweep", "str", "auto", "sweep dimension: auto|pi|rho|lambda"),
    Opt("pi", "floats", (0.2,), "sampling probability grid (or fixed value)"),
    Opt("rho", "floats", (0.9,), "AIS margin threshold grid (or fixed value)"),
    Opt("lambda", "floats", (5.0,), "AWS scale grid (or fixed value)"),
    Opt("base_pi", "float", 0.1, "escalation sampling probability for adaptive methods"),
    Opt("eta_mode", "str", "auto", "clip threshold mode: auto|fixed"),
    Opt("eta", "float", 1.0, "clip threshold when eta_mode=fixed"),
    Opt("margin_base", "str", "likelihood", "AWS margin base: likelihood|posterior"),
    Opt("replicates", "int", 20, "independent replicates"),
    Opt("seed", "int", 0, "master seed"),
    Opt("data", "str", None, "libsvm dataset (default: synthetic)"),
    Opt("n", "int", 2000, "synthetic item count"),
    Opt("k", "int", 5, "synthetic class count"),
    Opt("d", "int", 10, "synthetic feature dimension"),
    Opt("class_sep", "float", 3.0, "synthetic class separation"),
    Opt("noise", "float", 1.0, "synthetic feature noise"),
    Opt("split", "float", 0.5, "train fraction"),
    Opt("m", "int", 50, "worker count"),
    Opt("acc", "str", "0.85:0.95", "worker accuracy range low:high"),
    Opt("observe", "float", 0.3, "training observation probability"),
    Opt("em_max_iters", "int", 100, "EM iteration cap"),
    Opt("em_tol", "float", 1e-6, "EM stop tolerance"),
    Opt("em_smoothing", "float", 1.0, "EM smoothing"),
    Opt("epochs", "int", 300, "imitator epochs"),
    Opt("learning_rate", "float", 0.1, "imitator learning rate"),
    Opt("l2", "float", 1e-4, "imitator L2 penalty"),
    Opt("imitator_hard", "bool", False, "use hard (argmax) imitated annotations"),
    Opt("end_to_end", "bool", False, "run the full train+eval pipeline in-process"),
    Opt("models_dir", "str", None, "pre-trained models from `train` (when not end-to-end)"),
    Opt("workers_file", "str", None, "true worker pool file from `gen` (when not end-to-end)"),
    Opt("out", "str", "sweep.csv", "output CSV path"),
    Opt("json", "bool", False, "also write a JSON mirror next to the CSV"),
    Opt("backend", "str", "auto", "kernel backend: auto|compiled|python"),
    Opt("threads", "int", 1, "cap on internal parallelism"),
]


def _resolve_sweep(values: dict):
    grids = {"pi": values["pi"], "rho": values["rho"], "lambda": values["lambda"]}
    sweep = values["sweep"]
    if sweep == "auto":
        multi = [name for name, grid in grids.items() if len(grid) > 1]
        if len(multi) > 1:
            raise ConfigError(f"multiple sweep grids given ({', '.join(multi)}); pass --sweep")
        sweep = multi[0] if multi else "pi"
    if sweep not in grids:
        raise ConfigError(f"unknown sweep dimension {sweep!r}; expected pi|rho|lambda")
    for name, grid in grids.items():
        if name != sweep and len(grid) != 1:
            raise ConfigError(f"non-swept {name} must be a single value, got {grid}")
    return sweep, grids


def _experiment_config(values: dict) -> ExperimentConfig:
    sweep, grids = _resolve_sweep(values)
    acc_lo, acc_hi = _parse_acc(values["acc"])
    try:
        return ExperimentConfig(
            methods=values["methods"],
            sweep_param=sweep,
            sweep_values=grids[sweep],
            replicates=values["replicates"],
            master_seed=values["seed"],
            data_path=values["data"] or None,
            synth=SyntheticDataSpec(
                n=values["n"], k=values["k"], d=values["d"],
                class_sep=values["class_sep"], noise=values["noise"],
            ),
            split=values["split"],
            m=values["m"],
            accuracy_low=acc_lo,
            accuracy_high=acc_hi,
            observe_prob=values["observe"],
            em=EmConfig(
                max_iters=values["em_max_iters"], tol=values["em_tol"], smoothing=values["em_smoothing"]
            ),
            imitation=ImitatorTrainConfig(
                epochs=values["epochs"], learning_rate=values["learning_rate"], l2=values["l2"]
            ),
            imitator_hard=values["imitator_hard"],
            pi=grids["pi"][0],
            rho=grids["rho"][0],
            lam=grids["lambda"][0],
            base_pi=values["base_pi"],
            eta_mode=values["eta_mode"],
            eta=values["eta"],
            margin_base=values["margin_base"],
        )
    except InputError as exc:
        raise ConfigError(str(exc)) from None


def _load_pretrained(values: dict) -> PretrainedBundle:
    for key in ("models_dir", "workers_file", "data"):
        if not values[key]:
            raise ConfigError(f"--{key.replace('_', '-')} is required without --end-to-end")
    from .io import read_dsparams

    params = read_dsparams(os.path.join(values["models_dir"], "dsparams.txt"))
    imit_dir = os.path.join(values["models_dir"], "imitators")
    if not os.path.isdir(imit_dir):
        raise ParseError(f"imitator directory not found: {imit_dir}")
    imitators = tuple(
        load_imitator(os.path.join(imit_dir, name)) for name in sorted(os.listdir(imit_dir))
    )
    if len(imitators) != params.m:
        raise ParseError(f"found {len(imitators)} imitators for {params.m} workers")
    true_workers = tuple(read_workers(values["workers_file"]))
    if len(true_workers) != params.m:
        raise ParseError(f"workers file has {len(true_workers)} workers, model has {params.m}")
    return PretrainedBundle(params=params, imitators=imitators, true_workers=true_workers)


def cmd_eval(values: dict) -> int:
    cfg = _experiment_config(values)
    pretrained = None
    if not values["end_to_end"]:
        if not (values["models_dir"] or values["workers_file"]):
            raise ConfigError(
                "pass --end-to-end to run the full pipeline, or provide "
                "--models-dir and --workers-file for pre-trained evaluation"
            )
        pretrained = _load_pretrained(values)
    result = run_experiment(cfg, pretrained)
    out = values["out"]
    out_dir = os.path.dirname(os.path.abspath(out))
    os.makedirs(out_dir, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(result.to_csv())
    print(f"wrote {out} ({len(result.rows)} rows)")
    if values["json"]:
        mirror = os.path.splitext(out)[0] + ".json"
        with open(mirror, "w", encoding="utf-8") as fh:
            fh.write(result.to_json())
        print(f"wrote {mirror}")
    return EXIT_OK


# ---------------------------------------------------------------- verify

VERIFY_OPTS = [
    Opt("instances", "int", 50, "catalog size for the regression battery"),
    Opt("seed", "int", 20250809, "catalog seed"),
    Opt("json", "bool", False, "print the report as JSON"),
]


def cmd_verify(values: dict) -> int:
    report = theorem_suite(instances=values["instances"], seed=values["seed"])
    obj = {
        "instances": report.instances,
        "seed": report.seed,
        "tolerance": report.tolerance,
        "passed": report.passed,
        "checks": [
            {
                "name": c.name,
                "max_mean_deviation": c.max_mean_dev,
                "max_variance_deviation": c.max_var_dev,
                "max_bias_deviation": c.max_bias_dev,
                "worst_instance": c.worst_instance,
                "passed": c.passed,
            }
            for c in report.checks
        ],
    }
    if values["json"]:
        print(json.dumps(obj, indent=2))
    else:
        print(f"theorem regression battery: {report.instances} instances, tolerance {report.tolerance}")
        for c in report.checks:
            status = "PASS" if c.passed else "FAIL"
            print(f"[{status}] {c.name}")
            print(f"    max mean deviation     {c.max_mean_dev:.3e}")
            print(f"    max variance deviation {c.max_var_dev:.3e}")
            print(f"    max bias deviation     {c.max_bias_dev:.3e}")
            print(f"    worst instance         #{c.worst_instance}")
        print("all passed" if report.passed else "FAILURES detected")
    return EXIT_OK if report.passed else EXIT_RUNTIME


# ---------------------------------------------------------------- driver

def _normalize_eval(values: dict) -> None:
    sweep, _ = _resolve_sweep(values)
    values["sweep"] = sweep


_COMMANDS = {
    "gen": (GEN_OPTS, cmd_gen, None, "generate a synthetic worker pool, annotations, and true labels"),
    "train": (TRAIN_OPTS, cmd_train, None, "fit the blackbox model and per-worker imitators"),
    "eval": (EVAL_OPTS, cmd_eval, _normalize_eval, "run an accuracy-vs-cost sweep and write the result CSV"),
    "verify": (VERIFY_OPTS, cmd_verify, None, "check the estimator theorems by exact enumeration"),
}


def build_parser() -> _Parser:
    parser = _Parser(prog="drcrowd", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name, (opts, _, _, help_text) in _COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        _add_options(sp, opts)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        opts, runner, normalize, _ = _COMMANDS[ns.subcommand]
        values = _resolve(opts, ns, ns.subcommand)
        if "backend" in values:
            values["backend"] = _kernels.use_backend(values["backend"])
        if normalize is not None:
            normalize(values)
        _echo_config(ns.subcommand, values, sys.stdout)
        return runner(values)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
