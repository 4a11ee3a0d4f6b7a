import json
import os

import numpy as np
import pytest

from drcrowd.cli import CONFIG_BEGIN, CONFIG_END, main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def echoed_config(out: str) -> str:
    lines = out.splitlines()
    start = lines.index(CONFIG_BEGIN)
    end = lines.index(CONFIG_END)
    return "\n".join(line for line in lines[start + 1 : end]) + "\n"


GEN_ARGS = ["gen", "--m", "6", "--k", "3", "--n", "120", "--acc", "0.6:0.9",
            "--observe", "0.5", "--seed", "7"]


def gen_into(capsys, tmp_path, sub="data", features=True):
    out_dir = tmp_path / sub
    argv = GEN_ARGS + ["--out-dir", str(out_dir)]
    if features:
        argv += ["--features-out", str(out_dir / "features.libsvm")]
    code, out, err = run_cli(capsys, *argv)
    assert code == 0, err
    return out_dir


class TestGen:
    def test_writes_three_files_deterministically(self, capsys, tmp_path):
        a = gen_into(capsys, tmp_path, "a")
        b = gen_into(capsys, tmp_path, "b")
        for name in ("workers.txt", "annotations.csv", "labels.csv", "features.libsvm"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_annotation_count_concentrates(self, capsys, tmp_path):
        code, _, _ = run_cli(
            capsys, "gen", "--m", "10", "--k", "3", "--n", "200", "--acc", "0.6:0.9",
            "--observe", "0.5", "--seed", "7", "--out-dir", str(tmp_path / "c"),
        )
        assert code == 0
        rows = (tmp_path / "c" / "annotations.csv").read_text().strip().splitlines()
        count = len(rows) - 1
        assert abs(count - 1000) < 0.03 * 1000

    def test_low_accuracy_is_config_error(self, capsys, tmp_path):
        code, _, err = run_cli(
            capsys, "gen", "--m", "3", "--k", "3", "--acc", "0.2:0.9",
            "--out-dir", str(tmp_path),
        )
        assert code == 1
        assert "accuracy" in err

    def test_echoes_resolved_config(self, capsys, tmp_path):
        code, out, _ = run_cli(capsys, *GEN_ARGS, "--out-dir", str(tmp_path / "x"))
        assert code == 0
        assert CONFIG_BEGIN in out and "seed=7" in out


class TestTrain:
    def test_trains_and_reports_agreement(self, capsys, tmp_path):
        data = gen_into(capsys, tmp_path)
        code, out, err = run_cli(
            capsys, "train",
            "--annotations", str(data / "annotations.csv"),
            "--features", str(data / "features.libsvm"),
            "--out-dir", str(tmp_path / "models"),
            "--seed", "3", "--json",
        )
        assert code == 0, err
        report = json.loads(out[out.index(CONFIG_END) + len(CONFIG_END):])
        assert os.path.exists(report["dsparams_file"])
        assert len(report["workers"]) == 6
        assert report["mean_agreement"] > 0.4

    def test_near_noiseless_pool_high_agreement(self, capsys, tmp_path):
        out_dir = tmp_path / "clean"
        code, _, _ = run_cli(
            capsys, "gen", "--m", "5", "--k", "3", "--n", "300", "--acc", "0.98:1.0",
            "--observe", "0.8", "--seed", "1", "--out-dir", str(out_dir),
            "--features-out", str(out_dir / "features.libsvm"), "--class-sep", "4.0",
        )
        assert code == 0
        code, out, err = run_cli(
            capsys, "train",
            "--annotations", str(out_dir / "annotations.csv"),
            "--features", str(out_dir / "features.libsvm"),
            "--out-dir", str(tmp_path / "m2"), "--json",
        )
        assert code == 0, err
        report = json.loads(out[out.index(CONFIG_END) + len(CONFIG_END):])
        assert report["mean_agreement"] >= 0.9

    def test_rerun_writes_identical_models(self, capsys, tmp_path):
        data = gen_into(capsys, tmp_path)
        for sub in ("m1", "m2"):
            code, _, _ = run_cli(
                capsys, "train",
                "--annotations", str(data / "annotations.csv"),
                "--features", str(data / "features.libsvm"),
                "--out-dir", str(tmp_path / sub), "--seed", "9",
            )
            assert code == 0
        a, b = tmp_path / "m1", tmp_path / "m2"
        assert (a / "dsparams.txt").read_bytes() == (b / "dsparams.txt").read_bytes()
        for name in sorted(os.listdir(a / "imitators")):
            assert (a / "imitators" / name).read_bytes() == (b / "imitators" / name).read_bytes()

    def test_missing_features_flag_is_usage_error(self, capsys, tmp_path):
        data = gen_into(capsys, tmp_path, features=False)
        code, _, err = run_cli(capsys, "train", "--annotations", str(data / "annotations.csv"))
        assert code == 1
        assert "--features" in err

    def test_nonexistent_features_file_named_in_error(self, capsys, tmp_path):
        data = gen_into(capsys, tmp_path, features=False)
        missing = str(tmp_path / "nope.libsvm")
        code, _, err = run_cli(
            capsys, "train", "--annotations", str(data / "annotations.csv"),
            "--features", missing,
        )
        assert code == 2
        assert missing in err


class TestEval:
    def test_iw_rows_constant_across_pi(self, capsys, tmp_path):
        out_csv = tmp_path / "iw.csv"
        code, _, err = run_cli(
            capsys, "eval", "--end-to-end", "--methods", "IW",
            "--pi", "0.1,0.5,1.0", "--replicates", "2",
            "--n", "120", "--m", "5", "--k", "3", "--seed", "2",
            "--out", str(out_csv),
        )
        assert code == 0, err
        rows = out_csv.read_text().strip().splitlines()[1:]
        assert len(rows) == 6
        for rep in ("0", "1"):
            accs = {r.split(",")[-1] for r in rows if r.split(",")[3] == rep}
            assert len(accs) == 1

    def test_unknown_method_lists_valid_names(self, capsys, tmp_path):
        code, _, err = run_cli(
            capsys, "eval", "--end-to-end", "--methods", "IW,BOGUS",
            "--out", str(tmp_path / "x.csv"),
        )
        assert code == 1
        assert "BOGUS" in err and "DRC-AWS-AIS" in err

    def test_requires_mode(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "eval", "--out", str(tmp_path / "x.csv"))
        assert code == 1
        assert "end-to-end" in err

    def test_adaptive_cheaper_than_ideal_world(self, capsys, tmp_path):
        out_csv = tmp_path / "adaptive.csv"
        code, _, err = run_cli(
            capsys, "eval", "--end-to-end", "--methods", "DRC-AWS-AIS",
            "--rho", "0.3", "--lambda", "5", "--replicates", "2",
            "--n", "150", "--m", "6", "--k", "3", "--seed", "4",
            "--out", str(out_csv),
        )
        assert code == 0, err
        rows = out_csv.read_text().strip().splitlines()[1:]
        costs = [float(r.split(",")[4]) for r in rows]
        assert all(c < 6 for c in costs)

    def test_json_mirror_matches_csv(self, capsys, tmp_path):
        out_csv = tmp_path / "sweep.csv"
        code, _, _ = run_cli(
            capsys, "eval", "--end-to-end", "--methods", "DM", "--pi", "0.5",
            "--replicates", "1", "--n", "100", "--m", "4", "--k", "3",
            "--out", str(out_csv), "--json",
        )
        assert code == 0
        mirror = json.loads((tmp_path / "sweep.json").read_text())
        lines = out_csv.read_text().strip().splitlines()
        assert len(mirror["rows"]) == len(lines) - 1
        first = mirror["rows"][0]
        assert lines[1].startswith(f"{first['method']},{first['param_name']}")

    def test_echoed_config_reproduces_csv_bytes(self, capsys, tmp_path):
        out1 = tmp_path / "one.csv"
        code, out, _ = run_cli(
            capsys, "eval", "--end-to-end", "--methods", "IS,DR-DS",
            "--pi", "0.2,1.0", "--replicates", "2",
            "--n", "150", "--m", "6", "--k", "3", "--seed", "11",
            "--out", str(out1),
        )
        assert code == 0
        cfg_path = tmp_path / "echoed.cfg"
        cfg_path.write_text(echoed_config(out))
        out2 = tmp_path / "two.csv"
        code, _, err = run_cli(capsys, "eval", "--config", str(cfg_path), "--out", str(out2))
        assert code == 0, err
        assert out1.read_bytes() == out2.read_bytes()

    def test_unknown_config_key_rejected(self, capsys, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("shenanigans=1\n")
        code, _, err = run_cli(capsys, "eval", "--config", str(cfg))
        assert code == 1
        assert "shenanigans" in err

    def test_pretrained_pipeline(self, capsys, tmp_path):
        data = gen_into(capsys, tmp_path)
        code, _, _ = run_cli(
            capsys, "train", "--annotations", str(data / "annotations.csv"),
            "--features", str(data / "features.libsvm"),
            "--out-dir", str(tmp_path / "models"), "--seed", "5",
        )
        assert code == 0
        out_csv = tmp_path / "pre.csv"
        code, _, err = run_cli(
            capsys, "eval", "--methods", "IW,DR-DS", "--pi", "0.3",
            "--replicates", "2", "--data", str(data / "features.libsvm"),
            "--models-dir", str(tmp_path / "models"),
            "--workers-file", str(data / "workers.txt"),
            "--out", str(out_csv), "--seed", "6",
        )
        assert code == 0, err
        rows = out_csv.read_text().strip().splitlines()[1:]
        assert len(rows) == 4


class TestVerify:
    def test_passes_and_prints_three_sections(self, capsys):
        code, out, _ = run_cli(capsys, "verify", "--instances", "20")
        assert code == 0
        for name in ("importance_sampling", "doubly_robust", "clipped_dr"):
            assert name in out
        assert "all passed" in out

    def test_instances_flag_scales_catalog(self, capsys):
        code, out, _ = run_cli(capsys, "verify", "--instances", "60", "--json")
        assert code == 0
        report = json.loads(out[out.index(CONFIG_END) + len(CONFIG_END):])
        assert report["instances"] == 60
        assert report["passed"] is True

    def test_bad_subcommand_is_usage_error(self, capsys):
        code, _, err = run_cli(capsys, "frobnicate")
        assert code == 1
