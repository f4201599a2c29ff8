import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from sgat import autodiff as ad
from sgat.cli import main
from sgat.data import HeteroGraph, save_dataset
from sgat.synthetic import hub_clique_graph

CONFIG = """
[data]
path = "data"

[lift]
K = 2
epsilon = [1]
lambda = 20

[model]
L = 2
hidden = 8
heads = 2
fusion_dim = 4

[train]
epochs = 6
patience = 6
seed = 0

[sweep]
epsilon = [[1, 2]]
lambda = [3, 10, 20]
"""


@pytest.fixture
def workspace(tmp_path):
    save_dataset(hub_clique_graph(0), str(tmp_path / "data"))
    (tmp_path / "cfg.toml").write_text(CONFIG)
    return tmp_path


def _triangle_dataset(path):
    g = HeteroGraph(
        node_ids=("t1", "t2", "t3", "u"), node_type=np.array([0, 0, 0, 1]), type_names=("target", "hub"),
        edges=np.array([[0, 3, 0], [1, 3, 0], [2, 3, 0]]), edge_type_names=("link",),
        features=np.eye(4), target_type=0, labels=np.array([0, 1, 0, -1]), class_names=("a", "b"),
        splits={"train": np.array([0, 1]), "val": np.array([2]), "test": np.empty(0, dtype=np.int64)},
    )
    save_dataset(g, str(path))


def test_stats_on_triangle_toy(tmp_path, capsys):
    _triangle_dataset(tmp_path / "tri")
    (tmp_path / "cfg.toml").write_text('[lift]\nK = 2\nepsilon = [1]\nlambda = 10\n')
    assert main(["stats", "--config", str(tmp_path / "cfg.toml"), "--data", str(tmp_path / "tri"), "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert "|X^0|=3 |X^1|=3 |X^2|=1" in out
    assert "gamma=0.333" in out
    assert "||A^0||=9" in out and "||A^1||=9" in out


def test_lift_then_stats_on_bundle(workspace, capsys):
    out_dir = workspace / "bundle"
    assert main(["lift", "--config", str(workspace / "cfg.toml"), "--out", str(out_dir)]) == 0
    assert (out_dir / "bundle.json").exists() and (out_dir / "eta1" / "features_k2.bin").exists()
    capsys.readouterr()
    assert main(["stats", "--data", str(out_dir)]) == 0
    assert "eta=1 |X^0|=12" in capsys.readouterr().out


def test_train_writes_outputs_and_eval_reads_them(workspace, capsys):
    out = workspace / "run"
    assert main(["train", "--config", str(workspace / "cfg.toml"), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    with open(out / "curves.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == report["epochs_run"]
    assert list(rows[0])[:3] == ["epoch", "loss", "train_acc"]
    assert set(ad.load_checkpoint(str(out / "params.ckpt"))) >= {"cls.W", "cls.b", "l1.e1.k0.W"}
    assert main(["eval", "--config", str(workspace / "cfg.toml"), "--out", str(out)]) == 0
    scores = json.loads((out / "eval.json").read_text())
    assert scores["test"]["macro_f1"] == pytest.approx(report["test_macro_f1"])


def test_train_same_seed_same_report(workspace):
    reports = []
    for name in ("a", "b"):
        main(["train", "--config", str(workspace / "cfg.toml"), "--out", str(workspace / name), "--seed", "4"])
        rep = json.loads((workspace / name / "report.json").read_text())
        rep.pop("epoch_seconds")
        for row in rep["curves"]:
            row.pop("seconds")
        reports.append(rep)
    assert reports[0] == reports[1] and reports[0]["seed"] == 4


def test_train_repeats(workspace, capsys):
    out = workspace / "rep"
    assert main(["train", "--config", str(workspace / "cfg.toml"), "--out", str(out), "--repeats", "2"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report["runs"]) == 2 and "macro_f1_mean" in report["summary"]


def test_sweep_row_count(workspace):
    out = workspace / "sw"
    assert main(["sweep", "--config", str(workspace / "cfg.toml"), "--out", str(out)]) == 0
    with open(out / "sweep.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 2 * 3


def test_missing_config_exit_1(tmp_path, capsys):
    missing = str(tmp_path / "missing.toml")
    assert main(["train", "--config", missing]) == 1
    assert missing in capsys.readouterr().err


def test_missing_seed_exit_1(tmp_path, capsys):
    (tmp_path / "c.toml").write_text("[lift]\nK = 1\n")
    assert main(["train", "--config", str(tmp_path / "c.toml")]) == 1
    assert "seed" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["bogus"], ["train", "--nope"], []])
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sgat.cli", "stats", "--bogus"], capture_output=True, text=True,
                          cwd=os.fspath(tmp_path))
    assert proc.returncode == 2 and "usage" in proc.stderr
