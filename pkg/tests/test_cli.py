import json

import pytest
import yaml
from click.testing import CliRunner

from graphad.cli import main
from graphad.data import load_fixture, write_tu_dataset


@pytest.fixture
def runner():
    return CliRunner()


def write_config(tmp_path, **over):
    raw = {"datasets": ["FIXTURE"], "methods": ["OCPool"], "folds": [0, 1], "runs": 1,
           "store": "store.jsonl", **over}
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(raw))
    return path


class TestPrepare:
    def test_fixture(self, runner):
        res = runner.invoke(main, ["prepare", "--root", ".", "--dataset", "TINY"])
        assert res.exit_code == 0, res.output
        assert "TINY class 0: graphs=1" in res.output

    def test_missing_files_exit_3(self, runner, tmp_path):
        res = runner.invoke(main, ["prepare", "--root", str(tmp_path), "--dataset", "AIDS"])
        assert res.exit_code == 3

    def test_reference_mismatch_exit_3(self, runner, tmp_path):
        write_tu_dataset(load_fixture("FIXTURE"), tmp_path / "AIDS", "AIDS")
        res = runner.invoke(main, ["prepare", "--root", str(tmp_path), "--dataset", "AIDS"])
        assert res.exit_code == 3
        assert "mismatch" in res.output


class TestRun:
    def test_run_then_report(self, runner, tmp_path):
        cfg = write_config(tmp_path)
        res = runner.invoke(main, ["run", "--config", str(cfg), "--out", str(tmp_path / "rep")])
        assert res.exit_code == 0, res.output
        assert "4 new runs" in res.output
        res = runner.invoke(main, ["run", "--config", str(cfg), "--resume"])
        assert "0 new runs" in res.output
        res = runner.invoke(main, ["report", "--store", str(tmp_path / "store.jsonl"), "--out", str(tmp_path / "r2")])
        assert res.exit_code == 0
        assert (tmp_path / "rep" / "summary.csv").read_bytes() == (tmp_path / "r2" / "summary.csv").read_bytes()

    def test_invalid_method_exit_2(self, runner, tmp_path):
        res = runner.invoke(main, ["run", "--config", str(write_config(tmp_path)), "--methods", "OCPool,PK"])
        assert res.exit_code == 2

    def test_bad_config_exit_2(self, runner, tmp_path):
        res = runner.invoke(main, ["run", "--config", str(write_config(tmp_path, methods=["WLK"]))])
        assert res.exit_code == 2

    def test_missing_dataset_exit_2(self, runner, tmp_path):
        cfg = write_config(tmp_path, datasets=["NCI1"], data_root=str(tmp_path))
        assert runner.invoke(main, ["run", "--config", str(cfg)]).exit_code == 2

    def test_numerical_abort_exit_4(self, runner, tmp_path):
        cfg = write_config(tmp_path, methods=["OCGTL"], train={"lr": 1e30, "max_epochs": 3},
                           gin={"num_layers": 1, "hidden_dim": 4, "norm": "none"}, model={"k": 2})
        res = runner.invoke(main, ["run", "--config", str(cfg)])
        assert res.exit_code == 4, res.output

    def test_report_missing_store(self, runner, tmp_path):
        res = runner.invoke(main, ["report", "--store", str(tmp_path / "x.jsonl"), "--out", str(tmp_path)])
        assert res.exit_code == 2


class TestAblationCommand:
    def test_pooling(self, runner, tmp_path):
        res = runner.invoke(main, ["ablation", "--mode", "pooling", "--config", str(write_config(tmp_path)),
                                   "--out", str(tmp_path / "abl")])
        assert res.exit_code == 0, res.output
        assert (tmp_path / "abl" / "pooling_table.csv").read_text().startswith("dataset,add_auc")

    def test_bad_mode(self, runner, tmp_path):
        res = runner.invoke(main, ["ablation", "--mode", "depth", "--config", str(write_config(tmp_path))])
        assert res.exit_code == 2
