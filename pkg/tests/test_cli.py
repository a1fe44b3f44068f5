"""Exit codes and end-to-end flows of the command-line interface."""

import json

import pytest

from crossgaze.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Small trained setup shared by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    train_shard = str(root / "train.shard")
    test_shard = str(root / "test.shard")
    assert main(["gen-data", "--seed", "1", "--subjects", "3", "--per-subject", "20",
                 "--domain", "bright-clean", "--out", train_shard]) == 0
    assert main(["gen-data", "--seed", "2", "--subjects", "2", "--per-subject", "10",
                 "--domain", "dim-tinted-noisy", "--out", test_shard]) == 0
    config = {
        "seed": 5, "batch_size": 8, "epochs": 1, "learning_rate": 1e-3,
        "knn_k": 2, "train_data": train_shard, "out_dir": str(root / "run"),
    }
    config_path = str(root / "train.json")
    json.dump(config, open(config_path, "w"))
    assert main(["train", "--config", config_path]) == 0
    return {
        "root": root,
        "train_shard": train_shard,
        "test_shard": test_shard,
        "ckpt": str(root / "run" / "model.ckpt"),
        "config": config,
    }


class TestUsageErrors:
    def test_no_arguments(self, capsys):
        code, _, _ = run(capsys, *[])
        assert code == 2

    def test_unknown_flag(self, capsys):
        code, _, _ = run(capsys, "gen-data", "--seed", "1", "--subjects", "1",
                         "--per-subject", "1", "--domain", "bright-clean",
                         "--out", "/tmp/x.shard", "--bogus", "1")
        assert code == 2

    def test_unknown_subcommand(self, capsys):
        code, _, _ = run(capsys, "frobnicate")
        assert code == 2

    def test_invalid_config_value(self, capsys, workspace, tmp_path):
        bad = dict(workspace["config"], batch_size=1, branches=["mmd"])
        path = str(tmp_path / "bad.json")
        json.dump(bad, open(path, "w"))
        code, _, err = run(capsys, "train", "--config", path)
        assert code == 2
        assert "batch_size" in err


class TestIOErrors:
    def test_missing_shard(self, capsys):
        code, _, _ = run(capsys, "eval", "--ckpt", "/nope.ckpt", "--data", "/nope.shard")
        assert code == 3

    def test_corrupted_checkpoint_magic(self, capsys, workspace, tmp_path):
        bad = str(tmp_path / "bad.ckpt")
        raw = bytearray(open(workspace["ckpt"], "rb").read())
        raw[:4] = b"NOPE"
        open(bad, "wb").write(bytes(raw))
        code, _, err = run(capsys, "eval", "--ckpt", bad,
                           "--data", workspace["test_shard"])
        assert code == 3
        assert "magic" in err

    def test_truncated_shard(self, capsys, workspace, tmp_path):
        bad = str(tmp_path / "bad.shard")
        raw = open(workspace["train_shard"], "rb").read()
        open(bad, "wb").write(raw[:200])
        code, _, err = run(capsys, "eval", "--ckpt", workspace["ckpt"], "--data", bad)
        assert code == 3
        assert "truncated" in err

    def test_malformed_config_json(self, capsys, tmp_path):
        path = str(tmp_path / "broken.json")
        open(path, "w").write("{not json")
        code, _, _ = run(capsys, "train", "--config", path)
        assert code == 3


class TestHappyPaths:
    def test_gen_data_emits_summary(self, capsys, tmp_path):
        out = str(tmp_path / "d.shard")
        code, stdout, _ = run(capsys, "gen-data", "--seed", "3", "--subjects", "2",
                              "--per-subject", "5", "--domain", "bright-clean",
                              "--out", out)
        assert code == 0
        payload = json.loads(stdout)
        assert payload["samples"] == 10
        assert payload["path"] == out

    def test_eval_reports_error(self, capsys, workspace):
        code, stdout, _ = run(capsys, "eval", "--ckpt", workspace["ckpt"],
                              "--data", workspace["test_shard"])
        assert code == 0
        payload = json.loads(stdout)
        assert payload["samples"] == 20
        assert payload["mean_angular_error_deg"] > 0

    def test_project_writes_csv(self, capsys, workspace, tmp_path):
        out = str(tmp_path / "proj.csv")
        code, stdout, _ = run(capsys, "project", "--ckpt", workspace["ckpt"],
                              "--data", workspace["test_shard"], "--out", out)
        assert code == 0
        assert open(out).readline().strip() == "x,y,pitch,yaw"

    def test_knn_check_passes(self, capsys, workspace):
        code, stdout, _ = run(capsys, "knn-check", "--data", workspace["train_shard"],
                              "--queries", "10")
        assert code == 0
        assert json.loads(stdout)["mismatches"] == 0

    def test_grad_check_small(self, capsys):
        code, stdout, _ = run(capsys, "grad-check", "--seed", "1", "--batch", "4",
                              "--coords", "20")
        assert code == 0
        payload = json.loads(stdout)
        assert payload["max_rel_err"] < 1e-4

    def test_custom_domain_file(self, capsys, tmp_path):
        spec = {"domain_id": 7, "brightness_mean": 0.9, "brightness_std": 0.05,
                "contrast_mean": 1.0, "contrast_std": 0.0,
                "tint": [0.0, 0.05, 0.0], "noise_std": 0.01}
        spec_path = str(tmp_path / "domain.json")
        json.dump(spec, open(spec_path, "w"))
        out = str(tmp_path / "c.shard")
        code, stdout, _ = run(capsys, "gen-data", "--seed", "4", "--subjects", "1",
                              "--per-subject", "4", "--domain", spec_path,
                              "--out", out)
        assert code == 0
        assert json.loads(stdout)["domain_id"] == 7

    def test_ablate_tiny_grid(self, capsys, workspace, tmp_path):
        cfg = dict(workspace["config"])
        cfg.pop("out_dir")
        cfg.pop("train_data")
        cfg["epochs"] = 1
        cfg["tasks"] = [["a2b", workspace["train_shard"], workspace["test_shard"]]]
        path = str(tmp_path / "ablate.json")
        json.dump(cfg, open(path, "w"))
        out = str(tmp_path / "grid.json")
        code, stdout, err = run(capsys, "ablate", "--config", path,
                                "--seeds", "1", "--out", out)
        assert code == 0
        grid = json.loads(open(out).read())
        assert len(grid["rows"]) == 8
        assert "(baseline)" in err
