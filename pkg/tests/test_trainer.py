"""Training-loop tests: branch/weight reduction equivalences, determinism,
learning progress, inference, and the failure paths."""

import json

import numpy as np
import pytest

from crossgaze import synthdata
from crossgaze.losses import LossWeights
from crossgaze.model import init_net, load_checkpoint
from crossgaze.nn import NonFiniteError, grad_check_report
from crossgaze.rng import stream
from crossgaze.trainer import (ConfigError, TrainConfig, baseline_config,
                               gradcheck_setup, infer, train)


@pytest.fixture(scope="module")
def shard():
    return synthdata.generate(5, n_subjects=4, samples_per_subject=40,
                              spec=synthdata.BRIGHT_CLEAN)


def param_trace(config, shard, n_steps=None):
    digests = []

    def cb(step, net):
        digests.append(net.param_digest())

    train(config, shard=shard, step_callback=cb)
    return digests[:n_steps] if n_steps else digests


class TestConfig:
    def test_mmd_needs_batch_of_two(self):
        with pytest.raises(ConfigError):
            TrainConfig(batch_size=1, branches=frozenset({"mmd"})).validate()
        TrainConfig(batch_size=2, branches=frozenset({"mmd"})).validate()

    def test_unknown_branch_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig(branches=frozenset({"extra"})).validate()

    def test_json_round_trip(self):
        cfg = TrainConfig(seed=3, batch_size=8, epochs=2,
                          weights=LossWeights(0.5, 1.5, 0.0),
                          branches=frozenset({"aug", "mmd"}))
        back = TrainConfig.from_dict(json.loads(cfg.to_json()))
        assert back == cfg

    def test_unknown_config_field_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({"sneaky": 1})


class TestReduction:
    def test_disabled_branches_report_zero_aux_losses(self, shard):
        cfg = TrainConfig(seed=1, batch_size=16, epochs=1, branches=frozenset())
        res = train(cfg, shard=shard)
        for r in res.records:
            assert r.l_aug == 0.0 and r.l_mmd == 0.0 and r.l_con == 0.0
            assert r.l_total == r.l_ori

    def test_zero_weights_match_disabled_trajectories(self, shard):
        zero_w = TrainConfig(seed=4, batch_size=16, epochs=2,
                             weights=LossWeights(0.0, 0.0, 0.0))
        disabled = baseline_config(TrainConfig(seed=4, batch_size=16, epochs=2))
        assert param_trace(zero_w, shard) == param_trace(disabled, shard)

    def test_single_branch_zero_weight_matches_removed(self, shard):
        with_con = TrainConfig(seed=6, batch_size=16, epochs=1,
                               branches=frozenset({"aug", "mmd", "con"}),
                               weights=LossWeights(1.0, 1.0, 0.0))
        without = TrainConfig(seed=6, batch_size=16, epochs=1,
                              branches=frozenset({"aug", "mmd"}))
        assert param_trace(with_con, shard) == param_trace(without, shard)

    def test_mmd_only_branch_runs(self, shard):
        cfg = TrainConfig(seed=7, batch_size=16, epochs=1,
                          branches=frozenset({"mmd"}))
        res = train(cfg, shard=shard)
        assert all(r.l_aug == 0.0 for r in res.records)
        assert any(r.l_mmd > 0.0 for r in res.records)


class TestDeterminism:
    def test_same_seed_same_metrics_and_checkpoint(self, shard, tmp_path):
        outs = []
        for name in ("a", "b"):
            cfg = TrainConfig(seed=9, batch_size=16, epochs=2,
                              out_dir=str(tmp_path / name))
            res = train(cfg, shard=shard)
            outs.append((open(res.metrics_path, "rb").read(),
                         open(res.checkpoint_path, "rb").read()))
        assert outs[0][0] == outs[1][0]
        assert outs[0][1] == outs[1][1]

    def test_metrics_lines_are_step_monotone_without_wall_time(self, shard, tmp_path):
        cfg = TrainConfig(seed=9, batch_size=16, epochs=1, out_dir=str(tmp_path / "m"))
        res = train(cfg, shard=shard)
        steps = []
        for line in open(res.metrics_path):
            obj = json.loads(line)
            assert set(obj) == {"step", "epoch", "l_ori", "l_aug", "l_mmd",
                                "l_con", "l_total"}
            steps.append(obj["step"])
        assert steps == list(range(1, len(steps) + 1))


class TestLearning:
    def test_loss_decreases_on_single_domain_set(self):
        data = synthdata.generate(15, n_subjects=5, samples_per_subject=100,
                                  spec=synthdata.BRIGHT_CLEAN)
        cfg = TrainConfig(seed=2, batch_size=32, learning_rate=2e-3, epochs=20,
                          branches=frozenset())
        res = train(cfg, shard=data)
        first = res.records[0].l_ori
        last_epoch = np.mean([r.l_ori for r in res.records if r.epoch == cfg.epochs - 1])
        assert last_epoch < 0.2 * first

    def test_overfit_then_infer_on_train_set(self):
        data = synthdata.generate(16, n_subjects=2, samples_per_subject=64,
                                  spec=synthdata.BRIGHT_CLEAN)
        cfg = TrainConfig(seed=3, batch_size=16, learning_rate=2e-3, epochs=60,
                          branches=frozenset())
        res = train(cfg, shard=data)
        _, err = infer(res.net, data)
        assert err < 2.0


class TestInfer:
    def test_zero_head_weights_constant_prediction(self, shard):
        net = init_net(stream(0, "init"))
        net.head.weights[:] = 0.0
        net.head.bias[:] = (0.11, -0.07)
        preds, _ = infer(net, shard)
        assert np.allclose(preds, [0.11, -0.07], atol=1e-15)

    def test_same_net_twice_identical(self, shard):
        net = init_net(stream(1, "init"))
        p1, e1 = infer(net, shard)
        p2, e2 = infer(net, shard)
        assert np.array_equal(p1, p2)
        assert e1 == e2

    def test_checkpoint_round_trip_preserves_inference(self, shard, tmp_path):
        cfg = TrainConfig(seed=12, batch_size=16, epochs=1,
                          out_dir=str(tmp_path / "ckpt"))
        res = train(cfg, shard=shard)
        loaded, _, _ = load_checkpoint(res.checkpoint_path)
        p1, _ = infer(res.net, shard)
        p2, _ = infer(loaded, shard)
        assert np.array_equal(p1, p2)


class TestFailurePaths:
    def test_single_subject_contrast_skips_and_counts(self):
        solo = synthdata.generate(17, n_subjects=1, samples_per_subject=48,
                                  spec=synthdata.BRIGHT_CLEAN)
        cfg = TrainConfig(seed=1, batch_size=16, epochs=1,
                          branches=frozenset({"con"}))
        res = train(cfg, shard=solo)
        assert res.skipped_positives == 3 * 16  # every item in every batch
        assert all(r.l_con == 0.0 for r in res.records)

    def test_nonfinite_loss_aborts_with_batch_rows(self, shard):
        bad = synthdata.DatasetShard(shard.images.copy(), shard.labels.copy(),
                                     shard.subject_ids.copy(), dict(shard.manifest))
        bad.images[7, 0, 0, 0] = np.nan
        cfg = TrainConfig(seed=1, batch_size=len(bad), epochs=1, branches=frozenset())
        with pytest.raises(NonFiniteError, match="batch sample rows"):
            train(cfg, shard=bad)

    def test_missing_dataset_file(self):
        cfg = TrainConfig(seed=0, train_data="/nonexistent/data.shard")
        with pytest.raises(FileNotFoundError):
            train(cfg)

    def test_dataset_smaller_than_batch_rejected(self):
        tiny = synthdata.generate(18, n_subjects=1, samples_per_subject=4,
                                  spec=synthdata.BRIGHT_CLEAN)
        cfg = TrainConfig(seed=0, batch_size=64, branches=frozenset())
        with pytest.raises(ConfigError):
            train(cfg, shard=tiny)


class TestGradCheckOnFullLoss:
    def test_small_coordinate_sample_passes(self):
        net, loss_fn = gradcheck_setup(seed=0, batch_size=4)
        report = grad_check_report(loss_fn, net.layers, h=1e-5, tol=1e-4,
                                   n_coords=40, rng=stream(0, "gradcheck"))
        assert report["checked"] >= 40
        assert report["max_rel_err"] < 1e-4
