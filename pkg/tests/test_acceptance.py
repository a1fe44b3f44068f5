"""Acceptance suite: one test per acceptance criterion, each printing a
PASS/FAIL line (run with `pytest tests/test_acceptance.py -v -s`).

The cross-domain generalization and feature-structure criteria share one
expensive fixture (six trained models on the stock task); everything else
runs on purpose-built small inputs at the stated tolerances.
"""

import json
import math
import time

import numpy as np
import pytest

from crossgaze import evalbench, losses, sampler, synthdata
from crossgaze.cli import main as cli_main
from crossgaze.model import load_checkpoint, save_checkpoint
from crossgaze.nn import grad_check_report
from crossgaze.rng import stream
from crossgaze.trainer import (TrainConfig, baseline_config, gradcheck_setup,
                               infer, train)


def criterion(name: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    if detail:
        line += f" — {detail}"
    print(line, flush=True)
    assert ok, line


# ---------------------------------------------------------------------------
# stock cross-domain task: 20x200 bright-clean train, 10 unseen subjects on
# each side, 3 seeds, full method vs baseline
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def stock():
    t0 = time.perf_counter()
    train_a = synthdata.generate(100, 20, 200, synthdata.BRIGHT_CLEAN)
    held_a = synthdata.generate(101, 10, 200, synthdata.BRIGHT_CLEAN)
    test_b = synthdata.generate(102, 10, 200, synthdata.DIM_TINTED_NOISY)
    config = TrainConfig(seed=0, epochs=8)
    bar_results, base_results = [], []
    bar = evalbench.run_task(train_a, test_b, config, n_seeds=3,
                             keep_results=bar_results)
    base = evalbench.run_task(train_a, test_b, baseline_config(config), n_seeds=3,
                              keep_results=base_results)
    held_errors = [infer(r.net, held_a)[1] for r in base_results]
    correlations = []
    for bar_r, base_r in zip(bar_results, base_results):
        corr = {}
        for name, result in (("bar", bar_r), ("base", base_r)):
            feats = evalbench.extract_features(result.net, test_b)
            scores, _, _ = evalbench.pca_top2(feats)
            corr[name] = evalbench.yaw_correlation(scores, test_b.labels)
        correlations.append(corr)
    return {
        "bar": bar, "base": base,
        "held_a_errors": held_errors,
        "correlations": correlations,
        "elapsed": time.perf_counter() - t0,
    }


class TestCriteria:
    def test_mmd_properties(self):
        rng = np.random.default_rng(0)
        ok = True
        for _ in range(100):
            n, d = int(rng.integers(1, 9)), int(rng.integers(1, 9))
            x = rng.normal(size=(n, d))
            y = rng.normal(size=(n, d))
            sigma = float(rng.uniform(0.3, 3.0))
            ok &= losses.mmd(x, x.copy(), sigma) < 1e-12
            ok &= abs(losses.mmd(x, y, sigma) - losses.mmd(y, x, sigma)) < 1e-12
            ok &= losses.mmd(x, y, sigma) >= 0.0
            t = float(rng.uniform(-2, 2))
            closed = 2.0 - 2.0 * math.exp(-t * t / (2 * sigma * sigma))
            ok &= abs(losses.mmd([[0.0]], [[t]], sigma) - closed) < 1e-12
        criterion("MMD properties (identity, symmetry, non-negativity, "
                  "closed form)", ok, "100 random batches")

    def test_angular_error_metric(self):
        ok = losses.angular_error((0.2, -0.3), (0.2, -0.3)) == 0.0
        ok &= abs(losses.angular_error((0.0, 0.0), (0.0, math.pi / 2)) - 90.0) <= 1e-9
        rng = np.random.default_rng(1)
        for _ in range(1000):
            a = rng.uniform((-1.5, -3.1), (1.5, 3.1))
            b = rng.uniform((-1.5, -3.1), (1.5, 3.1))
            ok &= losses.angular_error(a, b) == losses.angular_error(b, a)
        criterion("Angular error metric (zero, orthogonal 90deg, symmetry)", ok)

    def test_knn_oracle(self, tmp_path):
        rng = np.random.default_rng(2)
        labels = rng.uniform((-0.5, -0.8), (0.5, 0.8), (1000, 2))
        sids = np.arange(1000)
        subs = rng.integers(20, size=1000)
        index = sampler.build_index(labels, sids, subs)
        ok = True
        for _ in range(50):
            row = int(rng.integers(1000))
            for k in (1, 5, 10):
                tree = sampler.query_knn(index, labels[row], int(subs[row]), k)
                brute = sampler.brute_force_knn(labels, sids, subs,
                                                labels[row], int(subs[row]), k)
                ok &= tree.neighbors == brute.neighbors
        shard_path = str(tmp_path / "knn.shard")
        synthdata.generate(7, 10, 100, synthdata.BRIGHT_CLEAN, shard_path)
        exit_code = cli_main(["knn-check", "--data", shard_path, "--queries", "50"])
        ok &= exit_code == 0
        criterion("KNN oracle (tree == brute force, 50 queries x k in "
                  "{1,5,10}; knn-check exit 0)", ok)

    def test_gradient_correctness(self):
        t0 = time.perf_counter()
        net, loss_fn = gradcheck_setup(seed=0, batch_size=8)
        report = grad_check_report(loss_fn, net.layers, h=1e-5, tol=1e-4,
                                   n_coords=200, rng=stream(0, "gradcheck"))
        elapsed = time.perf_counter() - t0
        ok = report["max_rel_err"] < 1e-4 and report["checked"] >= 200 and elapsed < 60
        criterion("Gradient correctness (full loss, batch 8, >=200 coords)", ok,
                  f"max rel err {report['max_rel_err']:.2e}, "
                  f"{report['checked']} coords, {elapsed:.1f}s")

    def test_reduction_to_baseline(self):
        shard = synthdata.generate(50, 10, 64, synthdata.BRIGHT_CLEAN)
        traces = {}
        for name, config in (
            ("zero-weights", TrainConfig(seed=3, epochs=10,
                                         weights=losses.LossWeights(0.0, 0.0, 0.0))),
            ("disabled", TrainConfig(seed=3, epochs=10, branches=frozenset())),
        ):
            digests = []
            train(config, shard=shard,
                  step_callback=lambda step, net: digests.append(net.param_digest()))
            traces[name] = digests
        n = len(traces["zero-weights"])
        ok = n >= 100 and traces["zero-weights"] == traces["disabled"]
        criterion("Reduction to baseline (zero weights == disabled branches, "
                  "bit-identical)", ok, f"{n} steps compared")

    def test_ablation_grid_shape(self, tmp_path):
        tr = str(tmp_path / "tr.shard")
        te = str(tmp_path / "te.shard")
        synthdata.generate(60, 3, 20, synthdata.BRIGHT_CLEAN, tr)
        synthdata.generate(61, 2, 10, synthdata.DIM_TINTED_NOISY, te)
        config = TrainConfig(seed=0, batch_size=8, epochs=1, knn_k=2)
        g1 = evalbench.run_ablation([("a2b", tr, te)], config, n_seeds=1)
        g2 = evalbench.run_ablation([("a2b", tr, te)], config, n_seeds=1)
        subsets = [tuple(r["branches"]) for r in g1.rows]
        ok = subsets == [tuple(s) for s in evalbench.ABLATION_ROWS]
        ok &= g1.rows[0]["relative_improvement"] == 0.0
        ok &= all(r["average_error"] > 0.0 for r in g1.rows)
        ok &= g1.to_json() == g2.to_json()
        criterion("Ablation grid (8 rows, baseline at 0%, deterministic)", ok)

    def test_format_round_trips(self, tmp_path):
        shard_path = str(tmp_path / "rt.shard")
        shard = synthdata.generate(70, 2, 5, synthdata.BRIGHT_CLEAN, shard_path)
        reloaded = synthdata.load_shard(shard_path)
        ok = (np.array_equal(shard.images, reloaded.images)
              and np.array_equal(shard.labels, reloaded.labels)
              and np.array_equal(shard.subject_ids, reloaded.subject_ids))

        from crossgaze.model import init_net
        net = init_net(stream(4, "init"))
        ckpt_path = str(tmp_path / "rt.ckpt")
        save_checkpoint(net, ckpt_path, step=5, seed=4)
        loaded, _, _ = load_checkpoint(ckpt_path)
        ok &= net.param_digest() == loaded.param_digest()

        bad_magic = str(tmp_path / "bad_magic.ckpt")
        raw = bytearray(open(ckpt_path, "rb").read())
        raw[:4] = b"????"
        open(bad_magic, "wb").write(bytes(raw))
        ok &= cli_main(["eval", "--ckpt", bad_magic, "--data", shard_path]) == 3

        truncated = str(tmp_path / "trunc.shard")
        raw = open(shard_path, "rb").read()
        open(truncated, "wb").write(raw[:len(raw) - 64])
        ok &= cli_main(["eval", "--ckpt", ckpt_path, "--data", truncated]) == 3
        criterion("Format round trips (bit-identical reload; corruption "
                  "rejected with exit 3)", ok)

    def test_end_to_end_determinism(self, tmp_path):
        artifacts = []
        for run in ("r1", "r2"):
            root = tmp_path / run
            root.mkdir()
            data = str(root / "train.shard")
            test = str(root / "test.shard")
            assert cli_main(["gen-data", "--seed", "80", "--subjects", "4",
                             "--per-subject", "30", "--domain", "bright-clean",
                             "--out", data]) == 0
            assert cli_main(["gen-data", "--seed", "81", "--subjects", "2",
                             "--per-subject", "10", "--domain", "dim-tinted-noisy",
                             "--out", test]) == 0
            cfg = {"seed": 5, "batch_size": 16, "epochs": 2, "knn_k": 3,
                   "train_data": data, "out_dir": str(root / "out")}
            cfg_path = str(root / "cfg.json")
            json.dump(cfg, open(cfg_path, "w"))
            assert cli_main(["train", "--config", cfg_path]) == 0
            assert cli_main(["eval", "--ckpt", str(root / "out" / "model.ckpt"),
                             "--data", test]) == 0
            artifacts.append((open(data, "rb").read(),
                              open(root / "out" / "metrics.jsonl", "rb").read(),
                              open(root / "out" / "model.ckpt", "rb").read()))
        ok = artifacts[0] == artifacts[1]
        criterion("End-to-end determinism (gen-data -> train -> eval twice, "
                  "byte-identical logs and checkpoints)", ok)

    def test_cross_domain_generalization(self, stock):
        bar, base = stock["bar"], stock["base"]
        reduction = (base.mean_error - bar.mean_error) / base.mean_error
        held = float(np.mean(stock["held_a_errors"]))
        gap_ok = all(h < base.mean_error for h in stock["held_a_errors"])
        ok = (bar.mean_error < base.mean_error and reduction >= 0.05
              and gap_ok and stock["elapsed"] < 15 * 60)
        criterion("Cross-domain generalization (full method vs baseline, "
                  "3 seeds, reduction >= 5%)", ok,
                  f"baseline {base.mean_error:.2f}±{base.std_error:.2f} deg, "
                  f"full {bar.mean_error:.2f}±{bar.std_error:.2f} deg "
                  f"({reduction * 100:.1f}% lower; held-out same-domain "
                  f"{held:.2f} deg; {stock['elapsed']:.0f}s)")

    def test_feature_structure(self, stock):
        wins = sum(1 for c in stock["correlations"] if c["bar"] > c["base"])
        detail = ", ".join(f"seed{i}: {c['base']:.3f}->{c['bar']:.3f}"
                           for i, c in enumerate(stock["correlations"]))
        criterion("Feature structure (projection axis vs yaw correlation, "
                  "full method beats baseline on >= 2 of 3 seeds)",
                  wins >= 2, f"{wins}/3 seeds; {detail}")
