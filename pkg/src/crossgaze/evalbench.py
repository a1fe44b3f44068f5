"""Cross-domain evaluation: seeded task runs, the 8-row ablation grid over
the auxiliary-loss subsets, and a 2-D feature projection export.

The projection uses plain PCA (power iteration with deflation) rather
than a stochastic embedding so repeated exports are identical; the
gaze-orderedness of feature space is then quantifiable as the
correlation between a projection axis and the yaw label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .model import GazeNet, forward
from .synthdata import DatasetShard, load_shard
from .trainer import TrainConfig, TrainResult, train, infer

# Ablation rows in their canonical order: baseline first, single losses,
# pairs, then the full method.
ABLATION_ROWS: tuple[tuple[str, ...], ...] = (
    (), ("aug",), ("con",), ("mmd",),
    ("aug", "con"), ("aug", "mmd"), ("con", "mmd"),
    ("aug", "con", "mmd"),
)


class ProtocolError(ValueError):
    """Evaluation protocol violation (e.g. subject leakage across shards)."""


@dataclass
class TaskResult:
    mean_error: float
    std_error: float  # sample std over seeds; 0 for a single seed
    per_seed: list[float]


@dataclass
class AblationGrid:
    rows: list[dict]  # one dict per branch subset, in ABLATION_ROWS order

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows}, indent=2, sort_keys=True)

    def format_table(self) -> str:
        tasks = self.rows[0]["tasks"]
        header = ["branches"] + [t["name"] for t in tasks] + ["average", "vs baseline"]
        lines = ["  ".join(f"{h:>18}" for h in header)]
        for row in self.rows:
            label = "+".join(row["branches"]) or "(baseline)"
            cells = [f"{t['mean_error']:.3f} ± {t['std_error']:.3f}" for t in row["tasks"]]
            cells.append(f"{row['average_error']:.3f}")
            cells.append(f"{100.0 * row['relative_improvement']:+.2f}%")
            lines.append("  ".join(f"{c:>18}" for c in [label] + cells))
        return "\n".join(lines)


def _check_disjoint_subjects(train_shard: DatasetShard, test_shard: DatasetShard) -> None:
    overlap = set(train_shard.subject_ids.tolist()) & set(test_shard.subject_ids.tolist())
    if overlap:
        raise ProtocolError(
            f"train and test shards share subjects {sorted(overlap)[:5]}; "
            "cross-domain evaluation requires unseen identities")


def run_task(train_shard: DatasetShard, test_shard: DatasetShard,
             config: TrainConfig, n_seeds: int,
             keep_results: list[TrainResult] | None = None) -> TaskResult:
    """Train with seeds seed..seed+n_seeds-1 and report mean +- sample std of
    the test-shard angular error, as a pure function of its inputs."""
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    _check_disjoint_subjects(train_shard, test_shard)
    errors = []
    for i in range(n_seeds):
        result = train(replace(config, seed=config.seed + i, out_dir=""),
                       shard=train_shard)
        _, err = infer(result.net, test_shard)
        errors.append(err)
        if keep_results is not None:
            keep_results.append(result)
    std = float(np.std(errors, ddof=1)) if n_seeds > 1 else 0.0
    return TaskResult(float(np.mean(errors)), std, errors)


def run_ablation(tasks: list[tuple[str, str, str]], config: TrainConfig,
                 n_seeds: int) -> AblationGrid:
    """Run every subset of the auxiliary losses over the given
    (name, train_path, test_path) tasks.

    Each row reports per-task mean/std, the across-task average, and the
    relative improvement (baseline - row) / baseline on that average.
    """
    if not tasks:
        raise ValueError("at least one task is required")
    shards = [(name, load_shard(tr), load_shard(te)) for name, tr, te in tasks]
    rows = []
    for subset in ABLATION_ROWS:
        row_cfg = replace(config, branches=frozenset(subset))
        task_cells = []
        for name, train_shard, test_shard in shards:
            res = run_task(train_shard, test_shard, row_cfg, n_seeds)
            task_cells.append({"name": name, "mean_error": res.mean_error,
                               "std_error": res.std_error, "per_seed": res.per_seed})
        avg = float(np.mean([t["mean_error"] for t in task_cells]))
        rows.append({"branches": list(subset), "tasks": task_cells,
                     "average_error": avg})
    base = rows[0]["average_error"]
    for row in rows:
        row["relative_improvement"] = (base - row["average_error"]) / base
    return AblationGrid(rows)


def power_iteration(matrix: np.ndarray, tol: float = 1e-10,
                    max_iter: int = 10_000) -> tuple[float, np.ndarray]:
    """Dominant eigenpair of a symmetric PSD matrix by power iteration."""
    rng = np.random.default_rng(np.random.SeedSequence((0x9E3779B9,)))
    v = rng.standard_normal(matrix.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = matrix @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0, v  # matrix annihilates v: zero eigenvalue
        w /= norm
        if w @ v < 0:
            w = -w
        if np.linalg.norm(w - v) < tol:
            v = w
            break
        v = w
    return float(v @ matrix @ v), v


def pca_top2(features: np.ndarray, tol: float = 1e-10,
             max_iter: int = 10_000) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top-2 principal axes of [N,D] features via deflated power iteration.

    Returns (centered_scores[N,2], axis1, axis2); raises on rank-0 input.
    """
    x = np.asarray(features, dtype=np.float64)
    centered = x - x.mean(axis=0)
    denom = max(len(x) - 1, 1)
    cov = centered.T @ centered / denom
    if np.trace(cov) <= 0.0:
        raise ValueError("feature covariance has rank 0 (all features identical)")
    lam1, v1 = power_iteration(cov, tol, max_iter)
    deflated = cov - lam1 * np.outer(v1, v1)
    _, v2 = power_iteration(deflated, tol, max_iter)
    v2 = v2 - (v2 @ v1) * v1  # re-orthogonalize against roundoff drift
    norm = np.linalg.norm(v2)
    if norm > 0:
        v2 /= norm
    scores = np.stack([centered @ v1, centered @ v2], axis=1)
    return scores, v1, v2


def extract_features(net: GazeNet, shard: DatasetShard) -> np.ndarray:
    feats = np.empty((len(shard), net.feature_dim), dtype=np.float64)
    for i in range(len(shard)):
        feats[i], _ = forward(net, shard.images[i])
    return feats


def export_projection(net: GazeNet, shard: DatasetShard, out_path: str) -> np.ndarray:
    """Write `x,y,pitch,yaw` CSV of the PCA-projected test features; returns
    the [N,2] scores."""
    scores, _, _ = pca_top2(extract_features(net, shard))
    with open(out_path, "w") as f:
        f.write("x,y,pitch,yaw\n")
        for (x, y), (pitch, yaw) in zip(scores, shard.labels):
            f.write(f"{float(x)!r},{float(y)!r},{float(pitch)!r},{float(yaw)!r}\n")
    return scores


def yaw_correlation(scores: np.ndarray, labels: np.ndarray) -> float:
    """max(|corr(x, yaw)|, |corr(y, yaw)|): how gaze-ordered the projected
    feature space is along its principal axes."""
    yaw = labels[:, 1]
    cx = np.corrcoef(scores[:, 0], yaw)[0, 1]
    cy = np.corrcoef(scores[:, 1], yaw)[0, 1]
    return float(max(abs(cx), abs(cy)))
