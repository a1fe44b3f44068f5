"""Three-branch training loop over one shared network.

Per batch: the clean images go through the original branch; the same
images, photometrically jittered, feed the augmentation branch (also run
when only feature alignment is on, since that loss compares the two
feature batches); mined cross-identity positives feed the contrast
branch.  All parameter gradients land on the single shared layer set,
then one Adam step is applied.

Randomness discipline: init, shuffling, jitter factors and positive
draws each use their own stream off the master seed, and a loss term
whose weight is zero contributes nothing to the gradient accumulators,
so disabling a branch and zeroing its weight produce bit-identical
parameter trajectories.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .augment import AugmentConfig, augment
from .losses import (LossReport, LossWeights, contrast_loss, contrast_loss_grad,
                     l1_gaze, l1_gaze_grad, mean_angular_error, median_sigma,
                     mmd, mmd_grad, total_loss)
from .model import (GazeNet, backward_into, cache_signature, forward,
                    forward_with_cache, init_net, save_checkpoint)
from .nn import LayerAdamState, NonFiniteError, adam_step
from .rng import stream
from .sampler import (LabelIndex, NoPositiveError, build_index, draw_positive,
                      query_knn)
from .synthdata import BRIGHT_CLEAN, DatasetShard, generate, load_shard

BRANCHES = ("aug", "con", "mmd")


class ConfigError(ValueError):
    """Invalid training configuration."""


@dataclass
class TrainConfig:
    seed: int = 0
    batch_size: int = 64
    learning_rate: float = 1e-4
    epochs: int = 30
    weights: LossWeights = field(default_factory=LossWeights)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    knn_k: int = 5
    branches: frozenset = frozenset(BRANCHES)
    train_data: str = ""
    out_dir: str = ""

    def validate(self) -> None:
        unknown = set(self.branches) - set(BRANCHES)
        if unknown:
            raise ConfigError(f"unknown branches: {sorted(unknown)}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if "mmd" in self.branches and self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 when the mmd branch is enabled")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.knn_k < 1:
            raise ConfigError("knn_k must be >= 1")
        if "aug" in self.branches or "mmd" in self.branches:
            try:
                self.augment.validate()
            except ValueError as e:
                raise ConfigError(str(e)) from None

    def to_json(self) -> str:
        d = asdict(self)
        d["branches"] = sorted(self.branches)
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "weights" in d:
            d["weights"] = LossWeights(**d["weights"])
        if "augment" in d:
            aug = {k: tuple(v) for k, v in d["augment"].items()}
            d["augment"] = AugmentConfig(**aug)
        if "branches" in d:
            d["branches"] = frozenset(d["branches"])
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json_file(cls, path: str) -> "TrainConfig":
        # malformed JSON propagates as a format error; bad field values
        # surface as ConfigError (a usage problem)
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass
class MetricRecord:
    step: int
    epoch: int
    l_ori: float
    l_aug: float
    l_mmd: float
    l_con: float
    l_total: float
    wall_time: float  # kept in memory; excluded from the JSONL so logs are
    # byte-identical across same-seed runs

    def to_json_line(self) -> str:
        return json.dumps({
            "step": self.step, "epoch": self.epoch,
            "l_ori": self.l_ori, "l_aug": self.l_aug, "l_mmd": self.l_mmd,
            "l_con": self.l_con, "l_total": self.l_total,
        }, sort_keys=True)


@dataclass
class TrainResult:
    net: GazeNet
    records: list[MetricRecord]
    checkpoint_path: str | None
    metrics_path: str | None
    skipped_positives: int


@dataclass
class _Batch:
    """Everything one optimization step consumes, assembled up front so the
    same computation can be driven by the gradient checker."""

    images: np.ndarray  # [B,3,32,32]
    labels: np.ndarray  # [B,2]
    aug_images: np.ndarray | None = None
    pos_images: np.ndarray | None = None
    pos_labels: np.ndarray | None = None
    pos_mask: np.ndarray | None = None  # items with an available positive


def branch_losses(net: GazeNet, batch: _Batch, weights: LossWeights,
                  branches: frozenset, sigma: float | None = None,
                  compute_grads: bool = True,
                  want_signature: bool = False) -> tuple[LossReport, bytes | None]:
    """Forward all enabled branches, optionally backprop, and return the
    loss report.

    With `want_signature`, also hash the active piecewise-linear region
    (ReLU masks, pool argmaxes, L1 signs) so the gradient checker can
    detect kink crossings; training skips this.
    """
    b = len(batch.labels)
    hasher = hashlib.blake2b(digest_size=16) if want_signature else None

    ori = [forward_with_cache(net, batch.images[i]) for i in range(b)]
    feats_ori = np.stack([f for f, _, _ in ori])
    ghat_ori = np.stack([g for _, g, _ in ori])
    if hasher:
        for _, _, cache in ori:
            hasher.update(cache_signature(cache))
        hasher.update(np.sign(ghat_ori - batch.labels).tobytes())

    aug = None
    if batch.aug_images is not None:
        aug = [forward_with_cache(net, batch.aug_images[i]) for i in range(b)]
        feats_aug = np.stack([f for f, _, _ in aug])
        ghat_aug = np.stack([g for _, g, _ in aug])
        if hasher:
            for _, _, cache in aug:
                hasher.update(cache_signature(cache))

    con = None
    mask = batch.pos_mask
    if batch.pos_images is not None and mask is not None and mask.any():
        con = [forward_with_cache(net, batch.pos_images[i]) if mask[i] else None
               for i in range(b)]
        ghat_con = np.zeros((b, 2))
        for i, c in enumerate(con):
            if c is not None:
                ghat_con[i] = c[1]
                if hasher:
                    hasher.update(cache_signature(c[2]))

    l_ori = l1_gaze(batch.labels, ghat_ori)
    l_aug = 0.0
    l_mmd = 0.0
    l_con = 0.0
    if "aug" in branches and aug is not None:
        l_aug = l1_gaze(batch.labels, ghat_aug)
        if hasher:
            hasher.update(np.sign(ghat_aug - batch.labels).tobytes())
    if "mmd" in branches and aug is not None:
        if sigma is None:
            sigma = median_sigma(feats_ori, feats_aug)
        l_mmd = mmd(feats_ori, feats_aug, sigma)
    if "con" in branches and con is not None:
        if hasher:
            inner_sign = np.sign((ghat_con[mask] - ghat_ori[mask])
                                 - (batch.pos_labels[mask] - batch.labels[mask]))
            hasher.update(inner_sign.tobytes())
        l_con = contrast_loss(ghat_con[mask], ghat_ori[mask],
                              batch.pos_labels[mask], batch.labels[mask])
    report = total_loss(l_ori, l_aug, l_mmd, l_con, weights)

    if compute_grads:
        d_ghat_ori = l1_gaze_grad(batch.labels, ghat_ori)
        d_feat_ori = None
        d_feat_aug = None
        d_ghat_aug = None
        d_ghat_con = None
        if "aug" in branches and aug is not None and weights.lambda_a != 0.0:
            d_ghat_aug = weights.lambda_a * l1_gaze_grad(batch.labels, ghat_aug)
        if "mmd" in branches and aug is not None and weights.lambda_m != 0.0:
            dx, dy = mmd_grad(feats_ori, feats_aug, sigma)
            d_feat_ori = weights.lambda_m * dx
            d_feat_aug = weights.lambda_m * dy
        if "con" in branches and con is not None and weights.lambda_c != 0.0:
            dc, do = contrast_loss_grad(ghat_con[mask], ghat_ori[mask],
                                        batch.pos_labels[mask], batch.labels[mask])
            d_ghat_con = np.zeros((b, 2))
            d_ghat_con[mask] = weights.lambda_c * dc
            d_ghat_ori[mask] += weights.lambda_c * do
        for i in range(b):
            backward_into(net, ori[i][2], d_ghat_ori[i],
                          None if d_feat_ori is None else d_feat_ori[i])
        if aug is not None and (d_ghat_aug is not None or d_feat_aug is not None):
            zero2 = np.zeros(2)
            for i in range(b):
                backward_into(net, aug[i][2],
                              zero2 if d_ghat_aug is None else d_ghat_aug[i],
                              None if d_feat_aug is None else d_feat_aug[i])
        if con is not None and d_ghat_con is not None:
            for i in range(b):
                if mask[i]:
                    backward_into(net, con[i][2], d_ghat_con[i])

    return report, hasher.digest() if hasher else None


def _assemble_batch(shard: DatasetShard, rows: np.ndarray, config: TrainConfig,
                    index: LabelIndex | None, rng_aug, rng_pos) -> tuple[_Batch, int]:
    """Gather images/labels plus per-branch companions; returns the batch and
    the number of items whose positive lookup came up empty."""
    images = shard.images[rows]
    labels = shard.labels[rows]
    batch = _Batch(images=images, labels=labels)
    if "aug" in config.branches or "mmd" in config.branches:
        batch.aug_images = np.stack(
            [augment(images[i], config.augment, rng_aug) for i in range(len(rows))])
    skipped = 0
    if "con" in config.branches:
        assert index is not None
        b = len(rows)
        pos_rows = np.zeros(b, dtype=np.int64)
        mask = np.zeros(b, dtype=bool)
        for i, row in enumerate(rows):
            try:
                pos = query_knn(index, shard.labels[row], int(shard.subject_ids[row]),
                                config.knn_k, anchor_id=int(row))
            except NoPositiveError:
                skipped += 1
                continue
            pos_rows[i] = draw_positive(pos, rng_pos)
            mask[i] = True
        batch.pos_images = shard.images[pos_rows]
        batch.pos_labels = shard.labels[pos_rows]
        batch.pos_mask = mask
    return batch, skipped


def train(config: TrainConfig, shard: DatasetShard | None = None,
          step_callback=None) -> TrainResult:
    """Run the configured training; returns the trained net and metrics.

    If `config.out_dir` is set, writes `metrics.jsonl` and `model.ckpt`
    there.  `step_callback(step, net)`, when given, runs after each
    optimizer step.
    """
    config.validate()
    if shard is None:
        if not os.path.exists(config.train_data):
            raise FileNotFoundError(f"training dataset not found: {config.train_data}")
        shard = load_shard(config.train_data)
    n = len(shard)
    if n < config.batch_size:
        raise ConfigError(f"dataset has {n} samples, fewer than one batch "
                          f"of {config.batch_size}")

    net = init_net(stream(config.seed, "init"))
    opt = [LayerAdamState.for_layer(layer, config.learning_rate) for layer in net.layers]
    rng_shuffle = stream(config.seed, "shuffle")
    rng_aug = stream(config.seed, "augment")
    rng_pos = stream(config.seed, "positive")

    index = None
    if "con" in config.branches:
        index = build_index(shard.labels, np.arange(n), shard.subject_ids)

    records: list[MetricRecord] = []
    skipped_positives = 0
    t0 = time.perf_counter()
    step = 0
    for epoch in range(config.epochs):
        perm = rng_shuffle.permutation(n)
        for start in range(0, n - config.batch_size + 1, config.batch_size):
            rows = perm[start:start + config.batch_size]
            batch, skipped = _assemble_batch(shard, rows, config, index,
                                             rng_aug, rng_pos)
            skipped_positives += skipped
            net.zero_grads()
            try:
                report, _ = branch_losses(net, batch, config.weights,
                                          config.branches, compute_grads=True)
            except NonFiniteError as e:
                raise NonFiniteError(
                    f"{e}; batch sample rows {sorted(int(r) for r in rows)}") from None
            for layer, state in zip(net.layers, opt):
                adam_step(layer, state)
            step += 1
            records.append(MetricRecord(
                step=step, epoch=epoch, l_ori=report.l_ori, l_aug=report.l_aug,
                l_mmd=report.l_mmd, l_con=report.l_con, l_total=report.l_total,
                wall_time=time.perf_counter() - t0))
            if step_callback is not None:
                step_callback(step, net)

    checkpoint_path = None
    metrics_path = None
    if config.out_dir:
        os.makedirs(config.out_dir, exist_ok=True)
        metrics_path = os.path.join(config.out_dir, "metrics.jsonl")
        with open(metrics_path, "w") as f:
            for record in records:
                f.write(record.to_json_line() + "\n")
        checkpoint_path = os.path.join(config.out_dir, "model.ckpt")
        save_checkpoint(net, checkpoint_path, step=step, seed=config.seed)
    return TrainResult(net, records, checkpoint_path, metrics_path, skipped_positives)


def infer(net: GazeNet, shard: DatasetShard) -> tuple[np.ndarray, float]:
    """Original branch only: per-sample (pitch, yaw) predictions and the
    mean angular error in degrees."""
    preds = np.empty((len(shard), 2), dtype=np.float64)
    for i in range(len(shard)):
        _, preds[i] = forward(net, shard.images[i])
    return preds, mean_angular_error(shard.labels, preds)


def baseline_config(config: TrainConfig) -> TrainConfig:
    """The same run with every auxiliary branch removed."""
    return replace(config, branches=frozenset())


def gradcheck_setup(seed: int, batch_size: int = 8,
                    shard: DatasetShard | None = None):
    """Freshly initialized net plus a deterministic full-loss closure for the
    gradient checker.

    The batch, its jittered copies, the mined positives and the kernel
    bandwidth are all frozen up front, so the closure is a fixed function
    of the parameters; the checker then perturbs only those.
    """
    config = TrainConfig(seed=seed, batch_size=batch_size, knn_k=3)
    if shard is None:
        per_subject = max(2, (2 * batch_size) // 4)
        shard = generate(seed, n_subjects=4, samples_per_subject=per_subject,
                         spec=BRIGHT_CLEAN)
    net = init_net(stream(seed, "init"))
    index = build_index(shard.labels, np.arange(len(shard)), shard.subject_ids)
    rows = stream(seed, "shuffle").permutation(len(shard))[:batch_size]
    batch, _ = _assemble_batch(shard, rows, config, index,
                               stream(seed, "augment"), stream(seed, "positive"))
    feats_ori = np.stack([forward(net, batch.images[i])[0] for i in range(batch_size)])
    feats_aug = np.stack([forward(net, batch.aug_images[i])[0] for i in range(batch_size)])
    sigma = median_sigma(feats_ori, feats_aug)
    weights = config.weights
    branches = config.branches

    def loss_fn(compute_grads: bool):
        report, signature = branch_losses(net, batch, weights, branches,
                                          sigma=sigma, compute_grads=compute_grads,
                                          want_signature=True)
        return report.l_total, signature

    return net, loss_fn
