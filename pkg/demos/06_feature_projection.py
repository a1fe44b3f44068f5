"""Project learned features to 2-D and color them by yaw.

Trains the three-branch model and the baseline, projects each one's
test-set features onto their top-2 principal axes, and writes a
side-by-side scatter.  A feature space that orders by gaze shows up as a
smooth color gradient; the reported number is the correlation between a
projection axis and yaw.
"""

from crossgaze import synthdata
from crossgaze.evalbench import extract_features, pca_top2, yaw_correlation
from crossgaze.trainer import TrainConfig, baseline_config, train

# the stock protocol scale: the feature-geometry contrast needs enough
# identities and photometric spread to show up (takes ~3 minutes)
train_shard = synthdata.generate(12, n_subjects=20, samples_per_subject=200,
                                 spec=synthdata.BRIGHT_CLEAN)
test_shard = synthdata.generate(13, n_subjects=10, samples_per_subject=200,
                                spec=synthdata.DIM_TINTED_NOISY)

config = TrainConfig(seed=0, batch_size=64, epochs=8)
full = train(config, shard=train_shard)
base = train(baseline_config(config), shard=train_shard)

panels = []
for name, result in (("baseline", base), ("three-branch", full)):
    scores, _, _ = pca_top2(extract_features(result.net, test_shard))
    corr = yaw_correlation(scores, test_shard.labels)
    panels.append((name, scores, corr))
    print(f"{name}: |corr(projection axis, yaw)| = {corr:.3f}")

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

fig, axes = plt.subplots(1, 2, figsize=(10, 4.5))
for ax, (name, scores, corr) in zip(axes, panels):
    sc = ax.scatter(scores[:, 0], scores[:, 1], c=test_shard.labels[:, 1],
                    cmap="viridis", s=12)
    ax.set_title(f"{name} (|corr| = {corr:.3f})")
    ax.set_xlabel("pc 1")
    ax.set_ylabel("pc 2")
fig.colorbar(sc, ax=axes, label="yaw (rad)")
plt.savefig("feature_projection.png", dpi=130)
print("wrote feature_projection.png")
