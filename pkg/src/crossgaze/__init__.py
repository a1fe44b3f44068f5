"""Cross-domain gaze regression with auxiliary consistency branches.

A framework-free float64 stack: explicit-backprop layers, a shared-weight
gaze network, photometric augmentation, exact ball-tree positive mining,
Gaussian-kernel feature alignment, a synthetic multi-domain benchmark and
an ablation/evaluation harness.
"""

from .augment import AugmentConfig, augment
from .losses import (LossReport, LossWeights, angular_error, contrast_loss,
                     l1_gaze, mean_angular_error, median_sigma, mmd)
from .model import (GazeLabel, GazeNet, forward, gaze_to_vec, init_net,
                    load_checkpoint, save_checkpoint)
from .sampler import (LabelIndex, NoPositiveError, PositiveSet, brute_force_knn,
                      build_index, draw_positive, query_knn)
from .synthdata import (BRIGHT_CLEAN, DIM_TINTED_NOISY, DatasetShard, DomainSpec,
                        Identity, apply_domain, generate, load_shard, render,
                        save_shard)
from .trainer import TrainConfig, TrainResult, infer, train

__all__ = [
    "AugmentConfig", "augment",
    "LossReport", "LossWeights", "angular_error", "contrast_loss", "l1_gaze",
    "mean_angular_error", "median_sigma", "mmd",
    "GazeLabel", "GazeNet", "forward", "gaze_to_vec", "init_net",
    "load_checkpoint", "save_checkpoint",
    "LabelIndex", "NoPositiveError", "PositiveSet", "brute_force_knn",
    "build_index", "draw_positive", "query_knn",
    "BRIGHT_CLEAN", "DIM_TINTED_NOISY", "DatasetShard", "DomainSpec", "Identity",
    "apply_domain", "generate", "load_shard", "render", "save_shard",
    "TrainConfig", "TrainResult", "infer", "train",
]
