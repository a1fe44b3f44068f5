"""Training losses and the angular evaluation metric.

All losses are plain functions over (pitch, yaw) arrays or feature
batches, each paired with an explicit gradient function, so the trainer
can weight and combine contributions before backprop.  Reductions are
means over every component, keeping magnitudes comparable across batch
sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import gaze_to_vec
from .nn import NonFiniteError


@dataclass
class LossWeights:
    """Weights of the auxiliary terms; the original-branch term is fixed at 1."""

    lambda_a: float = 1.0
    lambda_m: float = 1.0
    lambda_c: float = 1.0

    def __post_init__(self):
        if self.lambda_a < 0 or self.lambda_m < 0 or self.lambda_c < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossReport:
    l_ori: float
    l_aug: float
    l_mmd: float
    l_con: float
    l_total: float


def angular_error(g, g_hat) -> float:
    """Angle between the two gaze directions, in degrees.

    The dot product is clamped to [-1, 1] before arccos so identical
    labels come out at exactly 0.
    """
    va = gaze_to_vec(g)
    vb = gaze_to_vec(g_hat)
    dot = float(np.clip(np.dot(va, vb), -1.0, 1.0))
    return float(np.degrees(np.arccos(dot)))


def mean_angular_error(labels: np.ndarray, preds: np.ndarray) -> float:
    """Mean angular error over [N,2] arrays of (pitch, yaw)."""
    return float(np.mean([angular_error(g, p) for g, p in zip(labels, preds)]))


def l1_gaze(g: np.ndarray, g_hat: np.ndarray) -> float:
    """Mean absolute per-component error between (pitch, yaw) arrays."""
    g = np.asarray(g, dtype=np.float64)
    g_hat = np.asarray(g_hat, dtype=np.float64)
    return float(np.mean(np.abs(g - g_hat)))


def l1_gaze_grad(g: np.ndarray, g_hat: np.ndarray) -> np.ndarray:
    """d l1_gaze / d g_hat; the subgradient at exact agreement is 0."""
    g = np.asarray(g, dtype=np.float64)
    g_hat = np.asarray(g_hat, dtype=np.float64)
    return np.sign(g_hat - g) / g.size


def mmd(x: np.ndarray, y: np.ndarray, sigma: float) -> float:
    """Biased squared maximum mean discrepancy with a Gaussian kernel.

    k(a,b) = exp(-||a-b||^2 / (2 sigma^2)); the estimate is
    mean k(x,x') + mean k(y,y') - 2 mean k(x,y), clamped to >= 0.
    """
    kxx, kyy, kxy = _mmd_kernels(x, y, sigma)
    val = float(kxx.mean() + kyy.mean() - 2.0 * kxy.mean())
    return max(val, 0.0)


def _mmd_kernels(x, y, sigma):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise ValueError("mmd requires non-empty batches")
    if x.shape != y.shape:
        raise ValueError(f"mmd batch shapes differ: {x.shape} vs {y.shape}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    inv = -1.0 / (2.0 * sigma * sigma)
    kxx = np.exp(inv * _sqdists(x, x))
    kyy = np.exp(inv * _sqdists(y, y))
    kxy = np.exp(inv * _sqdists(x, y))
    return kxx, kyy, kxy


def _sqdists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def mmd_grad(x: np.ndarray, y: np.ndarray, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the (unclamped) estimate w.r.t. both feature batches."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    kxx, kyy, kxy = _mmd_kernels(x, y, sigma)
    n = x.shape[0]
    scale = -2.0 / (n * n * sigma * sigma)
    dx = scale * (kxx[:, :, None] * (x[:, None, :] - x[None, :, :])).sum(axis=1)
    dx -= scale * (kxy[:, :, None] * (x[:, None, :] - y[None, :, :])).sum(axis=1)
    dy = scale * (kyy[:, :, None] * (y[:, None, :] - y[None, :, :])).sum(axis=1)
    dy -= scale * (kxy.T[:, :, None] * (y[:, None, :] - x[None, :, :])).sum(axis=1)
    return dx, dy


def median_sigma(x: np.ndarray, y: np.ndarray) -> float:
    """Median pairwise distance over the concatenated batch; 1.0 if that
    median is 0.  Computed once per step and then treated as a constant."""
    z = np.vstack([np.atleast_2d(x), np.atleast_2d(y)])
    n = z.shape[0]
    if n < 2:
        return 1.0
    d = np.sqrt(_sqdists(z, z))
    med = float(np.median(d[np.triu_indices(n, k=1)]))
    return med if med > 0.0 else 1.0


def contrast_loss(g_hat_con: np.ndarray, g_hat_ori: np.ndarray,
                  g_con: np.ndarray, g_ori: np.ndarray) -> float:
    """Mean absolute error between the predicted and annotated gaze
    differences of a positive pair; the label term corrects for the
    neighbor search returning only approximately equal gazes."""
    inner = (np.asarray(g_hat_con, dtype=np.float64) - np.asarray(g_hat_ori, dtype=np.float64)) \
        - (np.asarray(g_con, dtype=np.float64) - np.asarray(g_ori, dtype=np.float64))
    return float(np.mean(np.abs(inner)))


def contrast_loss_grad(g_hat_con, g_hat_ori, g_con, g_ori) -> tuple[np.ndarray, np.ndarray]:
    """(d/d g_hat_con, d/d g_hat_ori); gradient flows into both predictions."""
    g_hat_con = np.asarray(g_hat_con, dtype=np.float64)
    g_hat_ori = np.asarray(g_hat_ori, dtype=np.float64)
    inner = (g_hat_con - g_hat_ori) - (np.asarray(g_con, dtype=np.float64)
                                       - np.asarray(g_ori, dtype=np.float64))
    s = np.sign(inner) / inner.size
    return s, -s


def total_loss(l_ori: float, l_aug: float, l_mmd: float, l_con: float,
               weights: LossWeights) -> LossReport:
    """Weighted sum of the branch losses; rejects non-finite components."""
    for name, value in (("l_ori", l_ori), ("l_aug", l_aug),
                        ("l_mmd", l_mmd), ("l_con", l_con)):
        if not np.isfinite(value):
            raise NonFiniteError(f"loss component {name} is non-finite: {value}")
    total = l_ori + weights.lambda_a * l_aug + weights.lambda_m * l_mmd \
        + weights.lambda_c * l_con
    return LossReport(l_ori, l_aug, l_mmd, l_con, total)
