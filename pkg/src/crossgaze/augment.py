"""Photometric jitter for the augmentation branch.

Brightness, contrast and saturation factors are drawn uniformly from
configured ranges and applied in that fixed order, clamping to [0,1]
only at the end.  The blend steps are arranged as p + (target - p)*(1 - f)
rather than target + (p - target)*f: algebraically identical, but exact
at f = 1 and exact on grayscale pixels, which the invariants require
bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Range = tuple[float, float]


@dataclass
class AugmentConfig:
    """Factor ranges (lo, hi); the defaults cover the photometric spread the
    shifted evaluation domains exercise."""

    brightness_range: Range = (0.6, 1.4)
    contrast_range: Range = (0.6, 1.4)
    saturation_range: Range = (0.6, 1.4)

    def validate(self) -> None:
        """Training-config rule: ranges must be positive, ordered, and
        contain 1.0 so the identity augmentation stays reachable.
        (Deliberately not enforced at construction: degenerate ranges are
        useful for pinning a factor in tests.)"""
        for name in ("brightness_range", "contrast_range", "saturation_range"):
            lo, hi = getattr(self, name)
            if not (0.0 < lo <= hi):
                raise ValueError(f"{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")
            if not (lo <= 1.0 <= hi):
                raise ValueError(f"{name} must contain 1.0, got ({lo}, {hi})")


def luminance(image: np.ndarray) -> np.ndarray:
    """Per-pixel luminance 0.299 R + 0.587 G + 0.114 B, arranged so that
    grayscale pixels reproduce their own value exactly."""
    r, g, b = image[0], image[1], image[2]
    return b + 0.299 * (r - b) + 0.587 * (g - b)


def apply_brightness(image: np.ndarray, factor: float) -> np.ndarray:
    return image * factor


def apply_contrast(image: np.ndarray, factor: float) -> np.ndarray:
    mu = image.mean()
    return image + (mu - image) * (1.0 - factor)


def apply_saturation(image: np.ndarray, factor: float) -> np.ndarray:
    lum = luminance(image)
    return image + (lum[None, :, :] - image) * (1.0 - factor)


def augment(image: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw (brightness, contrast, saturation) factors and apply them.

    The input must already be in [0,1]; the output is clamped back to it.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.min() < 0.0 or image.max() > 1.0:
        raise ValueError(
            f"image values outside [0,1]: min {image.min()}, max {image.max()}")
    fb = rng.uniform(*cfg.brightness_range)
    fc = rng.uniform(*cfg.contrast_range)
    fs = rng.uniform(*cfg.saturation_range)
    out = apply_brightness(image, fb)
    out = apply_contrast(out, fc)
    out = apply_saturation(out, fs)
    return np.clip(out, 0.0, 1.0)
