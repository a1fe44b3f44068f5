"""Synthetic multi-domain gaze data: stylized 32x32 faces whose pupil
position is the only gaze-dependent feature, plus a binary shard format.

An identity fixes face color, face shape, eye geometry and how far the
pupil travels per radian of gaze; a domain spec then shifts the rendered
image photometrically (brightness/contrast draws, tint, pixel noise).
Train/test splits use disjoint subject ids and different domains, which
reproduces the unseen-identity, shifted-environment evaluation setting.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .augment import apply_brightness, apply_contrast
from .model import GazeLabel
from .rng import stream
from .serial import (check_magic, read_exact, read_f64_array, read_u32,
                     read_u64, read_u64_array, write_f64_array, write_u32,
                     write_u64, write_u64_array, ArchMismatchError)

SHARD_MAGIC = b"GBD1"
SHARD_VERSION = 1
IMAGE_SHAPE = (3, 32, 32)

PITCH_RANGE = (-0.5, 0.5)
YAW_RANGE = (-0.8, 0.8)

FACE_CENTER = (15.5, 16.0)  # (col, row), pixel-index coordinates; x sits on
# the grid's mirror axis so symmetric identities render mirror-symmetrically
EYE_ROW = 13.0
BACKGROUND = (0.20, 0.22, 0.25)
EYE_WHITE = (0.95, 0.95, 0.95)
PUPIL_COLOR = (0.05, 0.05, 0.05)
PUPIL_RADIUS_FRAC = 0.5

# pixel-center coordinate grids; a pixel belongs to a shape iff its center
# satisfies the shape's inequality (no anti-aliasing)
_ROWS, _COLS = np.indices((32, 32), dtype=np.float64)


@dataclass
class Identity:
    """Per-subject appearance and geometry.

    pupil_gain converts gaze angle to pupil travel: the pupil center sits
    at (pupil_gain * yaw, -pupil_gain * pitch) pixels from the eye center.
    """

    subject_id: int
    face_color: tuple[float, float, float]
    face_axes: tuple[float, float]  # (a, b) semi-axes in pixels
    eye_spacing: float
    eye_size: float
    pupil_gain: float

    def __post_init__(self):
        # both eyes, including the pupil at extreme gaze, must stay in frame
        half = self.eye_spacing / 2.0
        pupil_r = PUPIL_RADIUS_FRAC * self.eye_size
        reach_x = half + max(self.eye_size, self.pupil_gain * YAW_RANGE[1] + pupil_r)
        reach_y = max(self.eye_size, self.pupil_gain * PITCH_RANGE[1] + pupil_r)
        if FACE_CENTER[0] + reach_x > 31 or FACE_CENTER[0] - reach_x < 0:
            raise ValueError(f"identity geometry leaves the frame horizontally: {self}")
        if EYE_ROW + reach_y > 31 or EYE_ROW - reach_y < 0:
            raise ValueError(f"identity geometry leaves the frame vertically: {self}")

    def eye_centers(self) -> tuple[tuple[float, float], tuple[float, float]]:
        half = self.eye_spacing / 2.0
        return ((FACE_CENTER[0] - half, EYE_ROW), (FACE_CENTER[0] + half, EYE_ROW))


@dataclass
class DomainSpec:
    """Photometric environment of one domain."""

    domain_id: int
    brightness_mean: float = 1.0
    brightness_std: float = 0.0
    contrast_mean: float = 1.0
    contrast_std: float = 0.0
    tint: tuple[float, float, float] = (0.0, 0.0, 0.0)
    noise_std: float = 0.0


BRIGHT_CLEAN = DomainSpec(
    domain_id=0,
    brightness_mean=1.05, brightness_std=0.08,
    contrast_mean=1.0, contrast_std=0.06,
)

DIM_TINTED_NOISY = DomainSpec(
    domain_id=1,
    brightness_mean=0.60, brightness_std=0.20,
    contrast_mean=0.80, contrast_std=0.15,
    tint=(-0.04, -0.01, 0.07),
    noise_std=0.03,
)

PRESETS = {"bright-clean": BRIGHT_CLEAN, "dim-tinted-noisy": DIM_TINTED_NOISY}


def _ellipse_mask(cx: float, cy: float, ax: float, ay: float) -> np.ndarray:
    return ((_COLS - cx) / ax) ** 2 + ((_ROWS - cy) / ay) ** 2 <= 1.0


def _paint(image: np.ndarray, mask: np.ndarray, color) -> None:
    for ch in range(3):
        image[ch][mask] = color[ch]


def render(identity: Identity, gaze: GazeLabel) -> np.ndarray:
    """Deterministic clean rendering of one identity looking at `gaze`."""
    if not (PITCH_RANGE[0] <= gaze.pitch <= PITCH_RANGE[1]):
        raise ValueError(f"pitch {gaze.pitch} outside renderable range {PITCH_RANGE}")
    if not (YAW_RANGE[0] <= gaze.yaw <= YAW_RANGE[1]):
        raise ValueError(f"yaw {gaze.yaw} outside renderable range {YAW_RANGE}")
    image = np.empty(IMAGE_SHAPE, dtype=np.float64)
    for ch in range(3):
        image[ch].fill(BACKGROUND[ch])
    _paint(image, _ellipse_mask(*FACE_CENTER, *identity.face_axes), identity.face_color)
    pupil_r = PUPIL_RADIUS_FRAC * identity.eye_size
    dx = identity.pupil_gain * gaze.yaw
    dy = -identity.pupil_gain * gaze.pitch
    for ex, ey in identity.eye_centers():
        _paint(image, _ellipse_mask(ex, ey, identity.eye_size, identity.eye_size), EYE_WHITE)
    for ex, ey in identity.eye_centers():
        _paint(image, _ellipse_mask(ex + dx, ey + dy, pupil_r, pupil_r), PUPIL_COLOR)
    return image


def apply_domain(image: np.ndarray, spec: DomainSpec, rng: np.random.Generator) -> np.ndarray:
    """Shift a clean image into the domain's photometric environment."""
    fb = float(np.clip(rng.normal(spec.brightness_mean, spec.brightness_std), 0.1, 3.0)) \
        if spec.brightness_std > 0 else spec.brightness_mean
    fc = float(np.clip(rng.normal(spec.contrast_mean, spec.contrast_std), 0.1, 3.0)) \
        if spec.contrast_std > 0 else spec.contrast_mean
    out = apply_brightness(image, fb)
    out = apply_contrast(out, fc)
    out = out + np.asarray(spec.tint, dtype=np.float64)[:, None, None]
    if spec.noise_std > 0:
        out = out + rng.normal(0.0, spec.noise_std, size=out.shape)
    return np.clip(out, 0.0, 1.0)


def sample_identity(subject_id: int, rng: np.random.Generator) -> Identity:
    """Draw one identity; the ranges keep every geometry in frame and the
    pupil large enough that its offset survives rasterization cleanly."""
    return Identity(
        subject_id=subject_id,
        face_color=tuple(rng.uniform(0.35, 0.85, size=3)),
        face_axes=(rng.uniform(13.0, 14.8), rng.uniform(13.0, 14.8)),
        eye_spacing=rng.uniform(11.8, 12.6),
        eye_size=rng.uniform(5.2, 5.8),
        pupil_gain=rng.uniform(7.0, 7.8),
    )


def make_subject_id(domain_id: int, seed: int, local_index: int) -> int:
    """Globally disambiguated subject id: domain in the high digits, the
    generator seed (mod 1e6) in the middle, the local index at the end."""
    if local_index >= 10_000:
        raise ValueError("at most 10000 subjects per shard")
    return domain_id * 10**12 + (seed % 10**6) * 10**4 + local_index


@dataclass
class DatasetShard:
    images: np.ndarray  # [N,3,32,32] float64 in [0,1]
    labels: np.ndarray  # [N,2] (pitch, yaw)
    subject_ids: np.ndarray  # [N] int64
    manifest: dict

    def __len__(self) -> int:
        return len(self.subject_ids)


def generate(seed: int, n_subjects: int, samples_per_subject: int,
             spec: DomainSpec, path: str | None = None) -> DatasetShard:
    """Render a shard: identities from the seeded identity stream, gazes
    uniform over the label ranges, one independent RNG stream per sample
    so generation order is schedule-free."""
    if n_subjects < 1:
        raise ValueError("n_subjects must be >= 1")
    identities = [
        sample_identity(make_subject_id(spec.domain_id, seed, i),
                        stream(seed, "identity", spec.domain_id, i))
        for i in range(n_subjects)
    ]
    n = n_subjects * samples_per_subject
    images = np.empty((n, *IMAGE_SHAPE), dtype=np.float64)
    labels = np.empty((n, 2), dtype=np.float64)
    subject_ids = np.empty(n, dtype=np.int64)
    for i in range(n):
        identity = identities[i // samples_per_subject]
        rng = stream(seed, "sample", spec.domain_id, i)
        pitch = rng.uniform(*PITCH_RANGE)
        yaw = rng.uniform(*YAW_RANGE)
        clean = render(identity, GazeLabel(pitch, yaw))
        images[i] = apply_domain(clean, spec, rng)
        labels[i] = (pitch, yaw)
        subject_ids[i] = identity.subject_id
    domain_dict = asdict(spec)
    domain_dict["tint"] = list(domain_dict["tint"])  # keep the manifest JSON-native
    manifest = {
        "domain": domain_dict,
        "seed": seed,
        "n_subjects": n_subjects,
        "samples_per_subject": samples_per_subject,
        "subjects": [identity.subject_id for identity in identities],
        "label_ranges": {"pitch": list(PITCH_RANGE), "yaw": list(YAW_RANGE)},
    }
    shard = DatasetShard(images, labels, subject_ids, manifest)
    if path is not None:
        save_shard(shard, path)
    return shard


def save_shard(shard: DatasetShard, path: str) -> None:
    manifest = json.dumps(shard.manifest, sort_keys=True).encode("utf-8")
    n = len(shard)
    with open(path, "wb") as f:
        f.write(SHARD_MAGIC)
        write_u32(f, SHARD_VERSION)
        write_u64(f, n)
        write_u64(f, len(manifest))
        f.write(manifest)
        write_f64_array(f, shard.images)
        write_f64_array(f, shard.labels)
        write_u64_array(f, shard.subject_ids.astype(np.uint64))


def load_shard(path: str) -> DatasetShard:
    with open(path, "rb") as f:
        check_magic(f, SHARD_MAGIC)
        version = read_u32(f, "version")
        if version != SHARD_VERSION:
            raise ArchMismatchError(f"unsupported shard version {version}")
        n = read_u64(f, "sample count")
        manifest_len = read_u64(f, "manifest length")
        try:
            manifest = json.loads(read_exact(f, manifest_len, "manifest"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ArchMismatchError(f"unreadable manifest: {e}") from None
        images = read_f64_array(f, (n, *IMAGE_SHAPE), "images")
        labels = read_f64_array(f, (n, 2), "labels")
        subject_ids = read_u64_array(f, n, "subject ids")
    return DatasetShard(images, labels, subject_ids, manifest)
