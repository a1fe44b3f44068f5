"""The gaze network: a small conv feature extractor and a dense head.

One parameter set serves every training branch; callers that run several
forward passes per step keep each pass's cache and feed them back through
`backward_into`, which accumulates gradients on the shared layers.

Checkpoints are a little-endian binary container (magic "GBC1"): version,
an architecture descriptor in JSON, step counter, master seed, then the
raw float64 weights in layer order.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .serial import (ArchMismatchError, check_magic, read_exact, read_f64_array,
                     read_u32, read_u64, write_f64_array, write_u32, write_u64)

CHECKPOINT_MAGIC = b"GBC1"
CHECKPOINT_VERSION = 1
INPUT_SHAPE = (3, 32, 32)
FEATURE_DIM = 64


@dataclass
class GazeLabel:
    """Gaze direction as vertical (pitch) and horizontal (yaw) angles, radians."""

    pitch: float
    yaw: float

    def __post_init__(self):
        if not (-math.pi / 2 <= self.pitch <= math.pi / 2):
            raise ValueError(f"pitch {self.pitch} outside [-pi/2, pi/2]")
        if not (-math.pi < self.yaw <= math.pi):
            raise ValueError(f"yaw {self.yaw} outside (-pi, pi]")

    def as_array(self) -> np.ndarray:
        return np.array([self.pitch, self.yaw], dtype=np.float64)


def gaze_to_vec(g) -> np.ndarray:
    """(pitch, yaw) -> unit 3-vector.

    Convention: x right, y up, z forward out of the face, so (0, 0) looks
    straight ahead at (0, 0, 1) and positive pitch tilts up.
    """
    if isinstance(g, GazeLabel):
        pitch, yaw = g.pitch, g.yaw
    else:
        pitch, yaw = float(g[0]), float(g[1])
    cp = math.cos(pitch)
    return np.array([cp * math.sin(yaw), math.sin(pitch), cp * math.cos(yaw)])


@dataclass
class GazeNet:
    """conv(3->8) / conv(8->16) extractor, dense(1024->64) feature stage,
    dense(64->2) head regressing (pitch, yaw) directly."""

    conv1: nn.LayerParams
    conv2: nn.LayerParams
    fc1: nn.LayerParams
    head: nn.LayerParams
    feature_dim: int = FEATURE_DIM

    @property
    def layers(self) -> list[nn.LayerParams]:
        return [self.conv1, self.conv2, self.fc1, self.head]

    @property
    def feature_layers(self) -> list[nn.LayerParams]:
        return [self.conv1, self.conv2, self.fc1]

    def zero_grads(self) -> None:
        for layer in self.layers:
            layer.zero_grads()

    def param_bytes(self) -> bytes:
        return b"".join(np.ascontiguousarray(t, dtype="<f8").tobytes()
                        for layer in self.layers for t in layer.tensors)

    def param_digest(self) -> str:
        return hashlib.sha256(self.param_bytes()).hexdigest()


def init_net(rng: np.random.Generator) -> GazeNet:
    """Fresh network; draw order fixes the init for a given generator state."""
    conv1 = nn.conv2d_params(3, 8, rng)
    conv2 = nn.conv2d_params(8, 16, rng)
    fc1 = nn.dense_params(16 * 8 * 8, FEATURE_DIM, rng)
    head = nn.dense_params(FEATURE_DIM, 2, rng)
    return GazeNet(conv1, conv2, fc1, head)


def forward_with_cache(net: GazeNet, image: np.ndarray):
    """Run one image through the net, keeping every intermediate needed by
    backward_into.  Returns (features, gaze, cache)."""
    if image.shape != INPUT_SHAPE:
        raise nn.ShapeError(f"expected image shape {INPUT_SHAPE}, got {tuple(image.shape)}")
    a1 = nn.conv2d_forward(image, net.conv1)
    r1 = nn.relu(a1)
    p1, idx1 = nn.maxpool2x2(r1)
    a2 = nn.conv2d_forward(p1, net.conv2)
    r2 = nn.relu(a2)
    p2, idx2 = nn.maxpool2x2(r2)
    flat = p2.reshape(-1)
    a3 = nn.dense_forward(flat, net.fc1)
    features = nn.relu(a3)
    gaze = nn.dense_forward(features, net.head)
    cache = (image, a1, idx1, p1, a2, idx2, flat, a3, features)
    return features, gaze, cache


def forward(net: GazeNet, image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic inference pass: (features, predicted (pitch, yaw))."""
    features, gaze, _ = forward_with_cache(net, image)
    return features, gaze


def backward_into(net: GazeNet, cache, grad_gaze: np.ndarray,
                  grad_features: np.ndarray | None = None) -> None:
    """Accumulate parameter gradients for one cached forward pass.

    `grad_features` carries loss terms that consume the feature vector
    directly (feature alignment); it adds to the head's contribution.
    """
    image, a1, idx1, p1, a2, idx2, flat, a3, features = cache
    gf = nn.dense_backward(grad_gaze, features, net.head)
    if grad_features is not None:
        gf = gf + grad_features
    ga3 = nn.relu_backward(gf, a3)
    gflat = nn.dense_backward(ga3, flat, net.fc1)
    gp2 = gflat.reshape(16, 8, 8)
    gr2 = nn.maxpool_backward(gp2, idx2)
    ga2 = nn.relu_backward(gr2, a2)
    gp1 = nn.conv2d_backward(ga2, p1, net.conv2)
    gr1 = nn.maxpool_backward(gp1, idx1)
    ga1 = nn.relu_backward(gr1, a1)
    nn.conv2d_backward(ga1, image, net.conv1)


def cache_signature(cache) -> bytes:
    """Hash of the active-region pattern of one forward pass (ReLU masks and
    pool argmaxes), used by the gradient checker to detect kink crossings."""
    _, a1, idx1, _, a2, idx2, _, a3, _ = cache
    hasher = hashlib.blake2b(digest_size=16)
    hasher.update(np.packbits(a1 > 0.0).tobytes())
    hasher.update(np.packbits(a2 > 0.0).tobytes())
    hasher.update(np.packbits(a3 > 0.0).tobytes())
    hasher.update(idx1.astype(np.int64).tobytes())
    hasher.update(idx2.astype(np.int64).tobytes())
    return hasher.digest()


_EXPECTED_ARCH = {
    "input": list(INPUT_SHAPE),
    "feature_dim": FEATURE_DIM,
    "layers": [
        {"kind": "conv2d", "weights": [8, 3, 3, 3], "bias": [8]},
        {"kind": "conv2d", "weights": [16, 8, 3, 3], "bias": [16]},
        {"kind": "dense", "weights": [64, 1024], "bias": [64]},
        {"kind": "dense", "weights": [2, 64], "bias": [2]},
    ],
}


def _arch_descriptor(net: GazeNet) -> dict:
    return {
        "input": list(INPUT_SHAPE),
        "feature_dim": net.feature_dim,
        "layers": [
            {"kind": layer.kind,
             "weights": list(layer.weights.shape),
             "bias": list(layer.bias.shape)}
            for layer in net.layers
        ],
    }


def save_checkpoint(net: GazeNet, path: str, step: int = 0, seed: int = 0) -> None:
    arch = json.dumps(_arch_descriptor(net), sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        write_u32(f, CHECKPOINT_VERSION)
        write_u64(f, len(arch))
        f.write(arch)
        write_u64(f, step)
        write_u64(f, seed)
        for layer in net.layers:
            write_f64_array(f, layer.weights)
            write_f64_array(f, layer.bias)


def load_checkpoint(path: str) -> tuple[GazeNet, int, int]:
    """Read (net, step, seed); raises BadMagicError / TruncatedError /
    ArchMismatchError for the respective kinds of damage."""
    with open(path, "rb") as f:
        check_magic(f, CHECKPOINT_MAGIC)
        version = read_u32(f, "version")
        if version != CHECKPOINT_VERSION:
            raise ArchMismatchError(f"unsupported checkpoint version {version}")
        arch_len = read_u64(f, "architecture length")
        try:
            arch = json.loads(read_exact(f, arch_len, "architecture descriptor"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ArchMismatchError(f"unreadable architecture descriptor: {e}") from None
        _validate_arch(arch)
        step = read_u64(f, "step counter")
        seed = read_u64(f, "seed")
        layers = []
        for spec in arch["layers"]:
            w = read_f64_array(f, tuple(spec["weights"]), f"{spec['kind']} weights")
            b = read_f64_array(f, tuple(spec["bias"]), f"{spec['kind']} bias")
            layers.append(nn.LayerParams(spec["kind"], w, b))
        net = GazeNet(layers[0], layers[1], layers[2], layers[3],
                      feature_dim=arch["feature_dim"])
    return net, step, seed


def _validate_arch(arch: dict) -> None:
    if arch != _EXPECTED_ARCH:
        raise ArchMismatchError(
            f"architecture descriptor {arch} does not match the supported layout")
