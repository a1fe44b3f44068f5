"""Dense-tensor layer set with explicit per-layer backprop.

Everything is float64 numpy.  The layer zoo is deliberately tiny: 3x3
stride-1 pad-1 convolutions, 2x2 max pooling, dense layers and ReLU.
Forward ops are pure functions; backward ops take the cached forward
input explicitly and accumulate parameter gradients in place, so one
shared parameter set can receive contributions from several forward
passes before an optimizer step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Input shape incompatible with an operation or parameter set."""


class NonFiniteError(FloatingPointError):
    """A gradient or loss stopped being finite."""


@dataclass
class LayerParams:
    """Trainable tensors of one layer plus their gradient accumulators."""

    kind: str  # "conv2d" or "dense"
    weights: np.ndarray
    bias: np.ndarray
    grad_weights: np.ndarray = field(default=None)  # type: ignore[assignment]
    grad_bias: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.grad_weights is None:
            self.grad_weights = np.zeros_like(self.weights)
        if self.grad_bias is None:
            self.grad_bias = np.zeros_like(self.bias)

    def zero_grads(self) -> None:
        self.grad_weights.fill(0.0)
        self.grad_bias.fill(0.0)

    @property
    def tensors(self):
        return (self.weights, self.bias)

    @property
    def grads(self):
        return (self.grad_weights, self.grad_bias)


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    s = np.sqrt(1.0 / fan_in)
    return rng.uniform(-s, s, size=shape)


def conv2d_params(c_in: int, c_out: int, rng: np.random.Generator) -> LayerParams:
    """3x3 convolution parameters, uniform init scaled by fan-in.

    Draw order (weights then bias) is part of the seeding contract.
    """
    fan_in = c_in * 9
    w = _uniform_init(rng, (c_out, c_in, 3, 3), fan_in)
    b = _uniform_init(rng, (c_out,), fan_in)
    return LayerParams("conv2d", w, b)


def dense_params(n_in: int, n_out: int, rng: np.random.Generator) -> LayerParams:
    w = _uniform_init(rng, (n_out, n_in), n_in)
    b = _uniform_init(rng, (n_out,), n_in)
    return LayerParams("dense", w, b)


def _pad1(x: np.ndarray) -> np.ndarray:
    """Zero-pad spatial dims by 1 on each side."""
    c, h, w = x.shape
    out = np.zeros((c, h + 2, w + 2), dtype=np.float64)
    out[:, 1:h + 1, 1:w + 1] = x
    return out


def _im2col3x3(x: np.ndarray) -> np.ndarray:
    """Unfold a padded [C,H+2,W+2] input into [C*9, H*W] patch columns."""
    c, hp, wp = x.shape
    h, w = hp - 2, wp - 2
    cols = np.empty((c, 9, h, w), dtype=np.float64)
    for di in range(3):
        for dj in range(3):
            cols[:, di * 3 + dj] = x[:, di:di + h, dj:dj + w]
    return cols.reshape(c * 9, h * w)


def conv2d_forward(x: np.ndarray, params: LayerParams) -> np.ndarray:
    """3x3, stride 1, zero padding 1; output spatial size equals input's."""
    if x.ndim != 3 or x.shape[0] != params.weights.shape[1]:
        raise ShapeError(
            f"conv2d input shape {tuple(x.shape)} incompatible with weights "
            f"{tuple(params.weights.shape)} (expected [{params.weights.shape[1]},H,W])"
        )
    c_out = params.weights.shape[0]
    h, w = x.shape[1], x.shape[2]
    cols = _im2col3x3(_pad1(x))
    y = params.weights.reshape(c_out, -1) @ cols + params.bias[:, None]
    return y.reshape(c_out, h, w)


def conv2d_backward(grad_out: np.ndarray, cached_input: np.ndarray,
                    params: LayerParams) -> np.ndarray:
    """Accumulate weight/bias grads and return the input gradient."""
    if cached_input is None:
        raise ShapeError("conv2d_backward requires the cached forward input")
    c_out = params.weights.shape[0]
    c_in, h, w = cached_input.shape
    if grad_out.shape != (c_out, h, w):
        raise ShapeError(
            f"conv2d grad_out shape {tuple(grad_out.shape)} does not match "
            f"forward output shape {(c_out, h, w)}"
        )
    cols = _im2col3x3(_pad1(cached_input))
    g = grad_out.reshape(c_out, -1)
    params.grad_weights += (g @ cols.T).reshape(params.weights.shape)
    params.grad_bias += grad_out.sum(axis=(1, 2))
    gcols = (params.weights.reshape(c_out, -1).T @ g).reshape(c_in, 9, h, w)
    gxp = np.zeros((c_in, h + 2, w + 2), dtype=np.float64)
    for di in range(3):
        for dj in range(3):
            gxp[:, di:di + h, dj:dj + w] += gcols[:, di * 3 + dj]
    return gxp[:, 1:1 + h, 1:1 + w]


def dense_forward(x: np.ndarray, params: LayerParams) -> np.ndarray:
    if x.ndim != 1 or x.shape[0] != params.weights.shape[1]:
        raise ShapeError(
            f"dense input shape {tuple(x.shape)} incompatible with weights "
            f"{tuple(params.weights.shape)}"
        )
    return params.weights @ x + params.bias


def dense_backward(grad_out: np.ndarray, cached_input: np.ndarray,
                   params: LayerParams) -> np.ndarray:
    if cached_input is None:
        raise ShapeError("dense_backward requires the cached forward input")
    params.grad_weights += grad_out[:, None] * cached_input[None, :]
    params.grad_bias += grad_out
    return params.weights.T @ grad_out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(grad_out: np.ndarray, cached_input: np.ndarray) -> np.ndarray:
    # subgradient at 0 is 0: only strictly positive inputs pass gradient
    return grad_out * (cached_input > 0.0)


_POOL_GRIDS: dict[tuple[int, int, int], tuple[np.ndarray, np.ndarray]] = {}


def _pool_grids(c: int, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """(flat index of each window's top-left corner, per-window-slot offsets)."""
    key = (c, h, w)
    grids = _POOL_GRIDS.get(key)
    if grids is None:
        ci, ii, ji = np.indices((c, h // 2, w // 2))
        base = ci * (h * w) + (2 * ii) * w + 2 * ji
        offsets = np.array([0, 1, w, w + 1])
        grids = _POOL_GRIDS[key] = (base, offsets)
    return grids


def maxpool2x2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Halve H and W; also return the flat argmax index of each window.

    Ties go to the lowest flat index of the input, which is the window's
    row-major order, so argmax over that ordering is already correct.
    """
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x2 needs even spatial dims, got {tuple(x.shape)}")
    h2, w2 = h // 2, w // 2
    windows = x.reshape(c, h2, 2, w2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h2, w2, 4)
    arg = windows.argmax(axis=3)
    y = windows.max(axis=3)
    base, offsets = _pool_grids(c, h, w)
    return y, base + offsets[arg]


def maxpool_backward(grad_out: np.ndarray, argmax_indices: np.ndarray) -> np.ndarray:
    """Route each output gradient to its recorded argmax position."""
    c, h2, w2 = grad_out.shape
    grad_in = np.zeros(c * h2 * w2 * 4, dtype=np.float64)
    np.add.at(grad_in, argmax_indices.ravel(), grad_out.ravel())
    return grad_in.reshape(c, 2 * h2, 2 * w2)


@dataclass
class AdamState:
    """Per-tensor Adam moments; `t` counts completed updates."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_tensor(cls, tensor: np.ndarray, lr: float = 1e-4) -> "AdamState":
        return cls(m=np.zeros_like(tensor), v=np.zeros_like(tensor), lr=lr)


@dataclass
class LayerAdamState:
    """Adam moments for the two tensors of one LayerParams."""

    weights: AdamState
    bias: AdamState

    @classmethod
    def for_layer(cls, params: LayerParams, lr: float = 1e-4) -> "LayerAdamState":
        return cls(AdamState.for_tensor(params.weights, lr),
                   AdamState.for_tensor(params.bias, lr))


def adam_update(param: np.ndarray, grad: np.ndarray, state: AdamState) -> None:
    """Bias-corrected Adam step for one tensor, in place."""
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("non-finite gradient passed to Adam")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    param -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def adam_step(params: LayerParams, state: LayerAdamState) -> None:
    """Apply Adam to a layer's weights and bias, then zero its gradients."""
    adam_update(params.weights, params.grad_weights, state.weights)
    adam_update(params.bias, params.grad_bias, state.bias)
    params.zero_grads()


def grad_check(loss_fn, params: list[LayerParams], h: float = 1e-5,
               tol: float = 1e-4, n_coords: int = 200,
               rng: np.random.Generator | None = None) -> float:
    """Max relative error between analytic gradients and central differences.

    `loss_fn(compute_grads)` must return `(loss, signature)`; with
    compute_grads=True it also accumulates analytic gradients into
    `params`.  The signature identifies the active piecewise-linear region
    (ReLU masks, pool argmaxes, L1 signs).  Coordinates whose +-h interval
    changes the signature straddle a kink, where a central difference is
    not a derivative estimate, so they are skipped and replaced; the same
    rule the per-layer checks apply by excluding near-zero ReLU inputs.

    Checks min(n_coords, total coordinate count) coordinates sampled
    without replacement across all tensors.  `tol` is the caller's pass
    threshold; it is not applied here.
    """
    report = grad_check_report(loss_fn, params, h=h, tol=tol, n_coords=n_coords, rng=rng)
    return report["max_rel_err"]


def grad_check_report(loss_fn, params: list[LayerParams], h: float = 1e-5,
                      tol: float = 1e-4, n_coords: int = 200,
                      rng: np.random.Generator | None = None) -> dict:
    if rng is None:
        rng = np.random.default_rng(0)
    for p in params:
        p.zero_grads()
    _, sig0 = loss_fn(True)
    analytic = [(p.grad_weights.copy(), p.grad_bias.copy()) for p in params]

    tensors = []
    for li, p in enumerate(params):
        tensors.append((p.weights, analytic[li][0]))
        tensors.append((p.bias, analytic[li][1]))
    sizes = [t.size for t, _ in tensors]
    total = int(np.sum(sizes))
    offsets = np.cumsum([0] + sizes)
    order = rng.permutation(total)

    max_rel = 0.0
    checked = 0
    skipped = 0
    want = min(n_coords, total)
    for flat_coord in order:
        if checked >= want:
            break
        ti = int(np.searchsorted(offsets, flat_coord, side="right") - 1)
        idx = np.unravel_index(int(flat_coord - offsets[ti]), tensors[ti][0].shape)
        tensor, grads = tensors[ti]
        orig = tensor[idx]
        tensor[idx] = orig + h
        lp, sigp = loss_fn(False)
        tensor[idx] = orig - h
        lm, sigm = loss_fn(False)
        tensor[idx] = orig
        if sigp != sig0 or sigm != sig0:
            skipped += 1
            continue
        numeric = (lp - lm) / (2.0 * h)
        a = grads[idx]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
        max_rel = max(max_rel, rel)
        checked += 1
    return {
        "max_rel_err": max_rel,
        "checked": checked,
        "skipped_kinks": skipped,
        "h": h,
        "tol": tol,
        "passed": max_rel < tol and checked > 0,
    }
