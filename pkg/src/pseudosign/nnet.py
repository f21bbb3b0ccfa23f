"""Fully connected cell classifier with hand-written backprop and Adam.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``x`` of shape
``(B, fan_in)`` maps to ``x @ W + b``. Hidden layers use leaky ReLU; the output
layer is linear (logits).

Input layout of one cell (928 entries for the default topology):

* ``[0:8]``    corner UDF values divided by the cell size
* ``[8:32]``   corner gradients, ``x, y, z`` interleaved per corner
* ``[32:928]`` 7 belief vectors of 128 entries ordered
  ``[self, -x, +x, -y, +y, -z, +z]``
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

N_LOCAL = 32
N_NEIGHBORS = 7
N_OUT = 128
DEFAULT_DIMS = (N_LOCAL + N_NEIGHBORS * N_OUT, 1024, 1024, N_OUT)
NEGATIVE_SLOPE = 0.01

WEIGHT_MAGIC = b"UDFM"
WEIGHT_VERSION = 1


class WeightFormatError(ValueError):
    """Malformed or truncated weight file."""


class WeightVersionError(WeightFormatError):
    """Wrong magic bytes or unsupported version."""


@dataclass(eq=False)
class MlpModel:
    weights: list[NDArray]
    biases: list[NDArray]
    negative_slope: float = NEGATIVE_SLOPE

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @property
    def dtype(self):
        return self.weights[0].dtype

    def params(self) -> list[NDArray]:
        """Flat parameter list ``[W1, b1, W2, b2, ...]`` (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def astype(self, dtype) -> "MlpModel":
        return MlpModel([w.astype(dtype) for w in self.weights],
                        [b.astype(dtype) for b in self.biases], self.negative_slope)

    def copy(self) -> "MlpModel":
        return self.astype(self.dtype)


def init_weights(seed: int, dims: tuple[int, ...] = DEFAULT_DIMS,
                 negative_slope: float = NEGATIVE_SLOPE) -> MlpModel:
    """Kaiming-uniform weights for leaky ReLU, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        std = np.sqrt(2.0 / ((1.0 + negative_slope ** 2) * fan_in))
        bound = np.sqrt(3.0) * std
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases, negative_slope)


def zeros_like_model(model: MlpModel) -> MlpModel:
    return MlpModel([np.zeros_like(w) for w in model.weights],
                    [np.zeros_like(b) for b in model.biases], model.negative_slope)


def _check_input(model: MlpModel, x: NDArray) -> NDArray:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != model.dims[0]:
        raise ValueError(f"expected input of shape (B, {model.dims[0]}), got {x.shape}")
    return x


def forward_cached(model: MlpModel, x: NDArray) -> tuple[NDArray, list[NDArray]]:
    """Logits plus hidden pre-activations (needed by :func:`backward`)."""
    x = _check_input(model, x)
    a = model.negative_slope
    pre = []
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w
        z += b
        if i == last:
            return z, pre
        pre.append(z)
        h = np.maximum(z, a * z)
    raise AssertionError("unreachable")


def forward(model: MlpModel, x: NDArray, chunk: int = 16384) -> NDArray:
    x = _check_input(model, x)
    if len(x) <= chunk:
        return forward_cached(model, x)[0]
    return np.concatenate([forward_cached(model, x[i:i + chunk])[0] for i in range(0, len(x), chunk)])


def backward(model: MlpModel, x: NDArray, pre: list[NDArray], dlogits: NDArray,
             input_grad: bool = False) -> tuple[MlpModel, NDArray | None]:
    """Parameter gradients (as an ``MlpModel``) and optionally ``dL/dx``."""
    a = model.negative_slope
    n = len(model.weights)
    gw: list[NDArray] = [None] * n  # type: ignore[list-item]
    gb: list[NDArray] = [None] * n  # type: ignore[list-item]
    delta = dlogits
    for i in range(n - 1, -1, -1):
        if i > 0:
            z = pre[i - 1]
            h = np.maximum(z, a * z)
        else:
            h = x
        gw[i] = h.T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ model.weights[i].T
            delta *= np.where(pre[i - 1] > 0, 1.0, a).astype(delta.dtype, copy=False)
        elif input_grad:
            return MlpModel(gw, gb, a), delta @ model.weights[0].T
    return MlpModel(gw, gb, a), None


def softmax(logits: NDArray) -> NDArray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(x: NDArray) -> NDArray:
    # split branches keep exp() from overflowing
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def cross_entropy(logits: NDArray, targets: NDArray) -> tuple[float, NDArray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (len(logits),):
        raise ValueError("one target per logit row required")
    if np.any((targets < 0) | (targets >= logits.shape[1])):
        raise ValueError("target category out of range")
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(len(z))
    loss = float(np.mean(lse - z[rows, targets]))
    d = np.exp(z - lse[:, None])
    d[rows, targets] -= 1.0
    d /= len(z)
    return loss, d


def loss_and_grad(model: MlpModel, x: NDArray, targets: NDArray) -> tuple[float, MlpModel]:
    logits, pre = forward_cached(model, x)
    loss, d = cross_entropy(logits, targets)
    grads, _ = backward(model, x, pre, d)
    return loss, grads


@dataclass(eq=False)
class AdamState:
    m: list[NDArray]
    v: list[NDArray]
    step: int = 0
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: MlpModel, lr: float = 5e-4, **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in model.params()],
                   [np.zeros_like(p) for p in model.params()], lr=lr, **kw)


def adam_step(model: MlpModel, state: AdamState, grads: MlpModel) -> tuple[MlpModel, AdamState]:
    """Bias-corrected Adam update, applied in place; returns ``(model, state)``."""
    params = model.params()
    gparams = grads.params()
    if len(params) != len(gparams) or any(p.shape != g.shape for p, g in zip(params, gparams)):
        raise ValueError("gradient shapes do not match the model")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, gparams, state.m, state.v):
        g = g.astype(p.dtype, copy=False)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return model, state


def save_weights(model: MlpModel, path: str | Path) -> None:
    """Write the little-endian ``UDFM`` weight file (float32 payload)."""
    parts = [WEIGHT_MAGIC, struct.pack("<II", WEIGHT_VERSION, len(model.weights))]
    for w in model.weights:
        parts.append(struct.pack("<II", *w.shape))
    for w, b in zip(model.weights, model.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_weights(path: str | Path, expected_dims: tuple[int, ...] | None = None) -> MlpModel:
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise WeightFormatError(f"{path}: truncated header")
    if data[:4] != WEIGHT_MAGIC:
        raise WeightVersionError(f"{path}: bad magic {data[:4]!r}, not a UDFM weight file")
    version, n_layers = struct.unpack_from("<II", data, 4)
    if version != WEIGHT_VERSION:
        raise WeightVersionError(f"{path}: unsupported weight file version {version}")
    off = 12
    if n_layers == 0 or len(data) < off + 8 * n_layers:
        raise WeightFormatError(f"{path}: truncated layer table")
    shapes = [struct.unpack_from("<II", data, off + 8 * i) for i in range(n_layers)]
    off += 8 * n_layers
    for (_, c), (r, _) in zip(shapes[:-1], shapes[1:]):
        if c != r:
            raise WeightFormatError(f"{path}: inconsistent layer dimensions {shapes}")
    dims = (shapes[0][0],) + tuple(c for _, c in shapes)
    if expected_dims is not None and tuple(expected_dims) != dims:
        raise WeightFormatError(f"{path}: dims {dims} do not match expected {tuple(expected_dims)}")
    need = off + 4 * sum(r * c + c for r, c in shapes)
    if len(data) != need:
        raise WeightFormatError(f"{path}: expected {need} bytes, found {len(data)}")
    weights, biases = [], []
    for r, c in shapes:
        w = np.frombuffer(data, dtype="<f4", count=r * c, offset=off).reshape(r, c)
        off += 4 * r * c
        b = np.frombuffer(data, dtype="<f4", count=c, offset=off)
        off += 4 * c
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    return MlpModel(weights, biases)
