"""Training set construction and the unrolled, randomized-depth training loop.

For every shape and epoch the loop draws a depth ``r`` uniformly from
``1 .. 1 + max_extra_iters``, re-noises the shape's features, runs ``r``
Jacobi iterations over all active cells and sums the mean cross-entropy of
every iteration. Gradients flow back through the sigmoid feedback into
earlier iterations, and one Adam step is taken per shape.
"""
from __future__ import annotations

import csv
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from . import nnet
from .field import FieldSource, GridSpec, corrupt, sample_grid, sample_signed
from .refiner import (RefineConfig, local_features, neighbor_table, pad_beliefs, select_active,
                      state_from_features, step)
from .signconfig import N_CATEGORIES, corner_vertex_index, labels_from_signed_grid

log = logging.getLogger(__name__)

DATASET_MAGIC = b"UDFD"
DATASET_VERSION = 1


class TrainingDivergedError(RuntimeError):
    pass


class DatasetFormatError(ValueError):
    pass


@dataclass(eq=False)
class ShapeGridSample:
    """Active cells of one shape with clean features and ground-truth categories."""

    shape_id: int
    resolution: int
    cells: NDArray
    features: NDArray
    labels: NDArray
    neighbors: NDArray = field(init=False, repr=False)
    _corner_inverse: NDArray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, 3)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.neighbors = neighbor_table(self.cells, self.resolution)

    def __len__(self) -> int:
        return len(self.cells)

    def corner_inverse(self) -> tuple[int, NDArray]:
        """Map each (cell, corner) to a shared lattice-vertex slot."""
        if self._corner_inverse is None:
            vid = corner_vertex_index(self.cells, self.resolution)
            _, inv = np.unique(vid, return_inverse=True)
            self._corner_inverse = inv.reshape(vid.shape)
        return int(self._corner_inverse.max()) + 1 if len(self) else 0, self._corner_inverse


@dataclass
class TrainConfig:
    epochs: int = 50
    lr: float = 5e-4
    max_extra_iters: int = 5
    noise_sigma: float = 1.0
    seed: int = 0
    clamp: float = 0.1
    resolution: int = 128
    compute_dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 <= self.max_extra_iters <= 8:
            raise ValueError("max_extra_iters must lie in [0, 8]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def build_shape(source: FieldSource, spec: GridSpec, clamp: float = 0.1, shape_id: int = 0) -> ShapeGridSample:
    if not source.signed_capable:
        raise TypeError(f"training shape {shape_id} ({source.kind}) is not signed-capable")
    grid = sample_grid(corrupt(source, clamp, 0.0), spec)
    cells = select_active(grid, clamp)
    if len(cells) == 0:
        log.warning("shape %d has no active cells at resolution %d", shape_id, spec.resolution)
    labels = labels_from_signed_grid(sample_signed(source, spec), cells)
    return ShapeGridSample(shape_id, spec.resolution, cells, local_features(grid, cells), labels)


def build_dataset(corpus: Iterable[FieldSource], spec: GridSpec, clamp: float = 0.1) -> list[ShapeGridSample]:
    """Sample each shape's clamped clean UDF and label its active cells.

    The features are noise-free, so the dataset is fully determined by the
    corpus and the grid; augmentation noise is drawn during training.
    """
    return [build_shape(src, spec, clamp, i) for i, src in enumerate(corpus)]


def augment(sample: ShapeGridSample, sigma: float, rng: np.random.Generator) -> NDArray:
    """Multiplicative noise on corner values and gradients, one draw per lattice vertex."""
    feats = sample.features
    if sigma == 0 or len(sample) == 0:
        return feats.copy()
    n_vertices, inv = sample.corner_inverse()
    n_val = rng.standard_normal(n_vertices)[inv]
    n_grad = rng.standard_normal(n_vertices)[inv]
    out = np.empty_like(feats)
    out[:, :8] = np.maximum(feats[:, :8] * (1.0 + sigma * n_val), 0.0)
    g = feats[:, 8:].reshape(-1, 8, 3) * (1.0 + sigma * n_grad)[:, :, None]
    out[:, 8:] = g.reshape(-1, 24)
    return out


def _local_view(model: nnet.MlpModel) -> nnet.MlpModel:
    # with all-zero feedback only the first 32 input rows of W1 matter
    return nnet.MlpModel([model.weights[0][:nnet.N_LOCAL]] + model.weights[1:], model.biases, model.negative_slope)


def unrolled_loss_and_grad(model: nnet.MlpModel, local: NDArray, neighbors: NDArray, labels: NDArray,
                           iterations: int) -> tuple[float, list[float], nnet.MlpModel]:
    """Summed per-iteration mean CE over ``iterations`` unrolled passes and its gradient.

    Arithmetic follows ``model``'s dtype.
    """
    dtype = model.dtype
    local = local.astype(dtype, copy=False)
    m = len(local)
    n_loc = local.shape[1]
    pres: list[list[NDArray]] = []
    dlogs: list[NDArray] = []
    beliefs: list[NDArray] = []
    losses: list[float] = []
    prev = None
    for i in range(iterations):
        if i == 0:
            logits, pre = nnet.forward_cached(_local_view(model), local)
        else:
            x = np.concatenate([local, pad_beliefs(prev)[neighbors].reshape(m, -1)], axis=1)
            logits, pre = nnet.forward_cached(model, x)
        loss, dlog = nnet.cross_entropy(logits, labels)
        losses.append(loss)
        pres.append(pre)
        dlogs.append(dlog)
        prev = nnet.sigmoid(logits)
        beliefs.append(prev)

    grads = nnet.zeros_like_model(model)
    d_belief = None
    for i in range(iterations - 1, -1, -1):
        dlog = dlogs[i]
        if d_belief is not None:
            s = beliefs[i]
            dlog = dlog + d_belief * s * (1.0 - s)
        if i == 0:
            g, _ = nnet.backward(_local_view(model), local, pres[0], dlog)
            grads.weights[0][:n_loc] += g.weights[0]
            for k in range(1, len(g.weights)):
                grads.weights[k] += g.weights[k]
            for k in range(len(g.biases)):
                grads.biases[k] += g.biases[k]
            break
        x = np.concatenate([local, pad_beliefs(beliefs[i - 1])[neighbors].reshape(m, -1)], axis=1)
        g, dx = nnet.backward(model, x, pres[i], dlog, input_grad=True)
        for k in range(len(g.weights)):
            grads.weights[k] += g.weights[k]
            grads.biases[k] += g.biases[k]
        # scatter feedback gradients back onto the cells that produced them
        dfb = dx[:, n_loc:].reshape(m, neighbors.shape[1], N_CATEGORIES)
        d_pad = np.zeros((m + 1, N_CATEGORIES), dtype=dtype)
        for j in range(neighbors.shape[1]):
            # each cell is the j-th neighbour of at most one cell; only the pad row repeats
            d_pad[neighbors[:, j]] += dfb[:, j]
        d_belief = d_pad[:m]
        pres[i] = dlogs[i] = None  # type: ignore[call-overload]
    return float(sum(losses)), losses, grads


@dataclass
class TrainResult:
    model: nnet.MlpModel
    history: list[tuple[int, int, int, float]]
    epoch_loss: list[float]


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))


def train(config: TrainConfig, dataset: Sequence[ShapeGridSample], model: nnet.MlpModel | None = None,
          dims: tuple[int, ...] = nnet.DEFAULT_DIMS,
          progress: Callable[[int, int, int, float], None] | None = None) -> TrainResult:
    """Train (or continue training ``model``) on ``dataset``.

    ``history`` holds one ``(epoch, shape, iters, loss)`` row per Adam step,
    where ``loss`` is the summed per-iteration loss. ``epoch_loss`` is the
    epoch mean of ``loss / iters`` so epochs with different depth draws stay
    comparable.
    """
    dataset = [s for s in dataset if len(s)]
    if not dataset:
        raise ValueError("training needs at least one shape with active cells")
    if model is None:
        model = nnet.init_weights(config.seed, dims)
    state = nnet.AdamState.for_model(model, lr=config.lr)
    dtype = np.dtype(config.compute_dtype)
    order_rng = _rng(config.seed, 1)
    history: list[tuple[int, int, int, float]] = []
    epoch_loss: list[float] = []
    for epoch in range(1, config.epochs + 1):
        per_iter = []
        for idx in order_rng.permutation(len(dataset)):
            sample = dataset[idx]
            r = int(order_rng.integers(1, config.max_extra_iters + 2))
            local = augment(sample, config.noise_sigma, _rng(config.seed, 2, epoch, sample.shape_id))
            cmodel = model if model.dtype == dtype else model.astype(dtype)
            loss, _, grads = unrolled_loss_and_grad(cmodel, local, sample.neighbors, sample.labels, r)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, shape {sample.shape_id}, {r} iterations")
            nnet.adam_step(model, state, grads)
            history.append((epoch, sample.shape_id, r, loss))
            per_iter.append(loss / r)
            if progress is not None:
                progress(epoch, sample.shape_id, r, loss)
        epoch_loss.append(float(np.mean(per_iter)))
        log.info("epoch %d mean loss %.5f", epoch, epoch_loss[-1])
    return TrainResult(model, history, epoch_loss)


def write_history(history: Iterable[tuple[int, int, int, float]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "shape", "iters", "loss"])
        for epoch, shape, iters, loss in history:
            w.writerow([epoch, shape, iters, repr(float(loss))])


def eval_accuracy(model: nnet.MlpModel, dataset: Sequence[ShapeGridSample], iterations: int,
                  sigma: float = 0.0, seed: int = 0, compute_dtype: str = "float32") -> dict[str, list[float]]:
    """Per-iteration fraction of active cells whose argmax equals the label.

    Returns ``{"clean": [...]}`` and, when ``sigma > 0``, ``"corrupted"`` accuracy
    on features re-noised deterministically from ``seed``.
    """
    cfg = RefineConfig(iterations=iterations, freeze=False, compute_dtype=compute_dtype)
    variants = {"clean": 0.0}
    if sigma > 0:
        variants["corrupted"] = sigma
    out: dict[str, list[float]] = {}
    for name, sig in variants.items():
        hits = np.zeros(iterations)
        total = 0
        for sample in dataset:
            if not len(sample):
                continue
            local = augment(sample, sig, _rng(seed, 3, sample.shape_id))
            st = state_from_features(sample.cells, local, sample.resolution)
            for i in range(iterations):
                step(model, st, cfg)
                hits[i] += np.count_nonzero(st.categories == sample.labels)
            total += len(sample)
        out[name] = (hits / max(total, 1)).tolist()
    return out


def save_dataset(dataset: Sequence[ShapeGridSample], path: str | Path) -> None:
    """Little-endian ``UDFD`` file: per shape N, count, u16 coords, f32 features, u8 labels."""
    parts = [DATASET_MAGIC, struct.pack("<II", DATASET_VERSION, len(dataset))]
    for s in dataset:
        if s.resolution > 0xFFFF:
            raise ValueError("resolution too large for u16 coordinates")
        parts.append(struct.pack("<II", s.resolution, len(s)))
        parts.append(np.ascontiguousarray(s.cells, dtype="<u2").tobytes())
        parts.append(np.ascontiguousarray(s.features, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(s.labels, dtype="u1").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_dataset(path: str | Path) -> list[ShapeGridSample]:
    data = Path(path).read_bytes()
    if data[:4] != DATASET_MAGIC:
        raise DatasetFormatError(f"{path}: not a UDFD dataset file")
    if len(data) < 12:
        raise DatasetFormatError(f"{path}: truncated header")
    version, count = struct.unpack_from("<II", data, 4)
    if version != DATASET_VERSION:
        raise DatasetFormatError(f"{path}: unsupported dataset version {version}")
    off = 12
    out = []
    for sid in range(count):
        if len(data) < off + 8:
            raise DatasetFormatError(f"{path}: truncated record {sid}")
        n, m = struct.unpack_from("<II", data, off)
        off += 8
        need = m * (6 + 128 + 1)
        if len(data) < off + need:
            raise DatasetFormatError(f"{path}: truncated record {sid}")
        cells = np.frombuffer(data, "<u2", 3 * m, off).reshape(m, 3).astype(np.int64)
        off += 6 * m
        feats = np.frombuffer(data, "<f4", 32 * m, off).reshape(m, 32).astype(np.float64)
        off += 128 * m
        labels = np.frombuffer(data, "u1", m, off).astype(np.int64)
        off += m
        out.append(ShapeGridSample(sid, n, cells, feats, labels))
    if off != len(data):
        raise DatasetFormatError(f"{path}: {len(data) - off} trailing bytes")
    return out
