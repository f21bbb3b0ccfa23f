"""Iterative pseudo-sign inference over a sampled UDF grid.

Only *active* cells (some corner below the clamp value) are classified. At
iteration 1 every belief input is zero; afterwards each active cell sees the
sigmoid of the previous iteration's logits for itself and its six face
neighbours, ordered ``[self, -x, +x, -y, +y, -z, +z]``. Missing neighbours
(inactive or outside the grid) contribute zeros. All cells of one iteration
read the same previous state (Jacobi update), so processing order never
matters.

With freezing enabled, cells whose top softmax probability exceeds the
threshold stop being re-evaluated; their last beliefs keep feeding neighbours
unless ``frozen_feedback="zeros"``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import nnet
from .field import FieldSource, GridSpec, SampledGrid, corrupt, sample_grid
from .signconfig import N_CATEGORIES, cell_corner_values, corner_vertex_index, representative

# neighbour offsets in feedback order, self first
NEIGHBOR_OFFSETS = np.array([[0, 0, 0], [-1, 0, 0], [1, 0, 0], [0, -1, 0],
                             [0, 1, 0], [0, 0, -1], [0, 0, 1]], dtype=np.int64)


@dataclass
class RefineConfig:
    iterations: int = 6
    clamp: float = 0.1
    freeze_threshold: float = 0.999
    freeze: bool = True
    frozen_feedback: str = "beliefs"
    # corruption applied once when sampling the grid (see prepare_grid)
    noise_sigma: float = 0.0
    seed: int = 0
    compute_dtype: str = "float32"

    def __post_init__(self):
        if not 1 <= self.iterations <= 16:
            raise ValueError("iterations must lie in [1, 16]")
        if not (0 < self.clamp and 0 < self.freeze_threshold <= 1):
            raise ValueError("thresholds must lie in (0, 1]")
        if self.frozen_feedback not in ("beliefs", "zeros"):
            raise ValueError("frozen_feedback must be 'beliefs' or 'zeros'")


def prepare_grid(source: FieldSource, spec: GridSpec, config: RefineConfig) -> SampledGrid:
    """Clamp (and optionally corrupt) a source, then sample it once."""
    return sample_grid(corrupt(source, config.clamp, config.noise_sigma, config.seed), spec)


def grid_cell_min(values: NDArray) -> NDArray:
    n = values.shape[0] - 1
    out = np.full((n, n, n), np.inf)
    for c in range(8):
        dx, dy, dz = c & 1, (c >> 1) & 1, (c >> 2) & 1
        np.minimum(out, values[dx:dx + n, dy:dy + n, dz:dz + n], out=out)
    return out


def select_active(grid: SampledGrid, clamp: float = 0.1) -> NDArray:
    """(M, 3) coordinates, in C order, of cells with some corner value below ``clamp``."""
    return np.argwhere(grid_cell_min(grid.values) < clamp)


def neighbor_table(cells: NDArray, resolution: int) -> NDArray:
    """(M, 7) row index of each feedback neighbour, ``-1`` when absent."""
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
    n = resolution
    lin = (cells[:, 0] * n + cells[:, 1]) * n + cells[:, 2]
    order = np.argsort(lin, kind="stable")
    sorted_lin = lin[order]
    out = np.full((len(cells), len(NEIGHBOR_OFFSETS)), -1, dtype=np.int64)
    for j, off in enumerate(NEIGHBOR_OFFSETS):
        nb = cells + off
        inside = np.all((nb >= 0) & (nb < n), axis=1)
        nlin = (nb[:, 0] * n + nb[:, 1]) * n + nb[:, 2]
        pos = np.searchsorted(sorted_lin, nlin)
        pos = np.minimum(pos, len(sorted_lin) - 1)
        hit = inside & (sorted_lin[pos] == nlin) if len(sorted_lin) else inside & False
        out[hit, j] = order[pos[hit]]
    return out


def local_features(grid: SampledGrid, cells: NDArray) -> NDArray:
    """(M, 32) normalised corner values followed by interleaved corner gradients."""
    vals = cell_corner_values(grid.values, cells) / grid.spec.cell_size
    g = grid.gradients.reshape(-1, 3)
    grads = g[corner_vertex_index(cells, grid.spec.resolution)].reshape(len(vals), 24)
    return np.concatenate([vals, grads], axis=1)


def pad_beliefs(beliefs: NDArray) -> NDArray:
    """Append the all-zero row that absent neighbours (index -1) resolve to."""
    return np.vstack([beliefs, np.zeros((1, beliefs.shape[1]), dtype=beliefs.dtype)])


def gather_feedback(beliefs: NDArray, neighbors: NDArray, padded: NDArray | None = None) -> NDArray:
    """(M, 7 * 128) concatenated neighbour beliefs; absent neighbours give zeros."""
    if padded is None:
        padded = pad_beliefs(beliefs)
    # index -1 picks the trailing zero row
    return padded[neighbors].reshape(len(neighbors), -1)


def assemble_inputs(local: NDArray, beliefs: NDArray, neighbors: NDArray, dtype=np.float64) -> NDArray:
    fb = gather_feedback(beliefs.astype(dtype, copy=False), neighbors)
    return np.concatenate([local.astype(dtype, copy=False), fb], axis=1)


@dataclass
class RefineState:
    """Per-active-cell beliefs carried between iterations."""

    cells: NDArray
    local: NDArray
    neighbors: NDArray
    logits: NDArray
    beliefs: NDArray
    frozen: NDArray
    iteration: int = 0
    snapshots: list[NDArray] = field(default_factory=list)
    forward_passes: list[int] = field(default_factory=list)

    @property
    def categories(self) -> NDArray:
        # np.argmax returns the first maximum: ties go to the lowest id
        return np.argmax(self.logits, axis=1)

    def copy(self) -> "RefineState":
        return RefineState(self.cells, self.local, self.neighbors, self.logits.copy(),
                           self.beliefs.copy(), self.frozen.copy(), self.iteration,
                           [s.copy() for s in self.snapshots], list(self.forward_passes))


def init_state(grid: SampledGrid, clamp: float = 0.1) -> RefineState:
    cells = select_active(grid, clamp)
    return state_from_features(cells, local_features(grid, cells), grid.spec.resolution)


def state_from_features(cells: NDArray, local: NDArray, resolution: int) -> RefineState:
    m = len(cells)
    return RefineState(cells=cells, local=local, neighbors=neighbor_table(cells, resolution),
                       logits=np.zeros((m, N_CATEGORIES)), beliefs=np.zeros((m, N_CATEGORIES)),
                       frozen=np.zeros(m, dtype=bool))


def step(model: nnet.MlpModel, state: RefineState, config: RefineConfig) -> RefineState:
    """Run one Jacobi iteration in place."""
    dtype = np.dtype(config.compute_dtype)
    cmodel = model if model.dtype == dtype else model.astype(dtype)
    evaluate = ~state.frozen
    feedback = state.beliefs
    if config.frozen_feedback == "zeros" and state.frozen.any():
        feedback = feedback.copy()
        feedback[state.frozen] = 0.0
    rows = np.flatnonzero(evaluate)
    new_logits = state.logits.copy()
    padded = pad_beliefs(feedback.astype(dtype))
    chunk = 16384
    for i in range(0, len(rows), chunk):
        r = rows[i:i + chunk]
        x = np.concatenate([state.local[r].astype(dtype),
                            gather_feedback(None, state.neighbors[r], padded)], axis=1)
        new_logits[r] = nnet.forward(cmodel, x)
    state.logits = new_logits
    state.beliefs = nnet.sigmoid(new_logits)
    state.iteration += 1
    if state.iteration == 1 and len(rows):
        # the all-zero start encoding must stay distinguishable from any belief
        assert np.all(state.beliefs > 0), "sigmoid belief underflowed to zero"
    if config.freeze:
        conf = nnet.softmax(new_logits).max(axis=1)
        state.frozen = state.frozen | (conf > config.freeze_threshold)
    state.snapshots.append(state.categories)
    state.forward_passes.append(len(rows))
    return state


def refine(model: nnet.MlpModel, grid: SampledGrid | None, config: RefineConfig,
           state: RefineState | None = None) -> RefineState:
    """Iterate until ``config.iterations`` total iterations have run.

    Pass a previous ``state`` to resume; running ``k`` then continuing to
    ``k + j`` equals running ``k + j`` directly.
    """
    if state is None:
        if grid is None:
            raise ValueError("need a grid or a state")
        state = init_state(grid, config.clamp)
    if model.dims[0] != state.local.shape[1] + 7 * N_CATEGORIES:
        raise ValueError(f"model input {model.dims[0]} does not match features {state.local.shape[1]}")
    if len(state.cells) == 0:
        return state
    while state.iteration < config.iterations:
        step(model, state, config)
    return state


def pseudo_sdf(grid: SampledGrid, cells: NDArray, categories: NDArray) -> NDArray:
    """(M, 8) corner values signed by each category's representative mask."""
    raw = cell_corner_values(grid.values, cells)
    masks = np.asarray(representative(np.asarray(categories, dtype=np.int64)))
    bits = (masks[:, None] >> np.arange(8)) & 1
    return np.where(bits == 1, -raw, raw)
