"""Corner sign masks and their 128 flip-symmetric categories.

Corner ``i`` of a cell sits at offset ``(i & 1, (i >> 1) & 1, (i >> 2) & 1)``
from the cell's minimum vertex. Bit ``i`` of a mask is set when that corner
has a negative (pseudo-)sign. A mask and its complement describe the same
surface, so the classifier predicts one of 128 categories: category ``c`` is
the rank of ``min(m, m ^ 0xFF)`` among those canonical masks in ascending
order. Because every canonical mask has bit 7 clear, category ids coincide
with the canonical mask values ``0..127``.
"""
from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from .field import FieldSource, GridSpec, UnsupportedKindError

N_CATEGORIES = 128
CORNER_OFFSETS = np.array([[(i >> 0) & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)], dtype=np.int64)
UNIFORM_CATEGORY = 0

_CANONICAL = np.array(sorted({min(m, m ^ 0xFF) for m in range(256)}), dtype=np.int64)
_CATEGORY_OF_MASK = np.empty(256, dtype=np.int64)
for _cat, _rep in enumerate(_CANONICAL):
    _CATEGORY_OF_MASK[_rep] = _cat
    _CATEGORY_OF_MASK[_rep ^ 0xFF] = _cat


def canonicalize(mask):
    """Category id(s) for 8-bit corner mask(s)."""
    m = np.asarray(mask, dtype=np.int64)
    if np.any((m < 0) | (m > 255)):
        raise ValueError("corner mask must lie in [0, 255]")
    out = _CATEGORY_OF_MASK[m]
    return int(out) if out.ndim == 0 else out


def representative(category):
    """Canonical (numerically smaller) mask of a category."""
    c = np.asarray(category, dtype=np.int64)
    if np.any((c < 0) | (c >= N_CATEGORIES)):
        raise ValueError(f"category id must lie in [0, {N_CATEGORIES})")
    out = _CANONICAL[c]
    return int(out) if out.ndim == 0 else out


def mask_from_signs(corner_values: NDArray) -> NDArray:
    """Masks from (..., 8) signed corner values; a value of exactly 0 counts as negative."""
    neg = np.asarray(corner_values) <= 0
    return (neg * (1 << np.arange(8))).sum(axis=-1)


def one_hot(category, n: int = N_CATEGORIES) -> NDArray:
    c = np.atleast_1d(np.asarray(category, dtype=np.int64))
    out = np.zeros((len(c), n))
    out[np.arange(len(c)), c] = 1.0
    return out[0] if np.ndim(category) == 0 else out


def corner_vertex_index(cells: NDArray, resolution: int) -> NDArray:
    """(M, 8) flat C-order vertex ids of each cell's corners."""
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
    corners = cells[:, None, :] + CORNER_OFFSETS[None, :, :]
    n = resolution + 1
    return (corners[..., 0] * n + corners[..., 1]) * n + corners[..., 2]


def cell_corner_values(vertex_values: NDArray, cells: NDArray) -> NDArray:
    """Gather (M, 8) corner values from an (N+1,)*3 array."""
    n = vertex_values.shape[0] - 1
    return vertex_values.reshape(-1)[corner_vertex_index(cells, n)]


def labels_from_signed_grid(signed: NDArray, cells: NDArray) -> NDArray:
    """Ground-truth categories of ``cells`` from a sampled signed field."""
    return canonicalize(mask_from_signs(cell_corner_values(signed, cells)))


def label_from_signed(source: FieldSource, spec: GridSpec, cell) -> int:
    """Ground-truth category of one cell, evaluating the signed field at its corners."""
    if not source.signed_capable:
        raise UnsupportedKindError(f"{source.kind} has no sign")
    cell = np.asarray(cell, dtype=np.int64)
    if np.any((cell < 0) | (cell >= spec.resolution)):
        raise ValueError("cell index out of range")
    corners = np.stack([spec.vertex(*(cell + off)) for off in CORNER_OFFSETS])
    return canonicalize(int(mask_from_signs(source.evaluate_signed(corners))))
