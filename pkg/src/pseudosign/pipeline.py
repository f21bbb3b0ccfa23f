"""End-to-end meshing of a UDF source through the iterative classifier."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nnet
from .field import FieldSource, GridSpec, SampledGrid, TriangleMesh
from .mesher import mesh_cells
from .refiner import RefineConfig, RefineState, prepare_grid, pseudo_sdf, refine
from .trainer import DATASET_MAGIC, DATASET_VERSION


@dataclass
class MeshingResult:
    grid: SampledGrid
    state: RefineState
    meshes: list[TriangleMesh]

    @property
    def mesh(self) -> TriangleMesh:
        return self.meshes[-1]


def mesh_state(grid: SampledGrid, state: RefineState, categories=None) -> TriangleMesh:
    cats = state.categories if categories is None else categories
    return mesh_cells(grid.spec, state.cells, pseudo_sdf(grid, state.cells, cats))


def mesh_grid(model: nnet.MlpModel, grid: SampledGrid, config: RefineConfig,
              snapshots: bool = True) -> MeshingResult:
    state = refine(model, grid, config)
    if len(state.cells) == 0:
        empty = TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
        return MeshingResult(grid, state, [empty])
    cats = state.snapshots if snapshots else state.snapshots[-1:]
    return MeshingResult(grid, state, [mesh_state(grid, state, c) for c in cats])


def mesh_source(model: nnet.MlpModel, source: FieldSource, spec: GridSpec, config: RefineConfig,
                snapshots: bool = True) -> MeshingResult:
    """Sample ``source`` once (clamped, optionally corrupted) and mesh it."""
    return mesh_grid(model, prepare_grid(source, spec, config), config, snapshots)


def dump_snapshots(result: MeshingResult, path: str | Path) -> None:
    """Per-iteration categories in the ``UDFD`` dataset layout, one record per iteration."""
    st = result.state
    parts = [DATASET_MAGIC, struct.pack("<II", DATASET_VERSION, len(st.snapshots))]
    for cats in st.snapshots:
        parts.append(struct.pack("<II", result.grid.spec.resolution, len(st.cells)))
        parts.append(np.ascontiguousarray(st.cells, dtype="<u2").tobytes())
        parts.append(np.ascontiguousarray(st.local, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(cats, dtype="u1").tobytes())
    Path(path).write_bytes(b"".join(parts))
