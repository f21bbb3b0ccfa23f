"""Per-cell Marching Cubes over (pseudo-)signed corner values, plus OBJ I/O.

Each cell carries its own 8 signed corner values, so neighbouring cells may
disagree about a shared corner. Vertices are keyed by their lattice edge
(``3 * vertex_id + axis``); two cells that both see a crossing on a shared
edge interpolate the same magnitudes and therefore share one vertex. Cells
that disagree leave open boundary edges rather than being repaired.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .field import FieldSource, GridSpec, TriangleMesh, UnsupportedKindError, sample_signed
from .mctables import EDGE_AXIS, EDGE_CORNERS, EDGE_START_OFFSET, TRI_COUNT, TRI_TABLE

T_EPS = 1e-6


class ObjParseError(ValueError):
    pass


def corner_masks(signed_corners: NDArray) -> NDArray:
    """Raw 8-bit masks; a corner is negative iff its sign bit is set (so -0.0 counts)."""
    neg = np.signbit(np.asarray(signed_corners, dtype=np.float64))
    return (neg * (1 << np.arange(8))).sum(axis=-1).astype(np.int64)


def mesh_cells(spec: GridSpec, cells: NDArray, signed_corners: NDArray) -> TriangleMesh:
    """Triangulate cells given their (M, 8) signed corner values.

    Magnitudes are the raw UDF values; crossing vertices sit at
    ``t = |v_a| / (|v_a| + |v_b|)`` along each sign-change edge ``a -> b``.
    """
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
    signed_corners = np.asarray(signed_corners, dtype=np.float64).reshape(-1, 8)
    masks = corner_masks(signed_corners)
    counts = TRI_COUNT[masks]
    keep = counts > 0
    if not keep.any():
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    cells, signed_corners, masks, counts = cells[keep], signed_corners[keep], masks[keep], counts[keep]

    tri_cell = np.repeat(np.arange(len(cells)), counts)
    slot = np.arange(len(tri_cell)) - np.repeat(np.cumsum(counts) - counts, counts)
    tri_edges = TRI_TABLE[masks[tri_cell], slot]  # (T, 3) local edge ids

    n1 = spec.resolution + 1
    start = cells[tri_cell][:, None, :] + EDGE_START_OFFSET[tri_edges]
    vid = (start[..., 0] * n1 + start[..., 1]) * n1 + start[..., 2]
    keys = 3 * vid + EDGE_AXIS[tri_edges]
    uniq, first, inverse = np.unique(keys.ravel(), return_index=True, return_inverse=True)

    # interpolate once per unique lattice edge, from its first occurrence
    occ_cell = np.repeat(tri_cell, 3)[first]
    occ_edge = tri_edges.ravel()[first]
    va = np.abs(signed_corners[occ_cell, EDGE_CORNERS[occ_edge, 0]])
    vb = np.abs(signed_corners[occ_cell, EDGE_CORNERS[occ_edge, 1]])
    total = va + vb
    t = np.divide(va, total, out=np.full_like(va, 0.5), where=total > 0)
    t = np.clip(t, T_EPS, 1.0 - T_EPS)

    axis = uniq % 3
    v0 = uniq // 3
    i, rem = np.divmod(v0, n1 * n1)
    j, k = np.divmod(rem, n1)
    idx = np.stack([i, j, k], axis=1).astype(np.float64)
    idx[np.arange(len(idx)), axis] += t
    lo = np.asarray(spec.lo, dtype=np.float64)
    verts = lo + idx * (spec.extent / spec.resolution)
    return TriangleMesh(verts, inverse.reshape(-1, 3))


def grid_cell_masks(signed: NDArray) -> NDArray:
    """(N, N, N) corner masks of every cell of a signed vertex grid."""
    neg = np.signbit(signed)
    out = np.zeros(tuple(s - 1 for s in signed.shape), dtype=np.int64)
    n = out.shape[0]
    for c in range(8):
        dx, dy, dz = c & 1, (c >> 1) & 1, (c >> 2) & 1
        out |= neg[dx:dx + n, dy:dy + n, dz:dz + n].astype(np.int64) << c
    return out


def mesh_signed_grid(spec: GridSpec, signed: NDArray) -> TriangleMesh:
    """Mesh every cell of a fully signed vertex grid."""
    from .signconfig import cell_corner_values

    masks = grid_cell_masks(signed)
    cells = np.argwhere((masks != 0) & (masks != 255))
    return mesh_cells(spec, cells, cell_corner_values(signed, cells))


def mesh_oracle(source: FieldSource, spec: GridSpec) -> TriangleMesh:
    """Mesh a signed-capable source using its true signs."""
    if not source.signed_capable:
        raise UnsupportedKindError(f"{source.kind} has no sign")
    signed = sample_signed(source, spec)
    # exact zeros count as negative, matching the label convention
    signed = np.where(signed == 0, -0.0, signed)
    return mesh_signed_grid(spec, signed)


def write_obj(mesh: TriangleMesh, path: str | Path) -> None:
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}\n" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}\n" for a, b, c in mesh.triangles]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.writelines(lines)


def read_obj(path: str | Path) -> TriangleMesh:
    """Read ``v``/``f`` records; polygons are fan-triangulated, other records ignored."""
    verts: list[tuple[float, float, float]] = []
    tris: list[tuple[int, int, int]] = []
    with open(path, encoding="ascii", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                try:
                    verts.append((float(parts[1]), float(parts[2]), float(parts[3])))
                except (IndexError, ValueError) as exc:
                    raise ObjParseError(f"{path}:{lineno}: malformed vertex record") from exc
            elif parts[0] == "f":
                try:
                    idx = [int(p.split("/")[0]) for p in parts[1:]]
                except ValueError as exc:
                    raise ObjParseError(f"{path}:{lineno}: malformed face record") from exc
                if len(idx) < 3:
                    raise ObjParseError(f"{path}:{lineno}: face needs at least 3 vertices")
                if min(idx) < 1:
                    raise ObjParseError(f"{path}:{lineno}: face index below 1 (OBJ indices are 1-based)")
                for a in range(1, len(idx) - 1):
                    tris.append((idx[0] - 1, idx[a] - 1, idx[a + 1] - 1))
    t = np.array(tris, dtype=np.int64).reshape(-1, 3)
    if len(t) and t.max() >= len(verts):
        raise ObjParseError(f"{path}: face index {t.max() + 1} exceeds vertex count {len(verts)}")
    return TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3), t)
