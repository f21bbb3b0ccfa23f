"""Marching Cubes lookup tables, generated from the corner convention.

Corners follow :mod:`pseudosign.signconfig` (bit 0 = x, bit 1 = y, bit 2 = z).
Edges are numbered by axis, then by the offsets of the two fixed axes::

    x-edges 0..3: (0,1) (2,3) (4,5) (6,7)
    y-edges 4..7: (0,2) (1,3) (4,6) (5,7)
    z-edges 8..11: (0,4) (1,5) (2,6) (3,7)

Instead of a transcribed table, each entry is built from the iso-contour on
the cube's six faces. On a face with two diagonal negative corners the contour
is ambiguous; it is resolved by keeping the diagonal through the face's
minimum-coordinate corner connected. That choice depends only on the face
itself, so the two cells sharing a face always agree, and it ignores which
side is negative, so a mask and its complement give the same triangles with
opposite winding. Face segments are chained into closed loops, and each loop is
triangulated without in-face diagonals where possible. Unambiguous masks reproduce the
usual 15 topological cases.

Triangles are wound so that normals point from negative into positive corners.
"""
from __future__ import annotations

import numpy as np

from .signconfig import CORNER_OFFSETS

EDGE_CORNERS = np.array([
    (0, 1), (2, 3), (4, 5), (6, 7),
    (0, 2), (1, 3), (4, 6), (5, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
], dtype=np.int64)
EDGE_AXIS = np.repeat(np.arange(3), 4)

_EDGE_OF_PAIR = {}
for _e, (_a, _b) in enumerate(EDGE_CORNERS):
    _EDGE_OF_PAIR[(int(_a), int(_b))] = _e
    _EDGE_OF_PAIR[(int(_b), int(_a))] = _e


def _corner(offset) -> int:
    return int(offset[0]) | (int(offset[1]) << 1) | (int(offset[2]) << 2)


def _face_walks() -> list[list[int]]:
    """Corner cycles of the 6 faces, counter-clockwise seen from outside,
    each starting at the face's minimum corner."""
    walks = []
    for axis in range(3):
        u, v = (axis + 1) % 3, (axis + 2) % 3
        for side in (0, 1):
            cyc = []
            for du, dv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                off = [0, 0, 0]
                off[axis], off[u], off[v] = side, du, dv
                cyc.append(_corner(off))
            if side == 0:
                cyc = [cyc[0]] + cyc[1:][::-1]
            walks.append(cyc)
    return walks


FACE_WALKS = _face_walks()


def _loops(mask: int) -> list[list[int]]:
    neg = [(mask >> c) & 1 for c in range(8)]
    succ: dict[int, int] = {}
    for walk in FACE_WALKS:
        trans = []  # (step, kind, edge); kind +1: neg -> pos, -1: pos -> neg
        for j in range(4):
            a, b = walk[j], walk[(j + 1) % 4]
            if neg[a] != neg[b]:
                trans.append((j, 1 if neg[a] else -1, _EDGE_OF_PAIR[(a, b)]))
        if len(trans) == 2:
            start = next(t for t in trans if t[1] == 1)
            end = next(t for t in trans if t[1] == -1)
            succ[start[2]] = end[2]
        elif len(trans) == 4:
            step = 1 if neg[walk[0]] else -1
            for i, (_, kind, edge) in enumerate(trans):
                if kind == 1:
                    succ[edge] = trans[(i + step) % 4][2]
    loops = []
    seen: set[int] = set()
    for e0 in sorted(succ):
        if e0 in seen:
            continue
        loop = [e0]
        seen.add(e0)
        e = succ[e0]
        while e != e0:
            loop.append(e)
            seen.add(e)
            e = succ[e]
        loops.append(loop)
    return loops


def _edge_faces() -> list[frozenset[int]]:
    faces = [set() for _ in range(12)]
    for f, walk in enumerate(FACE_WALKS):
        for j in range(4):
            faces[_EDGE_OF_PAIR[(walk[j], walk[(j + 1) % 4])]].add(f)
    return [frozenset(x) for x in faces]


EDGE_FACES = _edge_faces()


def _diagonal_cost(a: int, b: int) -> int:
    shared = EDGE_FACES[a] & EDGE_FACES[b]
    # FACE_WALKS order is (axis, side); odd indices are the upper faces
    return sum(100 if f % 2 else 1 for f in shared)


def _polygon_triangulations(lo: int, hi: int, memo: dict) -> list[list[tuple[int, int, int]]]:
    """All triangulations of the convex polygon with vertex positions lo..hi."""
    if hi - lo < 2:
        return [[]]
    key = (lo, hi)
    if key not in memo:
        out = []
        for k in range(lo + 1, hi):
            for left in _polygon_triangulations(lo, k, memo):
                for right in _polygon_triangulations(k, hi, memo):
                    out.append(left + [(lo, k, hi)] + right)
        memo[key] = out
    return memo[key]


def _triangulate_loop(loop: list[int]) -> list[tuple[int, int, int]]:
    """Triangulate one contour loop, wound along the loop order.

    A diagonal joining two crossings on the same cube face lies in that face.
    If both cells sharing the face did this, they would emit the same edge
    twice, so in-face diagonals are kept off the cell's upper faces and
    minimised on the lower ones. Ties go to the smallest sorted set of
    diagonals in edge ids, which does not depend on the loop's direction.
    """
    n = len(loop)
    best = None
    for tris in _polygon_triangulations(0, n - 1, {}):
        diags = set()
        for a, b, c in tris:
            for i, j in ((a, b), (b, c), (a, c)):
                if (j - i) % n not in (1, n - 1):
                    diags.add(tuple(sorted((loop[i], loop[j]))))
        bad = sum(_diagonal_cost(a, b) for a, b in diags)
        key = (bad, sorted(diags))
        if best is None or key < best[0]:
            best = (key, tris)
    return [(loop[a], loop[b], loop[c]) for a, b, c in best[1]]


def _triangulate(mask: int) -> list[tuple[int, int, int]]:
    tris = []
    for loop in _loops(mask):
        # chained loops wind towards the negative side; reverse for outward normals
        tris += _triangulate_loop(loop[::-1])
    return tris


def _build_tables():
    entries = [_triangulate(m) for m in range(256)]
    max_t = max(len(t) for t in entries)
    count = np.array([len(t) for t in entries], dtype=np.int64)
    table = np.full((256, max_t, 3), -1, dtype=np.int64)
    for m, tris in enumerate(entries):
        if tris:
            table[m, :len(tris)] = tris
    return count, table


TRI_COUNT, TRI_TABLE = _build_tables()
MAX_TRIANGLES = TRI_TABLE.shape[1]
EDGE_START_OFFSET = CORNER_OFFSETS[EDGE_CORNERS[:, 0]]
