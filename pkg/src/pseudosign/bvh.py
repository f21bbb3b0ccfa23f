"""Bounding-volume hierarchy for exact point-to-triangle-mesh distance queries.

The tree is an axis-aligned box hierarchy built by median split on triangle
centroids. Queries descend nearest-child-first and prune any subtree whose box
is farther than the best distance found so far, so the result is the exact
minimum over all triangles.
"""
from __future__ import annotations

import numba as nb
import numpy as np
from numpy.typing import NDArray

LEAF_SIZE = 4


@nb.njit(cache=True)
def closest_point_on_triangle(p, a, b, c):
    """Closest point to ``p`` on triangle ``abc`` (Voronoi-region walk)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab[0] * ap[0] + ab[1] * ap[1] + ab[2] * ap[2]
    d2 = ac[0] * ap[0] + ac[1] * ap[1] + ac[2] * ap[2]
    if d1 <= 0.0 and d2 <= 0.0:
        return a.copy()
    bp = p - b
    d3 = ab[0] * bp[0] + ab[1] * bp[1] + ab[2] * bp[2]
    d4 = ac[0] * bp[0] + ac[1] * bp[1] + ac[2] * bp[2]
    if d3 >= 0.0 and d4 <= d3:
        return b.copy()
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return a + v * ab
    cp = p - c
    d5 = ab[0] * cp[0] + ab[1] * cp[1] + ab[2] * cp[2]
    d6 = ac[0] * cp[0] + ac[1] * cp[1] + ac[2] * cp[2]
    if d6 >= 0.0 and d5 <= d6:
        return c.copy()
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return a + w * ac
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b + w * (c - b)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return a + ab * v + ac * w


@nb.njit(cache=True)
def _build(tri, leaf_size):
    n = tri.shape[0]
    centroids = (tri[:, 0, :] + tri[:, 1, :] + tri[:, 2, :]) / 3.0
    order = np.arange(n)
    max_nodes = 2 * n + 1
    lo = np.empty((max_nodes, 3))
    hi = np.empty((max_nodes, 3))
    # child < 0 marks a leaf holding order[start:start + count]
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    start = np.zeros(max_nodes, np.int64)
    count = np.zeros(max_nodes, np.int64)

    stack = np.empty(max_nodes, np.int64)
    n_nodes = 1
    start[0] = 0
    count[0] = n
    top = 0
    stack[0] = 0
    while top >= 0:
        node = stack[top]
        top -= 1
        s = start[node]
        k = count[node]
        for ax in range(3):
            lo[node, ax] = np.inf
            hi[node, ax] = -np.inf
        for t in range(s, s + k):
            for v in range(3):
                for ax in range(3):
                    x = tri[order[t], v, ax]
                    if x < lo[node, ax]:
                        lo[node, ax] = x
                    if x > hi[node, ax]:
                        hi[node, ax] = x
        if k <= leaf_size:
            continue
        cmin = np.full(3, np.inf)
        cmax = np.full(3, -np.inf)
        for t in range(s, s + k):
            for ax in range(3):
                x = centroids[order[t], ax]
                if x < cmin[ax]:
                    cmin[ax] = x
                if x > cmax[ax]:
                    cmax[ax] = x
        axis = np.argmax(cmax - cmin)
        seg = order[s:s + k]
        keys = centroids[seg, axis]
        # stable sort keeps the build deterministic under centroid ties
        seg = seg[np.argsort(keys, kind="mergesort")]
        order[s:s + k] = seg
        half = k // 2
        l_node = n_nodes
        r_node = n_nodes + 1
        n_nodes += 2
        start[l_node] = s
        count[l_node] = half
        start[r_node] = s + half
        count[r_node] = k - half
        left[node] = l_node
        right[node] = r_node
        top += 1
        stack[top] = l_node
        top += 1
        stack[top] = r_node
    return lo[:n_nodes], hi[:n_nodes], left[:n_nodes], right[:n_nodes], start[:n_nodes], count[:n_nodes], order


@nb.njit(cache=True)
def _box_dist2(p, lo, hi):
    d2 = 0.0
    for ax in range(3):
        if p[ax] < lo[ax]:
            t = lo[ax] - p[ax]
            d2 += t * t
        elif p[ax] > hi[ax]:
            t = p[ax] - hi[ax]
            d2 += t * t
    return d2


@nb.njit(cache=True)
def _query(points, tri, lo, hi, left, right, start, count, order):
    m = points.shape[0]
    dist = np.empty(m)
    closest = np.empty((m, 3))
    index = np.empty(m, np.int64)
    stack = np.empty(256, np.int64)
    for q in range(m):
        p = points[q]
        best = np.inf
        best_pt = np.zeros(3)
        best_t = -1
        top = 0
        stack[0] = 0
        while top >= 0:
            node = stack[top]
            top -= 1
            if _box_dist2(p, lo[node], hi[node]) >= best:
                continue
            if left[node] < 0:
                for t in range(start[node], start[node] + count[node]):
                    tid = order[t]
                    cp = closest_point_on_triangle(p, tri[tid, 0], tri[tid, 1], tri[tid, 2])
                    d0 = p[0] - cp[0]
                    d1 = p[1] - cp[1]
                    d2 = p[2] - cp[2]
                    dd = d0 * d0 + d1 * d1 + d2 * d2
                    # ties resolve to the lowest triangle id for determinism
                    if dd < best or (dd == best and tid < best_t):
                        best = dd
                        best_pt = cp
                        best_t = tid
                continue
            a = left[node]
            b = right[node]
            da = _box_dist2(p, lo[a], hi[a])
            db = _box_dist2(p, lo[b], hi[b])
            # push the farther child first so the nearer one is popped next
            if da <= db:
                top += 1
                stack[top] = b
                top += 1
                stack[top] = a
            else:
                top += 1
                stack[top] = a
                top += 1
                stack[top] = b
        dist[q] = np.sqrt(best)
        closest[q] = best_pt
        index[q] = best_t
    return dist, closest, index


@nb.njit(cache=True)
def _brute(points, tri):
    m = points.shape[0]
    dist = np.empty(m)
    for q in range(m):
        best = np.inf
        for t in range(tri.shape[0]):
            cp = closest_point_on_triangle(points[q], tri[t, 0], tri[t, 1], tri[t, 2])
            d = points[q] - cp
            dd = d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
            if dd < best:
                best = dd
        dist[q] = np.sqrt(best)
    return dist


@nb.njit(cache=True)
def _ray_parity(points, tri, direction):
    # Moller-Trumbore crossing count along a fixed ray
    m = points.shape[0]
    inside = np.zeros(m, np.bool_)
    for q in range(m):
        o = points[q]
        hits = 0
        for t in range(tri.shape[0]):
            e1 = tri[t, 1] - tri[t, 0]
            e2 = tri[t, 2] - tri[t, 0]
            pv = np.cross(direction, e2)
            det = np.dot(e1, pv)
            if abs(det) < 1e-14:
                continue
            inv = 1.0 / det
            tv = o - tri[t, 0]
            u = np.dot(tv, pv) * inv
            if u < 0.0 or u > 1.0:
                continue
            qv = np.cross(tv, e1)
            v = np.dot(direction, qv) * inv
            if v < 0.0 or u + v > 1.0:
                continue
            if np.dot(e2, qv) * inv > 0.0:
                hits += 1
        inside[q] = hits % 2 == 1
    return inside


class TriangleBVH:
    """Static BVH over a triangle soup.

    Args:
        vertices: (V, 3) vertex positions.
        triangles: (T, 3) vertex indices.
    """

    def __init__(self, vertices: NDArray, triangles: NDArray, leaf_size: int = LEAF_SIZE):
        vertices = np.asarray(vertices, dtype=np.float64)
        triangles = np.asarray(triangles, dtype=np.int64)
        if len(triangles) == 0:
            raise ValueError("cannot build a BVH over an empty mesh")
        self.tri = np.ascontiguousarray(vertices[triangles])
        (self._lo, self._hi, self._left, self._right,
         self._start, self._count, self._order) = _build(self.tri, leaf_size)

    @property
    def n_triangles(self) -> int:
        return len(self.tri)

    def query(self, points: NDArray) -> tuple[NDArray, NDArray, NDArray]:
        """Return (distance, closest point, triangle index) per query point."""
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        return _query(pts, self.tri, self._lo, self._hi, self._left, self._right,
                      self._start, self._count, self._order)

    def brute_force_distance(self, points: NDArray) -> NDArray:
        """Exhaustive per-triangle minimum; the oracle for :meth:`query`."""
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        return _brute(pts, self.tri)

    def inside(self, points: NDArray) -> NDArray:
        """Ray-parity inside test. Only meaningful for closed meshes."""
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        # irrational-ish direction avoids grazing axis-aligned edges
        direction = np.array([0.8728715609, 0.2182178902, 0.4364357805])
        return _ray_parity(pts, self.tri, direction)
