"""Distance-field sources and regular-grid sampling.

Every source evaluates batches of points: ``evaluate(points)`` returns the
unsigned distance and its gradient, and signed-capable sources also implement
``evaluate_signed(points)``. Gradients are the zero vector at singular points
(sphere centres, medial axes with ambiguous nearest points, points on an open
surface), which keeps evaluation deterministic.

Grid layout: ``SampledGrid.values[i, j, k]`` is the field at
``lo + (hi - lo) * (i, j, k) / N``; flattening in C order makes ``k`` the
fastest index.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from numpy.typing import NDArray

from .bvh import TriangleBVH

_SINGULAR = 1e-12


class UnsupportedKindError(TypeError):
    """Raised when a signed query is made on an open (unsigned-only) surface."""


def _as_points(points) -> NDArray:
    p = np.asarray(points, dtype=np.float64)
    return p.reshape(-1, 3)


def _safe_normalize(v: NDArray) -> NDArray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    out = np.zeros_like(v)
    ok = n[..., 0] > _SINGULAR
    out[ok] = v[ok] / n[ok]
    return out


class FieldSource(ABC):
    """A distance field over R^3."""

    kind: str = ""
    signed_capable: bool = True

    def evaluate(self, points) -> tuple[NDArray, NDArray]:
        """Unsigned distance (P,) and gradient (P, 3) at each point."""
        sd, g = self.evaluate_signed_with_gradient(points)
        s = np.where(sd < 0, -1.0, 1.0)
        return np.abs(sd), g * s[:, None]

    def evaluate_signed(self, points) -> NDArray:
        """Signed distance: negative inside, positive outside."""
        return self.evaluate_signed_with_gradient(points)[0]

    @abstractmethod
    def evaluate_signed_with_gradient(self, points) -> tuple[NDArray, NDArray]:
        ...

    @abstractmethod
    def to_dict(self) -> dict[str, Any]:
        ...


class _OpenSurface(FieldSource):
    signed_capable = False

    def evaluate_signed_with_gradient(self, points):
        raise UnsupportedKindError(f"{self.kind} is an open surface and has no sign")

    @abstractmethod
    def closest_points(self, p: NDArray) -> NDArray:
        ...

    def evaluate(self, points):
        p = _as_points(points)
        c = self.closest_points(p)
        diff = p - c
        d = np.linalg.norm(diff, axis=1)
        return d, _safe_normalize(diff)


@dataclass(eq=False)
class Sphere(FieldSource):
    radius: float
    kind = "sphere"

    def evaluate_signed_with_gradient(self, points):
        p = _as_points(points)
        r = np.linalg.norm(p, axis=1)
        return r - self.radius, _safe_normalize(p)

    def to_dict(self):
        return {"kind": self.kind, "params": {"radius": self.radius}}


@dataclass(eq=False)
class Box(FieldSource):
    half_extents: tuple[float, float, float]
    kind = "box"

    def evaluate_signed_with_gradient(self, points):
        p = _as_points(points)
        h = np.asarray(self.half_extents, dtype=np.float64)
        q = np.abs(p) - h
        sgn = np.sign(p)
        qpos = np.maximum(q, 0.0)
        outside = np.linalg.norm(qpos, axis=1)
        qmax = q.max(axis=1)
        sd = outside + np.minimum(qmax, 0.0)
        grad = sgn * _safe_normalize(qpos)
        inside = qmax < 0
        if inside.any():
            qi = q[inside]
            axis = np.argmax(qi, axis=1)
            top = qi[np.arange(len(qi)), axis]
            tied = (qi == top[:, None]).sum(axis=1) > 1
            gi = np.zeros_like(qi)
            gi[np.arange(len(qi)), axis] = sgn[inside][np.arange(len(qi)), axis]
            # several faces equally near: the medial axis, gradient undefined
            gi[tied] = 0.0
            grad[inside] = gi
        return sd, grad

    def to_dict(self):
        return {"kind": self.kind, "params": {"half_extents": list(self.half_extents)}}


_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(eq=False)
class Torus(FieldSource):
    """Torus around ``axis`` with ring radius ``major`` and tube radius ``minor``."""

    major: float
    minor: float
    axis: str = "z"
    kind = "torus"

    def evaluate_signed_with_gradient(self, points):
        p = _as_points(points)
        a = _AXES[self.axis]
        plane = [i for i in range(3) if i != a]
        pp = p[:, plane]
        rho = np.linalg.norm(pp, axis=1)
        qx = rho - self.major
        qz = p[:, a]
        qn = np.hypot(qx, qz)
        sd = qn - self.minor
        grad = np.zeros_like(p)
        ok = (qn > _SINGULAR) & (rho > _SINGULAR)
        radial = pp[ok] / rho[ok, None]
        grad[np.ix_(ok, plane)] = radial * (qx[ok] / qn[ok])[:, None]
        grad[ok, a] = qz[ok] / qn[ok]
        return sd, grad

    def to_dict(self):
        return {"kind": self.kind, "params": {"major": self.major, "minor": self.minor, "axis": self.axis}}


@dataclass(eq=False)
class PlaneSlab(_OpenSurface):
    """Rectangle ``|x| <= a, |y| <= b`` in the plane ``z = 0`` (open surface)."""

    half_extents: tuple[float, float]
    kind = "plane-slab"

    def closest_points(self, p):
        a, b = self.half_extents
        c = np.zeros_like(p)
        c[:, 0] = np.clip(p[:, 0], -a, a)
        c[:, 1] = np.clip(p[:, 1], -b, b)
        return c

    def to_dict(self):
        return {"kind": self.kind, "params": {"half_extents": list(self.half_extents)}}


@dataclass(eq=False)
class OpenDisk(_OpenSurface):
    """Disk of ``radius`` in the plane ``z = 0`` (open surface)."""

    radius: float
    kind = "open-disk"

    def closest_points(self, p):
        c = np.zeros_like(p)
        rho = np.hypot(p[:, 0], p[:, 1])
        scale = np.where(rho > self.radius, self.radius / np.maximum(rho, _SINGULAR), 1.0)
        c[:, 0] = p[:, 0] * scale
        c[:, 1] = p[:, 1] * scale
        return c

    def to_dict(self):
        return {"kind": self.kind, "params": {"radius": self.radius}}


def _pick(values: NDArray, grads: NDArray, use_max: bool) -> tuple[NDArray, NDArray]:
    # values (C, P), grads (C, P, 3)
    idx = np.argmax(values, axis=0) if use_max else np.argmin(values, axis=0)
    cols = np.arange(values.shape[1])
    best = values[idx, cols]
    g = grads[idx, cols].copy()
    tied = (values == best[None, :]).sum(axis=0) > 1
    g[tied] = 0.0
    return best, g


@dataclass(eq=False)
class Union(FieldSource):
    children: list[FieldSource]
    kind = "union"

    def __post_init__(self):
        if not self.children:
            raise ValueError("union needs at least one child")
        self.signed_capable = all(c.signed_capable for c in self.children)

    def evaluate_signed_with_gradient(self, points):
        if not self.signed_capable:
            raise UnsupportedKindError("union with an open-surface child has no sign")
        parts = [c.evaluate_signed_with_gradient(points) for c in self.children]
        return _pick(np.stack([v for v, _ in parts]), np.stack([g for _, g in parts]), use_max=False)

    def evaluate(self, points):
        if self.signed_capable:
            return super().evaluate(points)
        parts = [c.evaluate(points) for c in self.children]
        return _pick(np.stack([v for v, _ in parts]), np.stack([g for _, g in parts]), use_max=False)

    def to_dict(self):
        return {"kind": self.kind, "params": {"children": [c.to_dict() for c in self.children]}}


@dataclass(eq=False)
class Intersection(FieldSource):
    children: list[FieldSource]
    kind = "intersection"

    def __post_init__(self):
        if not self.children:
            raise ValueError("intersection needs at least one child")
        if not all(c.signed_capable for c in self.children):
            raise UnsupportedKindError("intersection requires signed children")

    def evaluate_signed_with_gradient(self, points):
        parts = [c.evaluate_signed_with_gradient(points) for c in self.children]
        return _pick(np.stack([v for v, _ in parts]), np.stack([g for _, g in parts]), use_max=True)

    def to_dict(self):
        return {"kind": self.kind, "params": {"children": [c.to_dict() for c in self.children]}}


@dataclass(eq=False)
class Translate(FieldSource):
    child: FieldSource
    offset: tuple[float, float, float]
    kind = "translate"

    def __post_init__(self):
        self.signed_capable = self.child.signed_capable

    def evaluate_signed_with_gradient(self, points):
        return self.child.evaluate_signed_with_gradient(_as_points(points) - np.asarray(self.offset, float))

    def evaluate(self, points):
        return self.child.evaluate(_as_points(points) - np.asarray(self.offset, float))

    def to_dict(self):
        return {"kind": self.kind, "params": {"offset": list(self.offset), "child": self.child.to_dict()}}


@dataclass(eq=False)
class Scale(FieldSource):
    child: FieldSource
    factor: float
    kind = "scale"

    def __post_init__(self):
        if self.factor <= 0:
            raise ValueError("scale factor must be positive")
        self.signed_capable = self.child.signed_capable

    def evaluate_signed_with_gradient(self, points):
        sd, g = self.child.evaluate_signed_with_gradient(_as_points(points) / self.factor)
        return sd * self.factor, g

    def evaluate(self, points):
        d, g = self.child.evaluate(_as_points(points) / self.factor)
        return d * self.factor, g

    def to_dict(self):
        return {"kind": self.kind, "params": {"factor": self.factor, "child": self.child.to_dict()}}


@dataclass(eq=False)
class TriangleMesh:
    """Indexed triangle mesh."""

    vertices: NDArray
    triangles: NDArray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles):
            if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
                raise ValueError("triangle index out of range")
            t = self.triangles
            if np.any((t[:, 0] == t[:, 1]) & (t[:, 1] == t[:, 2])):
                raise ValueError("degenerate triangle with three identical indices")

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def face_areas(self) -> NDArray:
        v = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    def euler_characteristic(self) -> int:
        t = np.sort(self.triangles, axis=1)
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [0, 2]]])
        n_edges = len(np.unique(edges, axis=0))
        n_verts = len(np.unique(self.triangles))
        return n_verts - n_edges + len(self.triangles)

    def boundary_edge_count(self) -> int:
        """Undirected edges used by exactly one triangle (cracks and open borders)."""
        t = np.sort(self.triangles, axis=1)
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [0, 2]]])
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return int((counts == 1).sum())


class MeshUDF(FieldSource):
    """Exact unsigned distance to a triangle mesh.

    With ``ray_parity_sign`` the mesh is assumed closed and signed queries use
    a ray-crossing inside test.
    """

    kind = "mesh-udf"

    def __init__(self, mesh: TriangleMesh, ray_parity_sign: bool = False):
        if mesh.n_triangles == 0:
            raise ValueError("mesh-udf needs a nonempty mesh")
        self.mesh = mesh
        self.ray_parity_sign = ray_parity_sign
        self.signed_capable = ray_parity_sign
        self.bvh = TriangleBVH(mesh.vertices, mesh.triangles)

    def evaluate(self, points):
        return mesh_distance(self.bvh, points)

    def evaluate_signed_with_gradient(self, points):
        if not self.ray_parity_sign:
            raise UnsupportedKindError("mesh-udf without ray-parity sign is unsigned only")
        p = _as_points(points)
        d, g = self.evaluate(p)
        s = np.where(self.bvh.inside(p), -1.0, 1.0)
        return d * s, g * s[:, None]

    def to_dict(self):
        return {"kind": self.kind, "params": {
            "vertices": self.mesh.vertices.tolist(),
            "triangles": self.mesh.triangles.tolist(),
            "ray_parity_sign": self.ray_parity_sign}}


def mesh_distance(mesh: TriangleMesh | TriangleBVH, points) -> tuple[NDArray, NDArray]:
    """Distance and gradient ``(p - closest) / d`` from points to a mesh."""
    bvh = mesh if isinstance(mesh, TriangleBVH) else TriangleBVH(mesh.vertices, mesh.triangles)
    p = _as_points(points)
    d, c, _ = bvh.query(p)
    g = np.zeros_like(p)
    ok = d >= _SINGULAR
    g[ok] = (p[ok] - c[ok]) / d[ok, None]
    return d, g


# --- deterministic noise -------------------------------------------------

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_QUANTUM = 2.0 ** -20


def _splitmix(x: NDArray) -> NDArray:
    with np.errstate(over="ignore"):
        x = x + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return x ^ (x >> np.uint64(31))


def point_hash(seed: int, stream: int, points: NDArray) -> NDArray:
    """64-bit hash of (seed, stream, point quantised to 2^-20)."""
    q = np.round(_as_points(points) / _QUANTUM).astype(np.int64).view(np.uint64)
    h = _splitmix(np.full(len(q), np.uint64(seed & 0xFFFFFFFFFFFFFFFF)) ^ np.uint64(stream * 0x632BE59BD9B4E019 & 0xFFFFFFFFFFFFFFFF))
    for ax in range(3):
        h = _splitmix(h ^ q[:, ax])
    return h


def hashed_normal(seed: int, stream: int, points: NDArray) -> NDArray:
    """Standard normal draws keyed on point coordinates (Box-Muller)."""
    h1 = point_hash(seed, 2 * stream, points)
    h2 = point_hash(seed, 2 * stream + 1, points)
    scale = 2.0 ** -53
    u1 = ((h1 >> np.uint64(11)).astype(np.float64) + 0.5) * scale
    u2 = ((h2 >> np.uint64(11)).astype(np.float64) + 0.5) * scale
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@dataclass(eq=False)
class Corrupted(FieldSource):
    """Multiplicative Gaussian noise on value and gradient, then clamped to ``[0, clamp]``.

    Draws are hashed from ``(seed, point)``, so a point always receives the
    same perturbation regardless of batching.
    """

    child: FieldSource
    clamp: float = 0.1
    sigma: float = 0.0
    seed: int = 0
    kind = "corrupted"
    signed_capable = False

    def __post_init__(self):
        if self.clamp <= 0:
            raise ValueError("clamp must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    def evaluate(self, points):
        p = _as_points(points)
        d, g = self.child.evaluate(p)
        if self.sigma == 0:
            return np.minimum(d, self.clamp), g
        n_val = hashed_normal(self.seed, 0, p)
        n_grad = hashed_normal(self.seed, 1, p)
        # noise first, then clamp: saturated far-field values stay saturated
        d = np.clip(d * (1.0 + self.sigma * n_val), 0.0, self.clamp)
        return d, g * (1.0 + self.sigma * n_grad)[:, None]

    def evaluate_signed_with_gradient(self, points):
        raise UnsupportedKindError("corrupted fields are unsigned")

    def to_dict(self):
        return {"kind": self.kind, "params": {"clamp": self.clamp, "sigma": self.sigma,
                                              "seed": self.seed, "child": self.child.to_dict()}}


def corrupt(source: FieldSource, clamp: float = 0.1, sigma: float = 0.0, seed: int = 0) -> Corrupted:
    return Corrupted(source, clamp=clamp, sigma=sigma, seed=seed)


def evaluate(source: FieldSource, p: Sequence[float]) -> tuple[float, NDArray]:
    """Single-point convenience wrapper around ``source.evaluate``."""
    d, g = source.evaluate(np.asarray(p, dtype=np.float64)[None, :])
    return float(d[0]), g[0]


def evaluate_signed(source: FieldSource, p: Sequence[float]) -> float:
    if not source.signed_capable:
        raise UnsupportedKindError(f"{source.kind} has no sign")
    return float(source.evaluate_signed(np.asarray(p, dtype=np.float64)[None, :])[0])


# --- serialisation ---------------------------------------------------------

def _apply_transforms(src: FieldSource, transforms: list[dict]) -> FieldSource:
    for t in transforms:
        if "scale" in t:
            src = Scale(src, float(t["scale"]))
        elif "translate" in t:
            src = Translate(src, tuple(float(x) for x in t["translate"]))
        else:
            raise ValueError(f"unknown transform {t!r}")
    return src


def from_dict(d: dict[str, Any]) -> FieldSource:
    """Build a source from its JSON description (see docs/corpus.md)."""
    kind = d["kind"]
    params = d.get("params", {})
    if kind == "sphere":
        src = Sphere(float(params["radius"]))
    elif kind == "box":
        src = Box(tuple(float(x) for x in params["half_extents"]))
    elif kind == "torus":
        src = Torus(float(params["major"]), float(params["minor"]), params.get("axis", "z"))
    elif kind == "plane-slab":
        src = PlaneSlab(tuple(float(x) for x in params["half_extents"]))
    elif kind == "open-disk":
        src = OpenDisk(float(params["radius"]))
    elif kind == "union":
        src = Union([from_dict(c) for c in params["children"]])
    elif kind == "intersection":
        src = Intersection([from_dict(c) for c in params["children"]])
    elif kind == "translate":
        src = Translate(from_dict(params["child"]), tuple(float(x) for x in params["offset"]))
    elif kind == "scale":
        src = Scale(from_dict(params["child"]), float(params["factor"]))
    elif kind == "mesh-udf":
        src = MeshUDF(TriangleMesh(params["vertices"], params["triangles"]),
                      bool(params.get("ray_parity_sign", False)))
    elif kind == "corrupted":
        src = Corrupted(from_dict(params["child"]), float(params.get("clamp", 0.1)),
                        float(params.get("sigma", 0.0)), int(params.get("seed", 0)))
    else:
        raise ValueError(f"unknown field kind {kind!r}")
    return _apply_transforms(src, d.get("transforms", []))


# --- grids -----------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Regular lattice of ``resolution`` cells per axis over ``[lo, hi]``."""

    resolution: int
    lo: tuple[float, float, float] = (-1.0, -1.0, -1.0)
    hi: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if int(self.resolution) != self.resolution or self.resolution < 2:
            raise ValueError("resolution must be an integer >= 2")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("domain must have positive extent on every axis")

    @property
    def extent(self) -> NDArray:
        return np.asarray(self.hi, float) - np.asarray(self.lo, float)

    @property
    def cell_size(self) -> float:
        """Largest cell edge; equals extent / N on cubic domains."""
        return float(self.extent.max() / self.resolution)

    @property
    def n_vertices(self) -> int:
        return (self.resolution + 1) ** 3

    def axis_coords(self, axis: int) -> NDArray:
        n = self.resolution
        return self.lo[axis] + self.extent[axis] * (np.arange(n + 1) / n)

    def vertex(self, i: int, j: int, k: int) -> NDArray:
        return np.array([self.axis_coords(a)[idx] for a, idx in enumerate((i, j, k))])

    def vertices(self, i0: int = 0, i1: int | None = None) -> NDArray:
        """(n, 3) vertex positions for x-slabs ``i0..i1`` in C order."""
        xs, ys, zs = (self.axis_coords(a) for a in range(3))
        i1 = len(xs) if i1 is None else i1
        g = np.meshgrid(xs[i0:i1], ys, zs, indexing="ij")
        return np.stack([a.ravel() for a in g], axis=1)


@dataclass(eq=False)
class SampledGrid:
    """Field values (N+1,)*3 and gradients (N+1,)*3 + (3,) at lattice vertices."""

    spec: GridSpec
    values: NDArray
    gradients: NDArray

    def __post_init__(self):
        n = self.spec.resolution + 1
        if self.values.shape != (n, n, n) or self.gradients.shape != (n, n, n, 3):
            raise ValueError("grid arrays do not match the spec resolution")


def sample_grid(source: FieldSource, spec: GridSpec, chunk: int = 1 << 20) -> SampledGrid:
    n = spec.resolution + 1
    values = np.empty((n, n, n))
    grads = np.empty((n, n, n, 3))
    slab = max(1, chunk // (n * n))
    for i0 in range(0, n, slab):
        i1 = min(n, i0 + slab)
        d, g = source.evaluate(spec.vertices(i0, i1))
        values[i0:i1] = d.reshape(i1 - i0, n, n)
        grads[i0:i1] = g.reshape(i1 - i0, n, n, 3)
    return SampledGrid(spec, values, grads)


def sample_signed(source: FieldSource, spec: GridSpec, chunk: int = 1 << 20) -> NDArray:
    """Signed field at every lattice vertex, shape (N+1,)*3."""
    if not source.signed_capable:
        raise UnsupportedKindError(f"{source.kind} has no sign")
    n = spec.resolution + 1
    out = np.empty((n, n, n))
    slab = max(1, chunk // (n * n))
    for i0 in range(0, n, slab):
        i1 = min(n, i0 + slab)
        out[i0:i1] = source.evaluate_signed(spec.vertices(i0, i1)).reshape(i1 - i0, n, n)
    return out
