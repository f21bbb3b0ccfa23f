"""Surface-sampling metrics: L2 Chamfer distance and F1 at a distance threshold.

Conventions:

* Chamfer: mean squared point-to-mesh distance from samples of A to B, plus
  the same from B to A, divided by 2. Reports multiply by 1e5.
* Precision: fraction of predicted-surface samples within ``tau`` of the
  ground-truth mesh; recall swaps the roles; F1 is their harmonic mean
  (0 when both are 0).
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np
from numpy.typing import NDArray

from .bvh import TriangleBVH
from .field import TriangleMesh

DEFAULT_SAMPLES = 200_000
DEFAULT_TAU = 0.003
CSV_FIELDS = ["shape", "iteration", "chamfer_e5", "f1", "precision", "recall", "samples", "seed"]


class EmptyMeshError(ValueError):
    pass


def _require(mesh: TriangleMesh, name: str = "mesh") -> None:
    if mesh.n_triangles == 0:
        raise EmptyMeshError(f"{name} has no triangles")


def sample_surface(mesh: TriangleMesh, count: int, seed: int) -> NDArray:
    """Area-weighted uniform samples on the mesh surface."""
    if count == 0:
        return np.zeros((0, 3))
    _require(mesh)
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas()
    cum = np.cumsum(areas)
    tri = np.searchsorted(cum, rng.uniform(0.0, cum[-1], count), side="right")
    tri = np.minimum(tri, len(areas) - 1)
    r1 = np.sqrt(rng.uniform(size=count))
    r2 = rng.uniform(size=count)
    v = mesh.vertices[mesh.triangles[tri]]
    return ((1 - r1)[:, None] * v[:, 0] + (r1 * (1 - r2))[:, None] * v[:, 1]
            + (r1 * r2)[:, None] * v[:, 2])


def point_to_mesh(points: NDArray, mesh: TriangleMesh | TriangleBVH) -> NDArray:
    bvh = mesh if isinstance(mesh, TriangleBVH) else TriangleBVH(mesh.vertices, mesh.triangles)
    return bvh.query(points)[0]


@dataclass
class MetricReport:
    chamfer_l2: float
    f1: float
    precision: float
    recall: float
    samples: int
    seed: int

    @property
    def chamfer_e5(self) -> float:
        return self.chamfer_l2 * 1e5


def _two_way(a: TriangleMesh, b: TriangleMesh, count: int, seed: int) -> tuple[NDArray, NDArray]:
    _require(a, "first mesh")
    _require(b, "second mesh")
    pa = sample_surface(a, count, seed)
    pb = sample_surface(b, count, seed + 1)
    return point_to_mesh(pa, b), point_to_mesh(pb, a)


def chamfer_l2(a: TriangleMesh, b: TriangleMesh, count: int = DEFAULT_SAMPLES, seed: int = 0) -> float:
    da, db = _two_way(a, b, count, seed)
    return 0.5 * (float(np.mean(da ** 2)) + float(np.mean(db ** 2)))


def f1_from_distances(d_pred: NDArray, d_gt: NDArray, tau: float) -> tuple[float, float, float]:
    precision = float(np.mean(d_pred < tau))
    recall = float(np.mean(d_gt < tau))
    denom = precision + recall
    f1 = 2 * precision * recall / denom if denom > 0 else 0.0
    return f1, precision, recall


def evaluate(pred: TriangleMesh, gt: TriangleMesh, count: int = DEFAULT_SAMPLES,
             seed: int = 0, tau: float = DEFAULT_TAU) -> MetricReport:
    """Chamfer and F1 from one shared set of surface samples."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    d_pred, d_gt = _two_way(pred, gt, count, seed)
    f1, p, r = f1_from_distances(d_pred, d_gt, tau)
    cd = 0.5 * (float(np.mean(d_pred ** 2)) + float(np.mean(d_gt ** 2)))
    return MetricReport(cd, f1, p, r, count, seed)


def f1_score(pred: TriangleMesh, gt: TriangleMesh, tau: float = DEFAULT_TAU,
             count: int = DEFAULT_SAMPLES, seed: int = 0) -> MetricReport:
    return evaluate(pred, gt, count, seed, tau)


def csv_rows(rows: Iterable[tuple[str, int | str, MetricReport]], header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(CSV_FIELDS)
    for shape, iteration, rep in rows:
        w.writerow([shape, iteration, f"{rep.chamfer_e5:.6g}", f"{rep.f1:.6g}", f"{rep.precision:.6g}",
                    f"{rep.recall:.6g}", rep.samples, rep.seed])
    return buf.getvalue()


def summarize(reports: list[MetricReport]) -> dict[str, MetricReport]:
    """Median (headline) and mean over a set of reports."""
    if not reports:
        raise ValueError("no reports to summarize")
    keys = ["chamfer_l2", "f1", "precision", "recall"]
    arr = {k: np.array([asdict(r)[k] for r in reports]) for k in keys}
    base = dict(samples=reports[0].samples, seed=reports[0].seed)
    return {"median": MetricReport(**{k: float(np.median(v)) for k, v in arr.items()}, **base),
            "mean": MetricReport(**{k: float(np.mean(v)) for k, v in arr.items()}, **base)}
