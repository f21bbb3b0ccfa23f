import numpy as np
import pytest

from pseudosign import metrics
from pseudosign.field import GridSpec, Sphere, TriangleMesh, Translate
from pseudosign.mesher import mesh_oracle


def test_sample_centroid():
    tri = TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float), np.array([[0, 1, 2]]))
    p = metrics.sample_surface(tri, 100_000, 0)
    assert np.allclose(p.mean(axis=0), [1 / 3, 1 / 3, 0], atol=0.01)
    assert np.all(p[:, 0] + p[:, 1] <= 1 + 1e-12) and np.all(p >= -1e-12)


def test_sample_split_binomial():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 0, 0], [6, 0, 0], [5, 1, 0]], float)
    m = TriangleMesh(v, np.array([[0, 1, 2], [3, 4, 5]]))
    n = 100_000
    k = (metrics.sample_surface(m, n, 1)[:, 0] > 2.5).sum()
    assert abs(k - n / 2) < 3 * np.sqrt(n / 4)


def test_sample_empty():
    tri = TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float), np.array([[0, 1, 2]]))
    assert metrics.sample_surface(tri, 0, 0).shape == (0, 3)
    with pytest.raises(metrics.EmptyMeshError):
        metrics.chamfer_l2(TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3))), tri)


@pytest.fixture(scope="module")
def spheres():
    spec = GridSpec(128)
    return {r: mesh_oracle(Sphere(r), spec) for r in (0.5, 0.501, 0.51)}


def test_self_distance_zero(spheres):
    m = spheres[0.5]
    assert metrics.chamfer_l2(m, m, 20_000) < 1e-12
    rep = metrics.evaluate(m, m, 20_000)
    assert rep.f1 == 1.0


def test_concentric_offset(spheres):
    cd = metrics.chamfer_l2(spheres[0.5], spheres[0.51], 50_000)
    assert cd == pytest.approx(1e-4, rel=0.1)
    assert metrics.chamfer_l2(spheres[0.51], spheres[0.5], 50_000) == pytest.approx(cd, rel=0.02)


def test_f1_threshold(spheres):
    assert metrics.evaluate(spheres[0.51], spheres[0.5], 20_000).f1 == 0.0
    assert metrics.evaluate(spheres[0.501], spheres[0.5], 20_000).f1 == 1.0


def test_translation_scales_quadratically():
    m = mesh_oracle(Sphere(0.4), GridSpec(48))
    def shifted(t):
        return TriangleMesh(m.vertices + [t, 0, 0], m.triangles)
    a = metrics.chamfer_l2(m, shifted(0.002), 20_000)
    b = metrics.chamfer_l2(m, shifted(0.004), 20_000)
    assert b / a == pytest.approx(4, rel=0.15)


def test_csv_and_summary():
    reps = [metrics.MetricReport(c, f, f, f, 10, 0) for c, f in [(1e-5, 0.5), (3e-5, 0.7), (1e-4, 0.9)]]
    s = metrics.summarize(reps)
    assert s["median"].chamfer_l2 == 3e-5 and s["mean"].f1 == pytest.approx(0.7)
    text = metrics.csv_rows([("a", 1, reps[0])])
    assert text.splitlines()[0] == ",".join(metrics.CSV_FIELDS)
    assert text.splitlines()[1].startswith("a,1,1,")
    with pytest.raises(ValueError):
        metrics.evaluate(reps and TriangleMesh(np.eye(3), [[0, 1, 2]]), TriangleMesh(np.eye(3), [[0, 1, 2]]), tau=0)
