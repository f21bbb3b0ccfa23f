import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pseudosign import field as F
from pseudosign.bvh import TriangleBVH


def fd_grad(src, p, h=1e-6):
    g = np.zeros(3)
    for a in range(3):
        e = np.zeros(3)
        e[a] = h
        g[a] = (src.evaluate(p[None] + e)[0][0] - src.evaluate(p[None] - e)[0][0]) / (2 * h)
    return g


def test_sphere_values():
    d, g = F.evaluate(F.Sphere(0.5), (0.75, 0, 0))
    assert d == pytest.approx(0.25) and np.allclose(g, [1, 0, 0])
    d, g = F.evaluate(F.Sphere(0.5), (0, 0, 0))
    assert d == pytest.approx(0.5) and np.allclose(g, 0)


def test_signed_examples():
    assert F.evaluate_signed(F.Sphere(0.5), (0, 0, 0)) == pytest.approx(-0.5)
    assert F.evaluate_signed(F.Sphere(0.5), (1, 0, 0)) == pytest.approx(0.5)
    assert F.evaluate_signed(F.Box((0.4, 0.4, 0.4)), (0.3, 0, 0)) == pytest.approx(-0.1)


def test_union_is_pointwise_min():
    a = F.Sphere(0.3)
    b = F.Translate(F.Sphere(0.3), (1, 0, 0))
    u = F.Union([a, b])
    rng = np.random.default_rng(0)
    p = rng.uniform(-1, 2, (500, 3))
    assert np.allclose(u.evaluate(p)[0], np.minimum(a.evaluate(p)[0], b.evaluate(p)[0]))
    d, _ = F.evaluate(u, (0.5, 0, 0))
    assert d == pytest.approx(0.2)


def test_union_tie_gives_zero_gradient():
    u = F.Union([F.Sphere(0.3), F.Translate(F.Sphere(0.3), (1, 0, 0))])
    _, g = F.evaluate(u, (0.5, 0, 0))
    assert np.allclose(g, 0)


def test_triangle_mesh_udf():
    mesh = F.TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float), np.array([[0, 1, 2]]))
    udf = F.MeshUDF(mesh)
    d, g = F.evaluate(udf, (0.25, 0.25, 0.5))
    assert d == pytest.approx(0.5) and np.allclose(g, [0, 0, 1])
    d, _ = F.evaluate(udf, (2, 0, 0))
    assert d == pytest.approx(1.0)


def test_bvh_matches_brute_force():
    rng = np.random.default_rng(1)
    v = rng.uniform(-1, 1, (300, 3))
    t = rng.integers(0, 300, (100, 3))
    t = t[(t[:, 0] != t[:, 1]) & (t[:, 1] != t[:, 2]) & (t[:, 0] != t[:, 2])]
    bvh = TriangleBVH(v, t)
    q = rng.uniform(-1.5, 1.5, (1000, 3))
    assert np.allclose(bvh.query(q)[0], bvh.brute_force_distance(q), atol=1e-9, rtol=0)


def test_degenerate_triangle_rejected():
    with pytest.raises(ValueError):
        F.TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], float), np.array([[1, 1, 1]]))
    with pytest.raises(ValueError):
        F.TriangleMesh(np.zeros((3, 3)), np.array([[0, 1, 5]]))


SOURCES = [
    F.Sphere(0.5),
    F.Box((0.3, 0.4, 0.2)),
    F.Torus(0.4, 0.15, "y"),
    F.Scale(F.Translate(F.Sphere(0.3), (0.1, 0, 0)), 1.5),
    F.Intersection([F.Box((0.3, 0.3, 0.3)), F.Sphere(0.4)]),
]


@pytest.mark.parametrize("src", SOURCES, ids=lambda s: s.kind)
def test_gradient_matches_finite_differences(src):
    rng = np.random.default_rng(2)
    p = rng.uniform(-0.9, 0.9, (200, 3))
    d, g = src.evaluate(p)
    ok = 0
    for i in range(len(p)):
        fd = fd_grad(src, p[i])
        # skip medial-axis / kink points where the field is not differentiable
        if abs(np.linalg.norm(fd) - 1) > 1e-4:
            continue
        assert np.allclose(g[i], fd, atol=1e-4)
        ok += 1
    assert ok > 150


@pytest.mark.parametrize("src", SOURCES, ids=lambda s: s.kind)
def test_unsigned_is_abs_signed(src):
    p = np.random.default_rng(3).uniform(-1, 1, (1000, 3))
    assert np.allclose(src.evaluate(p)[0], np.abs(src.evaluate_signed(p)))


def test_open_surfaces_are_unsigned():
    disk = F.OpenDisk(0.5)
    d, g = F.evaluate(disk, (0.2, 0, 0.3))
    assert d == pytest.approx(0.3) and np.allclose(g, [0, 0, 1])
    d, _ = F.evaluate(F.PlaneSlab((0.5, 0.5)), (1.0, 0, 0))
    assert d == pytest.approx(0.5)
    with pytest.raises(F.UnsupportedKindError):
        F.evaluate_signed(disk, (0, 0, 0))
    with pytest.raises(F.UnsupportedKindError):
        F.Intersection([disk, F.Sphere(0.5)])


def test_corruption_identity_and_clamp():
    s = F.Sphere(0.5)
    p = np.random.default_rng(4).uniform(-1, 1, (100, 3))
    d, g = F.corrupt(s, 0.1, 0.0).evaluate(p)
    d0, g0 = s.evaluate(p)
    assert np.array_equal(d, np.minimum(d0, 0.1)) and np.array_equal(g, g0)
    d, _ = F.evaluate(F.corrupt(s, 0.1, 0.0), (0.8, 0, 0))
    assert d == 0.1


def test_corruption_mean_unbiased():
    # hashed noise differs per point: sample 1e5 points on the 0.05 level set
    rng = np.random.default_rng(5)
    v = rng.standard_normal((100_000, 3))
    p = 0.55 * v / np.linalg.norm(v, axis=1, keepdims=True)
    d, _ = F.corrupt(F.Sphere(0.5), 0.1, 1.0, seed=3).evaluate(p)
    se = d.std() / np.sqrt(len(d))
    assert abs(d.mean() - 0.05) < 3 * se
    assert d.min() >= 0 and d.max() <= 0.1


def test_corruption_keeps_far_field_saturated():
    p = np.random.default_rng(6).uniform(-1, 1, (20_000, 3))
    p = p[np.linalg.norm(p, axis=1) > 0.9]  # clean distance > 0.4 from a r=0.5 sphere
    d, g = F.corrupt(F.Sphere(0.5), 0.1, 0.3, seed=1).evaluate(p)
    assert np.mean(d == 0.1) > 0.99
    assert not np.allclose(g, F.Sphere(0.5).evaluate(p)[1])


def test_hashed_normal_statistics():
    p = np.random.default_rng(6).uniform(-1, 1, (200_000, 3))
    n = F.hashed_normal(0, 0, p)
    assert abs(n.mean()) < 0.01 and abs(n.std() - 1) < 0.01
    assert np.array_equal(n, F.hashed_normal(0, 0, p))
    assert not np.array_equal(n, F.hashed_normal(1, 0, p))


def test_grid_sampling():
    g = F.sample_grid(F.Sphere(0.5), F.GridSpec(2))
    assert g.values[1, 1, 1] == pytest.approx(0.5)
    spec = F.GridSpec(64)
    assert spec.vertices().shape[0] == 65 ** 3 == 274_625
    c = F.corrupt(F.Sphere(0.5), 0.1, 0.3, seed=7)
    a, b = F.sample_grid(c, F.GridSpec(32)), F.sample_grid(c, F.GridSpec(32))
    assert a.values.tobytes() == b.values.tobytes() and a.gradients.tobytes() == b.gradients.tobytes()


def test_grid_chunking_is_invisible():
    spec = F.GridSpec(16)
    a = F.sample_grid(F.Torus(0.5, 0.2), spec)
    b = F.sample_grid(F.Torus(0.5, 0.2), spec, chunk=17 * 17)
    assert np.array_equal(a.values, b.values)


def test_gridspec_validation():
    with pytest.raises(ValueError):
        F.GridSpec(1)
    with pytest.raises(ValueError):
        F.GridSpec(4, lo=(0, 0, 0), hi=(1, 0, 1))


def test_from_dict_round_trip():
    for src in SOURCES + [F.corrupt(F.OpenDisk(0.3), 0.1, 0.2, 1)]:
        again = F.from_dict(src.to_dict())
        p = np.random.default_rng(8).uniform(-1, 1, (50, 3))
        assert np.array_equal(src.evaluate(p)[0], again.evaluate(p)[0])
    with pytest.raises(ValueError):
        F.from_dict({"kind": "teapot"})


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 0.8), st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_sphere_distance_is_1_lipschitz(r, c):
    s = F.Translate(F.Sphere(r), tuple(c))
    p = np.random.default_rng(9).uniform(-1, 1, (64, 3))
    q = p + np.random.default_rng(10).normal(0, 0.01, p.shape)
    dp, dq = s.evaluate(p)[0], s.evaluate(q)[0]
    assert np.all(np.abs(dp - dq) <= np.linalg.norm(p - q, axis=1) + 1e-12)
