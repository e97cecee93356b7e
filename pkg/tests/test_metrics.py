"""Metric oracles (brute force), sampling statistics, marching cubes."""

import math

import numpy as np
import pytest

from powermesh.fields import Plane, Sphere
from powermesh.mesh import TriangleMesh
from powermesh.metrics import (
    budget_matched_baseline,
    chamfer,
    compare_sets,
    f1,
    marching_cubes,
    MeshSampleSet,
    normal_consistency,
    sample_mesh,
)


def _random_set(n, seed, offset=(0.0, 0.0, 0.0)):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, size=(n, 3)) + np.asarray(offset)
    normals = rng.normal(size=(n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return MeshSampleSet(pts, normals, seed)


def _single_triangle(scale=1.0):
    v = np.array([[0.0, 0.0, 0.0], [scale, 0.0, 0.0], [0.0, scale, 0.0]])
    f = np.array([[0, 1, 2]], dtype=np.int64)
    return TriangleMesh(v, f)


# ---------------------------------------------------------------------------
# sampling


def test_sample_single_triangle_points_inside():
    mesh = _single_triangle()
    s = sample_mesh(mesh, 3, seed=1)
    assert len(s) == 3
    for p in s.points:
        assert p[0] >= -1e-12 and p[1] >= -1e-12
        assert p[0] + p[1] <= 1.0 + 1e-12
        assert abs(p[2]) < 1e-15


def test_sample_area_weighting_binomial_bound():
    # two triangles with areas 9:1
    v = np.array([
        [0, 0, 0], [3, 0, 0], [0, 6, 0],   # area 9
        [10, 0, 0], [11, 0, 0], [10, 2, 0],  # area 1
    ], dtype=float)
    f = np.array([[0, 1, 2], [3, 4, 5]], dtype=np.int64)
    mesh = TriangleMesh(v, f)
    n = 10_000
    s = sample_mesh(mesh, n, seed=7)
    big = int(np.sum(s.points[:, 0] < 5))
    p = 0.9
    sigma = math.sqrt(n * p * (1 - p))
    assert abs(big - n * p) <= 3 * sigma


def test_sample_deterministic_given_seed():
    mesh = _single_triangle()
    a = sample_mesh(mesh, 100, seed=42)
    b = sample_mesh(mesh, 100, seed=42)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.normals, b.normals)


def test_sample_zero_area_rejected():
    v = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
    f = np.array([[0, 1, 2]], dtype=np.int64)
    with pytest.raises(ValueError, match="zero-area"):
        sample_mesh(TriangleMesh(v, f), 10, seed=0)
    with pytest.raises(ValueError, match="empty"):
        sample_mesh(TriangleMesh(np.zeros((0, 3)),
                                 np.zeros((0, 3), dtype=np.int64)), 10, 0)


# ---------------------------------------------------------------------------
# chamfer / nc / f1 against brute force


def _brute_chamfer(a, b):
    d_ab = [min(float(np.sum((p - q) ** 2)) for q in b.points)
            for p in a.points]
    d_ba = [min(float(np.sum((p - q) ** 2)) for q in a.points)
            for p in b.points]
    return 0.5 * (sum(d_ab) / len(d_ab) + sum(d_ba) / len(d_ba))


def _brute_nc(a, b):
    def one_way(x, y):
        dots = []
        for p, n in zip(x.points, x.normals):
            j = min(range(len(y.points)),
                    key=lambda k: float(np.sum((p - y.points[k]) ** 2)))
            dots.append(abs(float(np.dot(n, y.normals[j]))))
        return sum(dots) / len(dots)

    return 0.5 * (one_way(a, b) + one_way(b, a))


def _brute_f1(a, b, tau):
    d_ab = [math.sqrt(min(float(np.sum((p - q) ** 2)) for q in b.points))
            for p in a.points]
    d_ba = [math.sqrt(min(float(np.sum((p - q) ** 2)) for q in a.points))
            for p in b.points]
    precision = sum(d < tau for d in d_ab) / len(d_ab)
    recall = sum(d < tau for d in d_ba) / len(d_ba)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def test_chamfer_identical_sets_zero():
    a = _random_set(100, 3)
    assert chamfer(a, a) == 0.0


def test_chamfer_single_point_translation():
    a = MeshSampleSet(np.array([[0.0, 0.0, 0.0]]),
                      np.array([[1.0, 0.0, 0.0]]), 0)
    b = MeshSampleSet(np.array([[0.3, 0.4, 0.0]]),
                      np.array([[1.0, 0.0, 0.0]]), 0)
    assert chamfer(a, b) == pytest.approx(0.25, abs=1e-15)


def test_chamfer_symmetric():
    a = _random_set(50, 1)
    b = _random_set(60, 2)
    assert chamfer(a, b) == pytest.approx(chamfer(b, a), abs=0)


def test_metrics_match_brute_force_200_points():
    a = _random_set(200, 11)
    b = _random_set(200, 12, offset=(0.05, 0.0, 0.0))
    assert chamfer(a, b) == pytest.approx(_brute_chamfer(a, b), abs=1e-12)
    assert normal_consistency(a, b) == pytest.approx(_brute_nc(a, b),
                                                     abs=1e-12)
    tau = 0.25
    assert f1(a, b, tau) == pytest.approx(_brute_f1(a, b, tau), abs=1e-12)


def test_identical_meshes_perfect_scores():
    mesh = _single_triangle()
    a = sample_mesh(mesh, 500, seed=5)
    b = sample_mesh(mesh, 500, seed=5)
    report = compare_sets(a, b)
    assert report.cd == 0.0
    assert report.nc == pytest.approx(1.0)
    assert report.f1 == 1.0


def test_nc_absolute_value_convention():
    a = _random_set(50, 9)
    flipped = MeshSampleSet(a.points.copy(), -a.normals, a.seed)
    assert normal_consistency(a, flipped) == pytest.approx(1.0)


def test_f1_zero_beyond_threshold():
    tau = 0.005
    a = _random_set(50, 21)
    b = MeshSampleSet(a.points + np.array([2 * tau, 0, 0]), a.normals, 0)
    assert f1(a, b, tau) == 0.0


# ---------------------------------------------------------------------------
# marching cubes


def test_marching_cubes_sphere_closed_chi2():
    field = Sphere(0.5)
    mesh = marching_cubes(field, 64)
    assert field.query_count == 64 ** 3
    assert mesh.is_closed()
    comps = mesh.connected_components()
    assert len(comps) == 1
    assert comps[0].euler_characteristic() == 2
    # vertices lie within a cell diagonal of the surface
    cell = 2.0 / 63
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert np.max(np.abs(r - 0.5)) <= cell * math.sqrt(3)


def test_marching_cubes_orientation_outward():
    field = Sphere(0.5)
    mesh = marching_cubes(field, 32)
    n = mesh.face_normals()
    centers = mesh.vertices[mesh.faces].mean(axis=1)
    dots = np.sum(n * centers, axis=1)
    assert np.mean(dots > 0) > 0.99


def test_marching_cubes_all_positive_empty():
    field = Sphere(0.05, center=(5, 5, 5))
    mesh = marching_cubes(field, 16)
    assert mesh.is_empty


def test_marching_cubes_plane_exact_interpolation():
    field = Plane((0, 0, 1), 0.0)
    for res in (9, 16, 33):
        mesh = marching_cubes(Plane((0, 0, 1), 0.0), res)
        assert len(mesh.faces)
        assert np.max(np.abs(mesh.vertices[:, 2])) <= 1e-6


def test_marching_cubes_resolution_floor():
    with pytest.raises(ValueError):
        marching_cubes(Sphere(0.5), 1)


def test_budget_matched_baseline_resolution():
    field = Sphere(0.5)
    mesh, res = budget_matched_baseline(field, 27_000)
    assert res == 30
    assert field.query_count == 27_000


def test_budget_fair_comparison_harness():
    from powermesh.refinement import RefineConfig
    from powermesh.metrics import budget_fair_comparison

    rng = np.random.default_rng(4)
    dirs = rng.normal(size=(20_000, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    reference = MeshSampleSet(0.5 * dirs, dirs, 4)
    adaptive, baseline, res = budget_fair_comparison(
        lambda: Sphere(0.5), RefineConfig(init_resolution=5, k_max=300),
        reference, n=20_000, seed=9)
    assert res >= 2
    assert adaptive.cd > 0 and baseline.cd > 0
    assert 0 <= adaptive.nc <= 1 and 0 <= baseline.nc <= 1
