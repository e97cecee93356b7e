"""Refinement tests: deviation metric, lazy heap, step skips, full runs."""

import math
import random
from collections import Counter

import pytest

from powermesh.fields import Plane, Sphere, Union
from powermesh.refinement import (
    RefineConfig,
    SurfaceNotDetectedError,
    heap_entry_ids,
    init_state,
    live_mixed_tets,
    patch_deviation,
    refine_step,
    run,
    score_mesh,
    triangle_deviation,
)


# ---------------------------------------------------------------------------
# deviation metric


def test_deviation_zero_for_aligned_triangle():
    field = Plane((0, 0, 1), 0.0)
    tri = ((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0))
    delta, degenerate = triangle_deviation(tri, field)
    assert delta == 0.0
    assert not degenerate


def test_deviation_equals_area_for_orthogonal_gradient():
    field = Plane((0, 0, 1), 0.0)
    # unit-area triangle in the x=0 plane: normal is +-x, gradient is z
    tri = ((0.0, 0.0, 0.0), (0.0, 2.0, 0.0), (0.0, 0.0, 1.0))
    delta, _ = triangle_deviation(tri, field)
    assert delta == pytest.approx(1.0, rel=1e-12)


def test_deviation_degenerate_triangle_flags():
    field = Plane((0, 0, 1), 0.0)
    tri = ((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (2.0, 0.0, 0.0))
    delta, degenerate = triangle_deviation(tri, field)
    assert delta == 0.0
    assert degenerate


def test_deviation_uses_three_queries():
    field = Plane((0, 0, 1), 0.0)
    before = field.query_count
    triangle_deviation(((0, 0, 0), (1, 0, 0), (0, 1, 0)), field)
    assert field.query_count - before == 3


def _mc_deviation_oracle(tri, field, n, seed):
    """Dense Monte Carlo integral of the tangential gradient over a triangle."""
    rng = random.Random(seed)
    a, b, c = tri
    e1 = tuple(b[i] - a[i] for i in range(3))
    e2 = tuple(c[i] - a[i] for i in range(3))
    nvec = (
        e1[1] * e2[2] - e1[2] * e2[1],
        e1[2] * e2[0] - e1[0] * e2[2],
        e1[0] * e2[1] - e1[1] * e2[0],
    )
    n_len = math.sqrt(sum(v * v for v in nvec))
    area = 0.5 * n_len
    nh = tuple(v / n_len for v in nvec)
    total = 0.0
    for _ in range(n):
        r1 = math.sqrt(rng.random())
        r2 = rng.random()
        p = tuple((1 - r1) * a[i] + r1 * (1 - r2) * b[i] + r1 * r2 * c[i]
                  for i in range(3))
        g = field.eval(p).gradient
        gn = sum(g[i] * nh[i] for i in range(3))
        rej = tuple(g[i] - gn * nh[i] for i in range(3))
        total += math.sqrt(sum(v * v for v in rej))
    return area * total / n


def _tangent_triangle(field_radius, rng, edge=0.1):
    """Equilateral triangle tangent to the sphere at its incenter."""
    v = [rng.gauss(0, 1) for _ in range(3)]
    ln = math.sqrt(sum(c * c for c in v))
    nh = tuple(c / ln for c in v)
    p = tuple(field_radius * c for c in nh)
    # orthonormal frame in the tangent plane
    ref = (1.0, 0.0, 0.0) if abs(nh[0]) < 0.9 else (0.0, 1.0, 0.0)
    u = (
        nh[1] * ref[2] - nh[2] * ref[1],
        nh[2] * ref[0] - nh[0] * ref[2],
        nh[0] * ref[1] - nh[1] * ref[0],
    )
    un = math.sqrt(sum(c * c for c in u))
    u = tuple(c / un for c in u)
    w = (
        nh[1] * u[2] - nh[2] * u[1],
        nh[2] * u[0] - nh[0] * u[2],
        nh[0] * u[1] - nh[1] * u[0],
    )
    r_in = edge / (2 * math.sqrt(3))  # inradius of an equilateral triangle
    corners = []
    for k in range(3):
        ang = 2 * math.pi * k / 3
        # vertices sit at the circumradius, twice the inradius
        rad = 2 * r_in
        corners.append(tuple(
            p[i] + rad * (math.cos(ang) * u[i] + math.sin(ang) * w[i])
            for i in range(3)))
    return tuple(corners)


def test_deviation_quadrature_on_tangent_triangles():
    # The integrand over a triangle tangent at its incenter is a cone centered
    # on the incenter; the three-subtriangle centroid quadrature evaluates it
    # at distance 2r/3 and lands at (2*sqrt(3)/4.7807) ~ 0.7246 of the true
    # integral in the small-triangle limit.  Pin that ratio against the
    # Monte Carlo oracle so any change to the quadrature is caught.
    field = Sphere(0.5)
    rng = random.Random(2024)
    ratios = []
    for k in range(100):
        tri = _tangent_triangle(0.5, rng)
        approx, _ = triangle_deviation(tri, field)
        oracle = _mc_deviation_oracle(tri, field, 1000, seed=k)
        ratios.append(approx / oracle)
    mean_ratio = sum(ratios) / len(ratios)
    assert mean_ratio == pytest.approx(0.7246, abs=0.02)


def test_deviation_quadrature_accurate_on_smooth_integrand():
    # with the tangency point outside the triangle the integrand has no kink
    # and the quadrature is close to the dense integral
    field = Sphere(0.5)
    rng = random.Random(7)
    for k in range(50):
        tri = _tangent_triangle(0.5, rng, edge=0.08)
        # shift the triangle sideways in its plane, past its own extent
        a, b, c = tri
        shift = tuple(2.5 * (b[i] - a[i]) for i in range(3))
        tri = tuple(tuple(p[i] + shift[i] for i in range(3))
                    for p in (a, b, c))
        approx, _ = triangle_deviation(tri, field)
        oracle = _mc_deviation_oracle(tri, field, 4000, seed=1000 + k)
        assert approx == pytest.approx(oracle, rel=0.05), (k, approx, oracle)


def test_patch_deviation_triangle_and_quad():
    field = Plane((0, 0, 1), 0.0)

    class P:
        def __init__(self, pts):
            self.positions = tuple(pts)

    tri = P([(0, 0, 0), (1, 0, 0), (0, 1, 0)])
    assert patch_deviation(tri, field) == \
        triangle_deviation(tri.positions, field)[0]
    quad = P([(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)])
    assert patch_deviation(quad, field) == 0.0
    tilted = P([(0, 0, 0), (0, 1, 0), (0, 1, 1), (0, 0, 1)])
    assert patch_deviation(tilted, field) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# initialization and stepping


def test_init_state_detects_missing_surface():
    # surface entirely outside the domain: samples are all positive and every
    # projection converges beyond the box, so no mixed tet can exist
    field = Sphere(0.5, center=(5.0, 0.0, 0.0))
    with pytest.raises(SurfaceNotDetectedError):
        init_state(field, RefineConfig(init_resolution=4, k_max=10))


def test_init_state_heap_matches_mixed_tets():
    field = Sphere(0.4)
    state = init_state(field, RefineConfig(init_resolution=4, k_max=0))
    entries = Counter(heap_entry_ids(state))
    mixed = Counter(live_mixed_tets(state))
    assert entries == mixed
    assert all(c == 1 for c in entries.values())


def test_refine_step_keeps_heap_bijection():
    field = Sphere(0.4)
    state = init_state(field, RefineConfig(init_resolution=4, k_max=200))
    for k in range(60):
        outcome = refine_step(state)
        assert outcome.kind in ("inserted", "skipped")
        if k % 20 == 0:
            entries = Counter(heap_entry_ids(state))
            mixed = Counter(live_mixed_tets(state))
            assert entries == mixed
            assert all(c == 1 for c in entries.values())


def test_refine_step_orders_ties_deterministically():
    field = Sphere(0.4)
    cfg = RefineConfig(init_resolution=4, k_max=100)
    a = init_state(Sphere(0.4), cfg)
    b = init_state(Sphere(0.4), cfg)
    for _ in range(30):
        oa = refine_step(a)
        ob = refine_step(b)
        assert oa.kind == ob.kind
        assert oa.tet_id == ob.tet_id
        assert oa.inserted_ids == ob.inserted_ids


def test_refine_step_skips_duplicate_orthocenter():
    from powermesh.predicates import orthocenter

    field = Sphere(0.4)
    state = init_state(field, RefineConfig(init_resolution=4, k_max=50))
    # place a hidden site exactly at the orthocenter the next step will
    # propose; hidden sites occupy positions without appearing in any tet
    top = min(e for e in state.heap
              if e[0] != 1.0 and state.tri.is_live(e[2])
              and state.tri.generation_of(e[2]) == e[3])
    oc = orthocenter(state.tri.tet_sites(top[2]))
    blocker = state.tri.new_site(oc.point, 0.0)
    state.tri._register_site(blocker)
    state.tri.hidden.append(blocker.id)
    real_before = sum(1 for e in state.heap if e[0] != 1.0)
    outcome = refine_step(state)
    assert outcome.kind == "skipped"
    assert outcome.reason == "duplicate"
    assert outcome.tet_id == top[2]
    real_after = sum(1 for e in state.heap if e[0] != 1.0)
    assert real_after == real_before - 1  # popped entry parked as sentinel


def test_inserted_orthocenter_destroys_its_tet():
    # the dual vertex lies in its tet's power cell, so inserting it removes
    # exactly the region whose patch scored badly (tet ids are never reused)
    field = Sphere(0.4)
    state = init_state(field, RefineConfig(init_resolution=5, k_max=400))
    while state.stats.inserted_sites < 400:
        outcome = refine_step(state)
        if outcome.kind in ("converged", "exhausted"):
            break
        if outcome.kind == "inserted" and len(outcome.inserted_ids) == 2:
            # both p_c and q_c went in, so p_c was not hidden
            assert not state.tri.is_live(outcome.tet_id)


def test_refine_step_converged_at_eps():
    field = Sphere(0.4)
    state = init_state(field, RefineConfig(init_resolution=4, k_max=10,
                                           eps=1e9))
    before = len(state.heap)
    outcome = refine_step(state)
    assert outcome.kind == "converged"
    assert len(state.heap) == before  # entry pushed back


def test_run_sphere_closed_genus_zero():
    field = Sphere(0.5)
    mesh, stats = run(field, RefineConfig(init_resolution=6, k_max=600))
    assert mesh.is_closed()
    comps = mesh.components()
    assert len(comps) == 1
    assert comps[0].euler_characteristic() == 2
    assert stats.inserted_sites >= 600
    assert stats.stop_reason == "budget"


def test_run_plane_init_only_has_zero_deviation():
    field = Plane((0, 0, 1), 0.0)
    mesh, stats = run(field, RefineConfig(init_resolution=6, k_max=0))
    assert mesh.patches
    devs = score_mesh(mesh, field)
    assert max(devs.values()) == 0.0
    # the extracted surface is the z=0 plane
    for dv in mesh.duals.values():
        assert abs(dv.position[2]) <= 1e-6


def test_run_deterministic():
    cfg = RefineConfig(init_resolution=5, k_max=300)
    mesh_a, stats_a = run(Sphere(0.45), cfg)
    mesh_b, stats_b = run(Sphere(0.45), cfg)
    assert stats_a.inserted_sites == stats_b.inserted_sites
    assert stats_a.site_count == stats_b.site_count
    ta = mesh_a.to_triangle_mesh()
    tb = mesh_b.to_triangle_mesh()
    assert len(ta.vertices) == len(tb.vertices)
    assert len(ta.faces) == len(tb.faces)
    rows_a = stats_a.csv_lines()
    rows_b = stats_b.csv_lines()
    assert rows_a == rows_b


def test_run_stats_locality_bound():
    field = Sphere(0.4)
    cfg = RefineConfig(init_resolution=5, k_max=300)
    state = init_state(field, cfg)
    proj_cfg = cfg.projection
    while state.stats.inserted_sites < cfg.k_max:
        q0 = field.query_count
        outcome = refine_step(state)
        if outcome.kind in ("converged", "exhausted"):
            break
        spent = field.query_count - q0
        if outcome.kind == "skipped":
            # at most the orthocenter sample plus projection steps
            assert spent <= 1 + proj_cfg.max_iters
            continue
        # per-step budget: scored patches (<= 6 queries each: quads split in
        # two triangles) plus the orthocenter sample plus projection steps
        assert spent <= 6 * outcome.created + 1 + proj_cfg.max_iters


def test_run_minimal_init_resolution():
    # 2x2x2 grid over the inner cube still boots the pipeline
    field = Sphere(0.45)
    mesh, stats = run(field, RefineConfig(init_resolution=2, k_max=300))
    assert mesh.is_closed()
    comps = mesh.components()
    assert [c.euler_characteristic() for c in comps] == [2]


def test_run_batch_size_two_still_valid():
    field = Sphere(0.4)
    mesh, stats = run(field, RefineConfig(init_resolution=4, k_max=100,
                                          batch_size=2))
    assert mesh.is_closed()
    assert stats.inserted_sites >= 100


def test_refinement_discovers_torus_topology_from_blob_start():
    # an 8-sample start cannot see the hole: the initial surface is a
    # genus-0 blob; adaptive insertion must open the handle
    from powermesh.extraction import extract_mesh
    from powermesh.fields import Torus
    from powermesh.refinement import init_state, refine_step

    field = Torus(0.5, 0.2)
    cfg = RefineConfig(init_resolution=2, k_max=300)
    state = init_state(field, cfg)
    start = extract_mesh(state.tri, state.values)
    assert start.euler_characteristic() == 2  # blob
    while state.stats.inserted_sites < cfg.k_max:
        if refine_step(state).kind in ("converged", "exhausted"):
            break
    final = extract_mesh(state.tri, state.values)
    comps = final.components()
    assert final.is_closed()
    assert [c.euler_characteristic() for c in comps] == [0]


def test_grid_field_matches_analytic_topology(tmp_path):
    import numpy as np
    from powermesh.fields import GridField, Sphere as Sph

    sphere = Sph(0.5)
    n = 48
    lo, spacing = -1.0, 2.0 / (n - 1)
    vals = np.empty(n * n * n)
    i = 0
    for iz in range(n):
        for iy in range(n):
            for ix in range(n):
                vals[i] = sphere._sample((lo + ix * spacing, lo + iy * spacing,
                                          lo + iz * spacing)).value
                i += 1
    grid = GridField((n, n, n), (lo, lo, lo), spacing, vals)
    mesh, _ = run(grid, RefineConfig(init_resolution=6, k_max=600),
                  domain=grid.query_box())
    comps = mesh.components()
    assert mesh.is_closed()
    assert [c.euler_characteristic() for c in comps] == [2]


def test_two_sphere_union_two_components():
    field = Union(Sphere(0.15, (-0.25, 0, 0)), Sphere(0.15, (0.25, 0, 0)))
    mesh, _ = run(field, RefineConfig(init_resolution=6, k_max=800))
    assert mesh.is_closed()
    comps = mesh.components()
    assert len(comps) == 2
    for c in comps:
        assert c.euler_characteristic() == 2
    # the welded export mirrors the two components
    tm = mesh.to_triangle_mesh()
    welded = tm.connected_components()
    assert len(welded) == 2
