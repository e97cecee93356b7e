"""Adaptive refinement: score patches, insert the worst tet's dual vertex.

The loop keeps one lazy max-heap entry per live mixed tet.  Entries go stale
when their tet dies (generation stamps detect reuse); tets that were popped
but could not be refined are re-parked as inert sentinel entries so the
heap's bookkeeping invariant (one live entry per live mixed tet) survives
without ever retrying a hopeless tet.  Each productive step inserts the
popped tet's orthocenter and that point's surface projection, then rescores
exactly the patches of freshly created tets.
"""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field as dc_field
from typing import Dict, List, Optional, Tuple

from .delaunay import DuplicateSiteError, Tetrahedralization, init_domain
from .extraction import (
    SurfaceMesh,
    category,
    classify_site,
    extract_mesh,
    patch_for_tet,
    quad_split,
)
from .fields import (
    DEFAULT_DOMAIN,
    ProjectionConfig,
    ScalarField,
    project_to_surface,
)
from .geom import Point3, cross, dot, norm, sub
from .predicates import Sign, orthocenter

log = logging.getLogger(__name__)

_DEGENERATE_AREA = 1e-16

# heap keys: real entries use -delta (<= 0); sentinels sort after everything
_SENTINEL_KEY = 1.0


class SurfaceNotDetectedError(RuntimeError):
    pass


@dataclass(frozen=True)
class RefineConfig:
    init_resolution: int = 8
    k_max: int = 5000
    eps: float = 0.0
    projection: ProjectionConfig = dc_field(default_factory=ProjectionConfig)
    batch_size: int = 1
    # Width of the on-surface band within which samples are reclassified as
    # projection-type points.  Default 0: a nonzero band assigns near-surface
    # samples to the category of the WRONG side of the surface, and on dense
    # runs those misfiled points seed parasitic micro-interfaces that show up
    # as spurious handles (torus runs past ~18k insertions gain genus).
    # Classification by true sign keeps the extracted topology clean; the
    # zero-crossing rule is a convex combination, so tiny sample values do
    # not hurt its conditioning.
    surface_band: float = 0.0

    def __post_init__(self):
        if self.init_resolution < 2:
            raise ValueError("init_resolution must be >= 2")
        if self.k_max < 0 or self.eps < 0:
            raise ValueError("k_max and eps must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


# ---------------------------------------------------------------------------
# deviation metric


def triangle_deviation(tri: Tuple[Point3, Point3, Point3],
                       field: ScalarField) -> Tuple[float, bool]:
    """Area-weighted tangential gradient residual over one triangle.

    The triangle is split at its incenter into three sub-triangles; within
    each, the gradient is taken as constant at the centroid and the component
    orthogonal to the full triangle's normal is accumulated.  Exactly three
    field queries.  Degenerate triangles score 0 with the flag set.
    """
    a, b, c = tri
    e_ab = sub(b, a)
    e_ac = sub(c, a)
    n = cross(e_ab, e_ac)
    n_len = norm(n)
    if 0.5 * n_len <= _DEGENERATE_AREA:
        return 0.0, True
    nh = (n[0] / n_len, n[1] / n_len, n[2] / n_len)

    la = norm(sub(c, b))
    lb = norm(sub(a, c))
    lc = norm(sub(b, a))
    perim = la + lb + lc
    inc = tuple((la * a[i] + lb * b[i] + lc * c[i]) / perim for i in range(3))

    delta = 0.0
    for u, v in ((a, b), (b, c), (c, a)):
        cen = tuple((inc[i] + u[i] + v[i]) / 3.0 for i in range(3))
        area = 0.5 * norm(cross(sub(u, inc), sub(v, inc)))
        g = field.eval(cen).gradient
        gn = dot(g, nh)
        rej = (g[0] - gn * nh[0], g[1] - gn * nh[1], g[2] - gn * nh[2])
        delta += area * norm(rej)
    return delta, False


def patch_deviation(patch, field: ScalarField) -> float:
    pts = patch.positions
    if len(pts) == 3:
        return triangle_deviation(pts, field)[0]
    total = 0.0
    for tri in quad_split(pts):
        total += triangle_deviation(tuple(pts[i] for i in tri), field)[0]
    return total


def score_mesh(mesh: SurfaceMesh, field: ScalarField) -> Dict[int, float]:
    """Fill the mesh's per-patch deviation cache; returns it."""
    for patch in mesh.patches:
        mesh.deviations[patch.tet_id] = patch_deviation(patch, field)
    return mesh.deviations


# ---------------------------------------------------------------------------
# run state and statistics


@dataclass
class StepRecord:
    iteration: int
    inserted: int
    delta: float
    queries: int
    cavity: int
    ms: float


@dataclass
class RunStats:
    records: List[StepRecord] = dc_field(default_factory=list)
    init_sites: int = 0
    init_queries: int = 0
    init_ms: float = 0.0
    inserted_sites: int = 0
    hidden_sites: int = 0
    skipped_steps: int = 0
    total_queries: int = 0
    wall_s: float = 0.0
    stop_reason: str = ""
    stop_delta: Optional[float] = None
    site_count: int = 0
    live_tets: int = 0
    patch_count: int = 0

    CSV_HEADER = "iter,inserted,delta,queries,cavity,ms"

    def csv_lines(self, timing: bool = False) -> List[str]:
        """One line per step; ms is zeroed unless timing output is requested,
        keeping default output byte-reproducible across runs."""
        lines = [self.CSV_HEADER]
        for r in self.records:
            ms = f"{r.ms:.3f}" if timing else "0.000"
            lines.append(
                f"{r.iteration},{r.inserted},{r.delta!r},{r.queries},"
                f"{r.cavity},{ms}")
        return lines


@dataclass
class StepOutcome:
    kind: str                      # inserted | skipped | converged | exhausted
    reason: Optional[str] = None
    delta: Optional[float] = None
    tet_id: Optional[int] = None
    inserted_ids: Tuple[int, ...] = ()
    destroyed: int = 0
    created: int = 0


@dataclass
class RefineState:
    tri: Tetrahedralization
    field: ScalarField
    cfg: RefineConfig
    values: Dict[int, float]
    heap: list
    stats: RunStats
    iteration: int = 0


def _push_entry(state: RefineState, tet_id: int, delta: float) -> None:
    gen = state.tri.generation_of(tet_id)
    heapq.heappush(state.heap, (-delta, -gen, tet_id, gen, delta))


def _push_sentinel(state: RefineState, tet_id: int) -> None:
    gen = state.tri.generation_of(tet_id)
    heapq.heappush(state.heap, (_SENTINEL_KEY, -gen, tet_id, gen, None))


def _entry_stale(state: RefineState, entry) -> bool:
    tet_id, gen = entry[2], entry[3]
    return not state.tri.is_live(tet_id) or \
        state.tri.generation_of(tet_id) != gen


def heap_entry_ids(state: RefineState) -> List[Tuple[int, int]]:
    """(tet id, generation) of every non-stale heap entry, sentinels included."""
    return [(e[2], e[3]) for e in state.heap if not _entry_stale(state, e)]


def live_mixed_tets(state: RefineState) -> List[Tuple[int, int]]:
    out = []
    tri = state.tri
    for t in tri.live_tets():
        cats = {category(s.site_class) for s in tri.tet_sites(t)}
        if len(cats) == 2:
            out.append((t, tri.generation_of(t)))
    return out


def _score_tet(state: RefineState, tet_id: int) -> Optional[float]:
    tri = state.tri
    patch = patch_for_tet(tri.tet_sites(tet_id), state.values, {}, tet_id,
                          tri.generation_of(tet_id))
    if patch is None:
        return None
    return patch_deviation(patch, state.field)


def _sign_of_value(value: float) -> Sign:
    if value > 0:
        return Sign.POSITIVE
    if value < 0:
        return Sign.NEGATIVE
    return Sign.ZERO


# ---------------------------------------------------------------------------
# initialization (pipeline step 1)


def init_state(field: ScalarField, cfg: RefineConfig,
               domain=DEFAULT_DOMAIN) -> RefineState:
    """Seed the complex with a uniform grid over the inner cube plus the
    converged surface projections of every grid sample."""
    t0 = time.perf_counter()
    q0 = field.query_count
    lo, hi = domain
    corner_samples = []
    for i in range(8):
        corner = (
            hi[0] if i & 1 else lo[0],
            hi[1] if i & 2 else lo[1],
            hi[2] if i & 4 else lo[2],
        )
        corner_samples.append(field.eval(corner))
    # corners inside the object are accepted here: unbounded fields (planes)
    # pierce the walls and extract as clipped open surfaces
    tri = init_domain(domain, corner_samples, require_exterior=False)
    values: Dict[int, float] = {
        i: corner_samples[i].value for i in range(8)}

    stats = RunStats()
    state = RefineState(tri, field, cfg, values, [], stats)

    # uniform grid over the inner cube (the model-normalized region)
    n = cfg.init_resolution
    inner_lo = tuple(lo[i] + 0.25 * (hi[i] - lo[i]) for i in range(3))
    inner_hi = tuple(hi[i] - 0.25 * (hi[i] - lo[i]) for i in range(3))
    axes = [
        [inner_lo[k] + (inner_hi[k] - inner_lo[k]) * i / (n - 1)
         for i in range(n)]
        for k in range(3)
    ]
    band = cfg.surface_band
    for iz in range(n):
        for iy in range(n):
            for ix in range(n):
                p = (axes[0][ix], axes[1][iy], axes[2][iz])
                sample = field.eval(p)
                value = sample.value
                cls = classify_site(value, False, surface_band=band)
                site = tri.new_site(p, value * value, cls)
                try:
                    res = tri.insert(site)
                except DuplicateSiteError:
                    continue
                values[site.id] = value
                if res.hidden:
                    stats.hidden_sites += 1
                stats.init_sites += 1
                proj = project_to_surface(field, p, cfg.projection,
                                          first_sample=sample)
                if not proj.converged:
                    log.debug("init projection failed from %s", p)
                    continue
                if not tri.contains(proj.point, strict=True):
                    log.debug("init projection left the domain from %s", p)
                    continue
                qcls = classify_site(proj.value, True,
                                     of_sign=_sign_of_value(value))
                qsite = tri.new_site(proj.point, proj.value * proj.value,
                                     qcls)
                try:
                    qres = tri.insert(qsite)
                except DuplicateSiteError:
                    continue
                values[qsite.id] = proj.value
                if qres.hidden:
                    stats.hidden_sites += 1
                stats.init_sites += 1

    # pipeline step 2: score every live mixed tet into the max-heap
    for t in tri.live_tets():
        delta = _score_tet(state, t)
        if delta is not None:
            _push_entry(state, t, delta)
    if not state.heap:
        raise SurfaceNotDetectedError(
            "surface not detected; increase init_resolution")
    stats.init_queries = field.query_count - q0
    stats.init_ms = 1000.0 * (time.perf_counter() - t0)
    return state


# ---------------------------------------------------------------------------
# one refinement step (pipeline step 3)


def refine_step(state: RefineState) -> StepOutcome:
    cfg = state.cfg
    tri = state.tri
    field = state.field
    heap = state.heap
    t_start = time.perf_counter()

    entry = None
    while heap:
        candidate = heapq.heappop(heap)
        if candidate[0] == _SENTINEL_KEY:
            if _entry_stale(state, candidate):
                continue
            heapq.heappush(heap, candidate)  # nothing refinable remains
            return StepOutcome("exhausted")
        if _entry_stale(state, candidate):
            continue
        entry = candidate
        break
    if entry is None:
        return StepOutcome("exhausted")

    delta_c = entry[4]
    tet_id = entry[2]
    if delta_c < cfg.eps:
        heapq.heappush(heap, entry)
        return StepOutcome("converged", delta=delta_c, tet_id=tet_id)

    def skip(reason: str) -> StepOutcome:
        _push_sentinel(state, tet_id)
        state.stats.skipped_steps += 1
        return StepOutcome("skipped", reason=reason, delta=delta_c,
                           tet_id=tet_id)

    oc = orthocenter(tri.tet_sites(tet_id))
    if not oc.reliable:
        return skip("ill_conditioned")
    p_c = oc.point
    if not tri.contains(p_c, strict=True):
        return skip("outside_domain")
    if tri.find_duplicate(p_c) is not None:
        return skip("duplicate")

    sample = field.eval(p_c)
    value_p = sample.value
    proj = project_to_surface(field, p_c, cfg.projection, first_sample=sample)
    if not proj.converged:
        return skip("projection_failed")

    cls_p = classify_site(value_p, False, surface_band=cfg.surface_band)
    site_p = tri.new_site(p_c, value_p * value_p, cls_p)
    try:
        res_p = tri.insert(site_p, hint=tet_id)
    except DuplicateSiteError:
        return skip("duplicate")
    state.values[site_p.id] = value_p
    inserted: List[int] = []
    created: List[int] = []
    destroyed = 0
    if res_p.hidden:
        state.stats.hidden_sites += 1
    else:
        inserted.append(site_p.id)
        created.extend(res_p.created)
        destroyed += len(res_p.destroyed)

    q_hint = created[-1] if created else tet_id
    if tri.contains(proj.point, strict=True):
        cls_q = classify_site(proj.value, True,
                              of_sign=_sign_of_value(value_p))
        site_q = tri.new_site(proj.point, proj.value * proj.value, cls_q)
        try:
            res_q = tri.insert(site_q, hint=q_hint)
        except DuplicateSiteError:
            res_q = None
        if res_q is not None:
            state.values[site_q.id] = proj.value
            if res_q.hidden:
                state.stats.hidden_sites += 1
            else:
                inserted.append(site_q.id)
                created.extend(res_q.created)
                destroyed += len(res_q.destroyed)
    else:
        log.debug("projection left the domain from %s", p_c)

    # pipeline step 3 tail: rescore exactly the surviving created tets,
    # in id order so heap contents are reproducible
    n_created = 0
    for t in sorted(set(created)):
        if not tri.is_live(t):
            continue
        n_created += 1
        delta = _score_tet(state, t)
        if delta is not None:
            _push_entry(state, t, delta)
    if tri.is_live(tet_id) and tri.generation_of(tet_id) == entry[3]:
        # the popped tet survived both insertions; park it so the
        # one-entry-per-mixed-tet invariant holds without retry loops
        _push_sentinel(state, tet_id)

    state.stats.inserted_sites += len(inserted)
    state.iteration += 1
    ms = 1000.0 * (time.perf_counter() - t_start)
    state.stats.records.append(StepRecord(
        state.iteration, state.stats.inserted_sites, delta_c,
        field.query_count, destroyed, ms))
    return StepOutcome("inserted", delta=delta_c, tet_id=tet_id,
                       inserted_ids=tuple(inserted), destroyed=destroyed,
                       created=n_created)


# ---------------------------------------------------------------------------
# full pipeline


def run(field: ScalarField, cfg: RefineConfig,
        domain=DEFAULT_DOMAIN) -> Tuple[SurfaceMesh, RunStats]:
    """End-to-end extraction: init, refine until budget/tolerance, extract."""
    wall0 = time.perf_counter()
    state = init_state(field, cfg, domain)
    stats = state.stats
    stop = "budget"
    stop_delta = None
    while stats.inserted_sites < cfg.k_max:
        if cfg.batch_size > 1:
            outcome = None
            for _ in range(cfg.batch_size):
                outcome = refine_step(state)
                if outcome.kind != "inserted" or \
                        stats.inserted_sites >= cfg.k_max:
                    break
        else:
            outcome = refine_step(state)
        stop_delta = outcome.delta if outcome.delta is not None else stop_delta
        if outcome.kind == "converged":
            stop = "converged"
            break
        if outcome.kind == "exhausted":
            stop = "exhausted"
            break
    mesh = extract_mesh(state.tri, state.values)
    stats.stop_reason = stop
    stats.stop_delta = stop_delta
    stats.total_queries = field.query_count
    stats.wall_s = time.perf_counter() - wall0
    stats.site_count = len(state.tri.sites)
    stats.live_tets = state.tri.live_tet_count
    stats.patch_count = len(mesh.patches)
    return mesh, stats
