"""Surface extraction from the tetrahedralization.

Sites fall into four classes that collapse into two categories; every
Delaunay edge whose endpoints straddle the categories contributes exactly one
surface vertex, placed by one of four dualization rules.  A tet with mixed
categories yields a triangle (1-3 split) or a quad (2-2 split); uniform tets
yield nothing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .geom import Point3, dist2, sub, dot
from .predicates import Sign

log = logging.getLogger(__name__)

EdgeKey = Tuple[int, int]


class SiteClass(Enum):
    SAMPLE_NEG = "sample_neg"
    SAMPLE_POS = "sample_pos"
    PROJ_OF_NEG = "proj_of_neg"
    PROJ_OF_POS = "proj_of_pos"


# Category 1 gathers interior samples and projections of exterior samples;
# category 2 is the mirror set.  Surface vertices live on edges that cross.
_CATEGORY = {
    SiteClass.SAMPLE_NEG: 1,
    SiteClass.PROJ_OF_POS: 1,
    SiteClass.SAMPLE_POS: 2,
    SiteClass.PROJ_OF_NEG: 2,
}


def category(site_class: SiteClass) -> int:
    return _CATEGORY[site_class]


def classify_site(value: float, is_projection: bool = False,
                  of_sign: Sign = None,
                  surface_band: float = 0.0) -> SiteClass:
    """Class of a site from its field value.

    Samples within ``surface_band`` of zero behave as on-surface points of
    their own sign; an exactly-zero sample value is treated as the projection
    of a positive sample and logged.
    """
    if not math.isfinite(value):
        raise ValueError("non-finite field value")
    if is_projection:
        if of_sign is None:
            raise ValueError("projection site needs the sign of its sample")
        if of_sign == Sign.ZERO:
            log.warning("projection of an exactly-zero sample; treating "
                        "originating sample as positive")
            return SiteClass.PROJ_OF_POS
        return (SiteClass.PROJ_OF_NEG if of_sign == Sign.NEGATIVE
                else SiteClass.PROJ_OF_POS)
    if value == 0.0:
        log.warning("sample with exactly zero field value; classifying as "
                    "projection of a positive sample")
        return SiteClass.PROJ_OF_POS
    if abs(value) < surface_band:
        return (SiteClass.PROJ_OF_NEG if value < 0
                else SiteClass.PROJ_OF_POS)
    return SiteClass.SAMPLE_NEG if value < 0 else SiteClass.SAMPLE_POS


class DualRule(Enum):
    SNAP_NEG_SIDE = "snap_neg"    # inside sample + its-side projection
    SNAP_POS_SIDE = "snap_pos"    # outside sample + its-side projection
    ZERO_CROSSING = "interp"      # inside sample + outside sample
    MIDPOINT = "midpoint"         # projection + projection


@dataclass(frozen=True)
class DualVertex:
    position: Point3
    source_edge: EdgeKey
    rule_used: DualRule


def edge_dual_vertex(site1, value1: float, site2, value2: float) -> DualVertex:
    """Surface vertex for one cross-category edge.

    Rule matching is order-insensitive; the source edge is recorded with the
    smaller site id first.
    """
    c1 = category(site1.site_class)
    c2 = category(site2.site_class)
    if c1 == c2:
        raise ValueError(
            f"edge ({site1.id},{site2.id}) endpoints are both category {c1}")
    if c1 == 2:
        site1, site2 = site2, site1
        value1, value2 = value2, value1
    # now site1 is category 1, site2 category 2
    cls1, cls2 = site1.site_class, site2.site_class
    p1, p2 = site1.position, site2.position
    if cls1 == SiteClass.SAMPLE_NEG and cls2 == SiteClass.PROJ_OF_NEG:
        pos, rule = p2, DualRule.SNAP_NEG_SIDE
    elif cls1 == SiteClass.PROJ_OF_POS and cls2 == SiteClass.SAMPLE_POS:
        pos, rule = p1, DualRule.SNAP_POS_SIDE
    elif cls1 == SiteClass.SAMPLE_NEG and cls2 == SiteClass.SAMPLE_POS:
        denom = value2 - value1
        pos = tuple((p1[i] * value2 - p2[i] * value1) / denom
                    for i in range(3))
        rule = DualRule.ZERO_CROSSING
    elif cls1 == SiteClass.PROJ_OF_POS and cls2 == SiteClass.PROJ_OF_NEG:
        pos = tuple(0.5 * (p1[i] + p2[i]) for i in range(3))
        rule = DualRule.MIDPOINT
    else:  # unreachable: the four cases cover all cross-category pairs
        raise AssertionError((cls1, cls2))
    key = (site1.id, site2.id) if site1.id < site2.id else (site2.id, site1.id)
    return DualVertex(pos, key, rule)


@dataclass
class SurfacePatch:
    tet_id: int
    generation: int
    keys: Tuple[EdgeKey, ...]          # 3 (triangle) or 4 (quad)
    positions: Tuple[Point3, ...]      # cached dual-vertex positions


def _edge_key(i: int, j: int) -> EdgeKey:
    return (i, j) if i < j else (j, i)


def _newell_normal(points: Sequence[Point3]):
    nx = ny = nz = 0.0
    n = len(points)
    for i in range(n):
        x0, y0, z0 = points[i]
        x1, y1, z1 = points[(i + 1) % n]
        nx += (y0 - y1) * (z0 + z1)
        ny += (z0 - z1) * (x0 + x1)
        nz += (x0 - x1) * (y0 + y1)
    return (nx, ny, nz)


def patch_for_tet(sites: Sequence, values: Mapping[int, float],
                  duals: Dict[EdgeKey, DualVertex], tet_id: int,
                  generation: int) -> Optional[SurfacePatch]:
    """Build the surface patch of one tet, creating dual vertices on demand.

    ``duals`` is the shared per-edge table; passing a throwaway dict gives a
    purely local evaluation (used when scoring candidate patches during
    refinement).
    """
    cats = [category(s.site_class) for s in sites]
    ones = [i for i in range(4) if cats[i] == 1]
    twos = [i for i in range(4) if cats[i] == 2]
    if not ones or not twos:
        return None

    def dual(i: int, j: int) -> DualVertex:
        key = _edge_key(sites[i].id, sites[j].id)
        dv = duals.get(key)
        if dv is None:
            dv = edge_dual_vertex(sites[i], values[sites[i].id],
                                  sites[j], values[sites[j].id])
            duals[key] = dv
        return dv

    if len(ones) == 1 or len(twos) == 1:
        # 1-3 split: triangle over the three edges at the singleton
        single = ones[0] if len(ones) == 1 else twos[0]
        rest = [i for i in range(4) if i != single]
        dvs = [dual(single, j) for j in rest]
    else:
        # 2-2 split: quad; consecutive vertices share a tet face
        a, b = ones
        c, d = twos
        dvs = [dual(a, c), dual(a, d), dual(b, d), dual(b, c)]

    points = [dv.position for dv in dvs]
    normal = _newell_normal(points)
    outward = (0.0, 0.0, 0.0)
    for dv in dvs:
        i, j = dv.source_edge
        s1, s2 = sites_by_id(sites, i), sites_by_id(sites, j)
        if category(s1.site_class) == 2:
            s1, s2 = s2, s1
        d = sub(s2.position, s1.position)
        outward = (outward[0] + d[0], outward[1] + d[1], outward[2] + d[2])
    if dot(normal, outward) < 0.0:
        dvs.reverse()
        points.reverse()
    return SurfacePatch(tet_id, generation, tuple(dv.source_edge for dv in dvs),
                        tuple(points))


def sites_by_id(sites: Sequence, sid: int):
    for s in sites:
        if s.id == sid:
            return s
    raise KeyError(sid)


def quad_split(points: Sequence[Point3]) -> Tuple[Tuple[int, int, int],
                                                  Tuple[int, int, int]]:
    """Split a quad along its shorter diagonal; ties take the 0-2 diagonal."""
    d02 = dist2(points[0], points[2])
    d13 = dist2(points[1], points[3])
    if d02 <= d13:
        return (0, 1, 2), (0, 2, 3)
    return (1, 2, 3), (1, 3, 0)


@dataclass
class SurfaceMesh:
    duals: Dict[EdgeKey, DualVertex] = dc_field(default_factory=dict)
    patches: List[SurfacePatch] = dc_field(default_factory=list)
    deviations: Dict[int, float] = dc_field(default_factory=dict)

    def triangle_positions(self) -> List[Tuple[Point3, Point3, Point3]]:
        """Derived triangle list: quads split along the shorter diagonal."""
        tris = []
        for patch in self.patches:
            pts = patch.positions
            if len(pts) == 3:
                tris.append((pts[0], pts[1], pts[2]))
            else:
                for tri in quad_split(pts):
                    tris.append(tuple(pts[i] for i in tri))
        return tris

    def edge_incidence(self) -> Dict[Tuple[EdgeKey, EdgeKey], int]:
        counts: Dict[Tuple[EdgeKey, EdgeKey], int] = {}
        for patch in self.patches:
            keys = patch.keys
            n = len(keys)
            for i in range(n):
                a, b = keys[i], keys[(i + 1) % n]
                e = (a, b) if a <= b else (b, a)
                counts[e] = counts.get(e, 0) + 1
        return counts

    def is_closed(self) -> bool:
        counts = self.edge_incidence()
        return bool(counts) and all(c == 2 for c in counts.values())

    def euler_characteristic(self) -> int:
        """V - E + F of the combinatorial patch complex.

        Quad faces count once; splitting them for export adds one edge and
        one face per quad and leaves the characteristic unchanged.  This is
        the authoritative topology of the extracted surface: output-time
        welding can pinch geometrically coincident vertices together, which
        says nothing about the complex the algorithm actually built.
        """
        verts = set()
        for patch in self.patches:
            verts.update(patch.keys)
        return len(verts) - len(self.edge_incidence()) + len(self.patches)

    def components(self) -> List["SurfaceMesh"]:
        """Split the patch complex by shared-edge connectivity."""
        if not self.patches:
            return []
        by_edge: Dict[Tuple[EdgeKey, EdgeKey], List[int]] = {}
        for pi, patch in enumerate(self.patches):
            keys = patch.keys
            n = len(keys)
            for i in range(n):
                a, b = keys[i], keys[(i + 1) % n]
                e = (a, b) if a <= b else (b, a)
                by_edge.setdefault(e, []).append(pi)
        parent = list(range(len(self.patches)))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for inc in by_edge.values():
            r = find(inc[0])
            for other in inc[1:]:
                parent[find(other)] = r
        groups: Dict[int, List[SurfacePatch]] = {}
        for pi, patch in enumerate(self.patches):
            groups.setdefault(find(pi), []).append(patch)
        comps = []
        for patches in groups.values():
            sub = SurfaceMesh(duals=self.duals, patches=patches)
            comps.append(sub)
        comps.sort(key=lambda m: -len(m.patches))
        return comps

    def to_triangle_mesh(self, weld_tol: float = 1e-12):
        """Weld coincident dual vertices and emit a concrete triangle mesh.

        Welding happens exactly once, here: duplicate positions produced by
        the snap rules (several edges of one projection site emit the site
        itself) collapse to a single mesh vertex; degenerate triangles are
        dropped.
        """
        from .mesh import TriangleMesh

        key_of: Dict[Tuple[int, int, int], int] = {}
        verts: List[Point3] = []
        faces: List[Tuple[int, int, int]] = []

        def vid(p: Point3) -> int:
            qk = (int(round(p[0] / weld_tol)), int(round(p[1] / weld_tol)),
                  int(round(p[2] / weld_tol)))
            i = key_of.get(qk)
            if i is None:
                i = len(verts)
                key_of[qk] = i
                verts.append(p)
            return i

        for tri in self.triangle_positions():
            ids = (vid(tri[0]), vid(tri[1]), vid(tri[2]))
            if ids[0] == ids[1] or ids[1] == ids[2] or ids[0] == ids[2]:
                continue
            faces.append(ids)
        return TriangleMesh(
            np.array(verts, dtype=np.float64).reshape(-1, 3),
            np.array(faces, dtype=np.int64).reshape(-1, 3),
        )


def extract_mesh(tri, values: Mapping[int, float]) -> SurfaceMesh:
    """Extract the full surface from a frozen triangulation.

    ``values`` maps site id to its signed field value (needed by the
    zero-crossing rule).  Tets are visited in ascending id order so the dual
    table is reproducible.
    """
    mesh = SurfaceMesh()
    sites = tri.sites
    for t in tri.live_tets():
        v = tri.tet_vertices(t)
        tet_sites = [sites[i] for i in v]
        patch = patch_for_tet(tet_sites, values, mesh.duals, t,
                              tri.generation_of(t))
        if patch is not None:
            mesh.patches.append(patch)
    return mesh


def non_penetration_violations(mesh: SurfaceMesh, tri, values,
                               tol: float = 1e-9) -> List[tuple]:
    """Dual vertices must lie on or outside both tangent spheres of their edge."""
    bad = []
    for key, dv in mesh.duals.items():
        for sid in key:
            site = tri.sites[sid]
            margin = dist2(dv.position, site.position) - values[sid] ** 2
            if margin < -tol:
                bad.append((key, sid, margin))
    return bad
