"""Incremental 3D regular (weighted) Delaunay tetrahedralization.

Insertion is Bowyer-Watson: locate the containing tet by a remembering walk,
grow the conflict cavity over neighbor links, then cone the new site to the
cavity boundary.  All conflict decisions go through the exact, symbolically
perturbed predicate, so the structure stays valid on degenerate (gridded,
cospherical) input.  Tet storage is flat ``array('i')`` tables: the torus
workloads create on the order of a million tets and per-object storage would
dominate memory.
"""

from __future__ import annotations

import math
from array import array
from collections import deque
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .geom import Point3, dist2
from .predicates import Sign, conflict_perturbed, orient3d

OUTSIDE = -1

# Face opposite vertex slot i, ordered so the removed vertex lies on the
# positive side of the face (orient3d(f0, f1, f2, v_i) > 0).
_FACE_OPP = ((1, 3, 2), (0, 2, 3), (0, 3, 1), (0, 1, 2))

# Positions closer than this fraction of the domain diagonal are one site.
DUPLICATE_TOL_FACTOR = 1e-9


class DuplicateSiteError(Exception):
    """Insertion position coincides with an existing site."""

    def __init__(self, existing_id: int):
        super().__init__(f"duplicate of site {existing_id}")
        self.existing_id = existing_id


@dataclass(frozen=True)
class WeightedSite:
    id: int
    position: Point3
    weight: float
    site_class: object = None  # extraction.SiteClass; opaque at this layer
    is_boundary: bool = False


@dataclass
class Tet:
    """Read-only view of one tet row; the tables are authoritative."""

    id: int
    vertices: Tuple[int, int, int, int]
    neighbors: Tuple[int, int, int, int]
    alive: bool
    generation: int


@dataclass
class InsertionResult:
    site_id: Optional[int]
    hidden: bool
    destroyed: List[int]
    created: List[int]


class Tetrahedralization:
    def __init__(self, domain_box):
        lo, hi = domain_box
        if any(hi[i] <= lo[i] for i in range(3)):
            raise ValueError("degenerate domain box")
        self.domain = (tuple(float(v) for v in lo), tuple(float(v) for v in hi))
        self.sites: List[WeightedSite] = []
        # parallel predicate tuples (x, y, z, w, id)
        self._pw: List[Tuple[float, float, float, float, int]] = []
        self._tv = array("i")  # 4 site ids per tet
        self._tn = array("i")  # 4 neighbor ids per tet (-1 outside)
        self._alive = bytearray()
        self._gen = array("q")
        self._gen_counter = 0
        self.hidden: List[int] = []
        self._hint = 0
        diag = math.sqrt(sum((hi[i] - lo[i]) ** 2 for i in range(3)))
        self._dup_tol = DUPLICATE_TOL_FACTOR * diag
        self._dup_index: Dict[Tuple[int, int, int], List[int]] = {}

    # -- bookkeeping ------------------------------------------------------

    @property
    def tet_count(self) -> int:
        return len(self._alive)

    @property
    def live_tet_count(self) -> int:
        return sum(self._alive)

    def live_tets(self) -> Iterable[int]:
        alive = self._alive
        return (t for t in range(len(alive)) if alive[t])

    def is_live(self, t: int) -> bool:
        return 0 <= t < len(self._alive) and bool(self._alive[t])

    def tet(self, t: int) -> Tet:
        b = 4 * t
        return Tet(
            t,
            tuple(self._tv[b:b + 4]),
            tuple(self._tn[b:b + 4]),
            bool(self._alive[t]),
            self._gen[t],
        )

    def tet_vertices(self, t: int) -> Tuple[int, int, int, int]:
        b = 4 * t
        return tuple(self._tv[b:b + 4])

    def tet_sites(self, t: int) -> List[WeightedSite]:
        b = 4 * t
        return [self.sites[self._tv[b + i]] for i in range(4)]

    def generation_of(self, t: int) -> int:
        return self._gen[t]

    def new_site(self, position: Point3, weight: float, site_class=None,
                 is_boundary: bool = False) -> WeightedSite:
        """Allocate a fresh id without touching the complex."""
        sid = len(self.sites)
        site = WeightedSite(sid, tuple(float(c) for c in position),
                            float(weight), site_class, is_boundary)
        return site

    def _register_site(self, site: WeightedSite) -> None:
        if site.id != len(self.sites):
            raise ValueError(f"site id {site.id} is not fresh")
        if not all(math.isfinite(c) for c in site.position) or \
                not math.isfinite(site.weight):
            raise ValueError("non-finite site")
        if site.weight < 0:
            raise ValueError("negative weight")
        self.sites.append(site)
        p = site.position
        self._pw.append((p[0], p[1], p[2], site.weight, site.id))
        self._dup_index.setdefault(self._dup_key(p), []).append(site.id)

    def _dup_key(self, p: Point3) -> Tuple[int, int, int]:
        t = self._dup_tol
        return (int(math.floor(p[0] / t)), int(math.floor(p[1] / t)),
                int(math.floor(p[2] / t)))

    def find_duplicate(self, p: Point3) -> Optional[int]:
        kx, ky, kz = self._dup_key(p)
        tol2 = self._dup_tol * self._dup_tol
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    for sid in self._dup_index.get(
                            (kx + dx, ky + dy, kz + dz), ()):
                        if dist2(p, self.sites[sid].position) < tol2:
                            return sid
        return None

    def contains(self, p: Point3, strict: bool = False) -> bool:
        lo, hi = self.domain
        if strict:
            return all(lo[i] < p[i] < hi[i] for i in range(3))
        return all(lo[i] <= p[i] <= hi[i] for i in range(3))

    def _append_tet(self, v0: int, v1: int, v2: int, v3: int) -> int:
        t = len(self._alive)
        self._tv.extend((v0, v1, v2, v3))
        self._tn.extend((OUTSIDE, OUTSIDE, OUTSIDE, OUTSIDE))
        self._alive.append(1)
        self._gen_counter += 1
        self._gen.append(self._gen_counter)
        return t

    # -- point location ---------------------------------------------------

    def locate(self, p: Point3, hint: Optional[int] = None) -> int:
        """Live tet containing p; deterministic on faces and edges."""
        if not self.contains(p):
            raise ValueError(f"point {p} outside domain")
        t = hint if hint is not None and self.is_live(hint) else self._hint
        if not self.is_live(t):
            t = next(self.live_tets(), None)
            if t is None:
                raise ValueError("empty triangulation")
        sites = self.sites
        tv = self._tv
        tn = self._tn
        max_steps = 4 * len(self._alive) + 16
        prev = -1
        for _ in range(max_steps):
            b = 4 * t
            verts = [sites[tv[b + i]].position for i in range(4)]
            moved = False
            for slot in range(4):
                nb = tn[b + slot]
                if nb == prev and nb != OUTSIDE:
                    continue
                f = _FACE_OPP[slot]
                # p strictly on the far side of this face -> leave through it
                if orient3d(verts[f[0]], verts[f[1]], verts[f[2]], p) \
                        == Sign.NEGATIVE:
                    if nb == OUTSIDE:
                        raise ValueError(
                            f"walk exited the hull toward {p}")
                    prev = t
                    t = nb
                    moved = True
                    break
            if not moved:
                return t
        # safety net: deterministic brute-force scan
        for t in self.live_tets():
            b = 4 * t
            verts = [sites[tv[b + i]].position for i in range(4)]
            if all(orient3d(verts[f[0]], verts[f[1]], verts[f[2]], p)
                   != Sign.NEGATIVE for f in _FACE_OPP):
                return t
        raise ValueError(f"no live tet contains {p}")

    # -- insertion --------------------------------------------------------

    def insert(self, site: WeightedSite,
               hint: Optional[int] = None) -> InsertionResult:
        p = site.position
        if not self.contains(p, strict=True):
            raise ValueError(f"site position {p} not strictly inside domain")
        dup = self.find_duplicate(p)
        if dup is not None:
            raise DuplicateSiteError(dup)

        t0 = self.locate(p, hint)
        self._register_site(site)
        pw = self._pw
        tv = self._tv
        tn = self._tn
        s5 = pw[site.id]

        def conflicts(t: int) -> bool:
            b = 4 * t
            return conflict_perturbed(pw[tv[b]], pw[tv[b + 1]],
                                      pw[tv[b + 2]], pw[tv[b + 3]], s5)

        if not conflicts(t0):
            # covered at its own position -> empty power cell
            self.hidden.append(site.id)
            return InsertionResult(site.id, True, [], [])

        # breadth-first cavity growth over neighbor links
        cavity = {t0}
        order = [t0]
        tested: Dict[int, bool] = {}
        boundary: List[Tuple[int, int]] = []  # (cavity tet, face slot)
        queue = deque((t0,))
        while queue:
            t = queue.popleft()
            b = 4 * t
            for slot in range(4):
                nb = tn[b + slot]
                if nb == OUTSIDE:
                    boundary.append((t, slot))
                    continue
                if nb in cavity:
                    continue
                hit = tested.get(nb)
                if hit is None:
                    hit = conflicts(nb)
                    tested[nb] = hit
                if hit:
                    cavity.add(nb)
                    order.append(nb)
                    queue.append(nb)
                else:
                    boundary.append((t, slot))

        # sites interior to the cavity lose their last live tet: hidden
        cavity_verts = set()
        for t in order:
            b = 4 * t
            cavity_verts.update(tv[b:b + 4])
        boundary_verts = set()
        for t, slot in boundary:
            b = 4 * t
            for k in _FACE_OPP[slot]:
                boundary_verts.add(tv[b + k])
        for sid in sorted(cavity_verts - boundary_verts):
            self.hidden.append(sid)

        created: List[int] = []
        edge_link: Dict[Tuple[int, int], Tuple[int, int]] = {}
        for t, slot in boundary:
            b = 4 * t
            f = _FACE_OPP[slot]
            fv = (tv[b + f[0]], tv[b + f[1]], tv[b + f[2]])
            outside = tn[b + slot]
            nt = self._append_tet(fv[0], fv[1], fv[2], site.id)
            created.append(nt)
            nb4 = 4 * nt
            tn[nb4 + 3] = outside
            if outside != OUTSIDE:
                ob = 4 * outside
                for k in range(4):
                    if tn[ob + k] == t:
                        tn[ob + k] = nt
                        break
            # stitch the three faces that contain the new site
            for k in range(3):
                e0 = fv[(k + 1) % 3]
                e1 = fv[(k + 2) % 3]
                key = (e0, e1) if e0 < e1 else (e1, e0)
                other = edge_link.pop(key, None)
                if other is None:
                    edge_link[key] = (nt, k)
                else:
                    ot, ok = other
                    tn[nb4 + k] = ot
                    tn[4 * ot + ok] = nt
        if edge_link:
            raise RuntimeError("cavity boundary did not close")

        destroyed = list(order)
        for t in destroyed:
            self._alive[t] = 0
        self._hint = created[-1]
        return InsertionResult(site.id, False, destroyed, created)

    # -- verification oracle (tests only: O(sites x tets)) -----------------

    def verify_regularity(self) -> List[tuple]:
        violations: List[tuple] = []
        pw = self._pw
        tv = self._tv
        tn = self._tn
        hidden = set(self.hidden)
        live = list(self.live_tets())

        seen_sites = set()
        for t in live:
            b = 4 * t
            verts = [self.sites[tv[b + i]].position for i in range(4)]
            seen_sites.update(tv[b:b + 4])
            if orient3d(*verts) != Sign.POSITIVE:
                violations.append(("orientation", t))
            for slot in range(4):
                nb = tn[b + slot]
                if nb == OUTSIDE:
                    continue
                if not self.is_live(nb):
                    violations.append(("dead_neighbor", t, nb))
                    continue
                back = [k for k in range(4) if tn[4 * nb + k] == t]
                if len(back) != 1:
                    violations.append(("asymmetric_link", t, nb))
        for site in self.sites:
            if site.id in hidden:
                continue
            if site.id not in seen_sites:
                violations.append(("orphan_site", site.id))
        for t in live:
            b = 4 * t
            vids = set(tv[b:b + 4])
            a5, b5, c5, d5 = (pw[tv[b + i]] for i in range(4))
            for site in self.sites:
                sid = site.id
                if sid in vids or sid in hidden:
                    continue
                if conflict_perturbed(a5, b5, c5, d5, pw[sid]):
                    violations.append(("conflict", t, sid))
        return violations

    # -- debug dump --------------------------------------------------------

    def dump(self) -> str:
        lines = []
        for s in self.sites:
            cls = getattr(s.site_class, "name", None) or "-"
            lines.append(
                f"v {s.id} {s.position[0]!r} {s.position[1]!r} "
                f"{s.position[2]!r} {s.weight!r} {cls.lower()}")
        for t in self.live_tets():
            b = 4 * t
            lines.append("t " + " ".join(str(self._tv[b + i]) for i in range(4)))
        return "\n".join(lines) + "\n"


def parse_dump(text: str):
    """Parse the debug dump back into plain site/tet tuples (fixtures)."""
    sites = []
    tets = []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            sites.append((int(parts[1]),
                          (float(parts[2]), float(parts[3]), float(parts[4])),
                          float(parts[5]), parts[6]))
        elif parts[0] == "t":
            tets.append(tuple(int(v) for v in parts[1:5]))
        else:
            raise ValueError(f"bad dump line: {line!r}")
    return sites, tets


def init_domain(domain_box, corner_samples: Sequence,
                require_exterior: bool = True) -> Tetrahedralization:
    """Bootstrap the complex from the 8 box corners.

    Corners are permanent boundary sites weighted by their squared field
    values.  With ``require_exterior`` (the default, right for closed models
    normalized into the inner cube) a non-positive corner value is rejected
    as "domain too small"; unbounded surfaces such as planes legitimately
    pierce the domain walls and may opt out, trading watertightness for a
    clipped open surface.

    The corner tetrahedralization is found by exhaustive search over the 70
    vertex quadruples for the cells whose orthospheres are empty under the
    perturbation scheme: with unequal corner weights a fixed template split
    is not regular in general, and a non-regular start would poison every
    later insertion.
    """
    from .extraction import classify_site  # deferred: avoids a module cycle

    if len(corner_samples) != 8:
        raise ValueError("need exactly 8 corner samples")
    tri = Tetrahedralization(domain_box)
    lo, hi = tri.domain
    corners = []
    for i in range(8):
        corners.append((
            hi[0] if i & 1 else lo[0],
            hi[1] if i & 2 else lo[1],
            hi[2] if i & 4 else lo[2],
        ))
    for i, sample in enumerate(corner_samples):
        value = sample.value if hasattr(sample, "value") else float(sample)
        if require_exterior and value <= 0:
            raise ValueError(
                f"domain corner {corners[i]} is not outside the object "
                f"(value {value}); domain too small")
        site = tri.new_site(corners[i], value * value,
                            classify_site(value), is_boundary=True)
        tri._register_site(site)

    pw = tri._pw
    kept = []
    for quad in combinations(range(8), 4):
        pts = [corners[i] for i in quad]
        sign = orient3d(*pts)
        if sign == Sign.ZERO:
            continue
        order = list(quad)
        if sign == Sign.NEGATIVE:
            order[0], order[1] = order[1], order[0]
        others = [i for i in range(8) if i not in quad]
        a5, b5, c5, d5 = (pw[i] for i in order)
        if any(conflict_perturbed(a5, b5, c5, d5, pw[i]) for i in others):
            continue
        kept.append(tuple(order))

    face_map: Dict[Tuple[int, int, int], List[Tuple[int, int]]] = {}
    for order in kept:
        t = tri._append_tet(*order)
        b = 4 * t
        for slot in range(4):
            f = _FACE_OPP[slot]
            key = tuple(sorted(tri._tv[b + k] for k in f))
            face_map.setdefault(key, []).append((t, slot))
    for key, inc in face_map.items():
        if len(inc) == 2:
            (t0, s0), (t1, s1) = inc
            tri._tn[4 * t0 + s0] = t1
            tri._tn[4 * t1 + s1] = t0
        elif len(inc) != 1:
            raise RuntimeError(
                f"corner triangulation face {key} has {len(inc)} incidences")
    tri._hint = 0
    return tri
