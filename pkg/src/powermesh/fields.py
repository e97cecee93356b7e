"""Signed-distance-field backends: analytic primitives, CSG, sampled grids.

Every field reports value and gradient together.  Gradients of CSG nodes are
subgradients taken from the winning operand (ties go to the operand with the
smaller index), which is how composed distance fields behave in practice and
deliberately exercises the non-unit-gradient code paths downstream.
"""

from __future__ import annotations

import logging
import math
import struct
import threading
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Tuple

import numpy as np

from .geom import Point3, Vec3

log = logging.getLogger(__name__)

SDFG_MAGIC = b"SDFG"

# Default extraction domain is the cube [-1, 1]^3; projection tolerance is
# 1e-6 of its diagonal.
DEFAULT_DOMAIN = ((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))
PROJECTION_TOL = 1e-6 * 2.0 * math.sqrt(3.0)


class FieldSample(NamedTuple):
    value: float
    gradient: Vec3


class ScalarField:
    """Base class: pure point evaluation plus a thread-safe query counter."""

    def __init__(self):
        self._count = 0
        self._count_lock = threading.Lock()

    @property
    def query_count(self) -> int:
        return self._count

    def eval(self, p: Point3) -> FieldSample:
        with self._count_lock:
            self._count += 1
        return self._sample(p)

    def _sample(self, p: Point3) -> FieldSample:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# analytic primitives


class Sphere(ScalarField):
    def __init__(self, radius: float, center: Point3 = (0.0, 0.0, 0.0)):
        super().__init__()
        if radius <= 0:
            raise ValueError("sphere radius must be positive")
        self.radius = float(radius)
        self.center = tuple(float(c) for c in center)

    def _sample(self, p):
        dx = p[0] - self.center[0]
        dy = p[1] - self.center[1]
        dz = p[2] - self.center[2]
        d = math.sqrt(dx * dx + dy * dy + dz * dz)
        if d == 0.0:
            return FieldSample(-self.radius, (0.0, 0.0, 0.0))
        return FieldSample(d - self.radius, (dx / d, dy / d, dz / d))


class Plane(ScalarField):
    """Half-space distance: value = n . p - offset with unit normal n."""

    def __init__(self, normal: Vec3 = (0.0, 0.0, 1.0), offset: float = 0.0):
        super().__init__()
        n = math.sqrt(sum(c * c for c in normal))
        if n == 0.0:
            raise ValueError("plane normal must be nonzero")
        self.normal = tuple(float(c) / n for c in normal)
        self.offset = float(offset)

    def _sample(self, p):
        n = self.normal
        v = n[0] * p[0] + n[1] * p[1] + n[2] * p[2] - self.offset
        return FieldSample(v, n)


class Box(ScalarField):
    def __init__(self, half_extents: Vec3, center: Point3 = (0.0, 0.0, 0.0)):
        super().__init__()
        if any(h <= 0 for h in half_extents):
            raise ValueError("box half extents must be positive")
        self.half = tuple(float(h) for h in half_extents)
        self.center = tuple(float(c) for c in center)

    def _sample(self, p):
        d = [p[i] - self.center[i] for i in range(3)]
        q = [abs(d[i]) - self.half[i] for i in range(3)]
        outside = [max(qi, 0.0) for qi in q]
        out_len = math.sqrt(sum(o * o for o in outside))
        if out_len > 0.0:
            grad = tuple(
                (outside[i] / out_len) * (1.0 if d[i] >= 0 else -1.0)
                for i in range(3)
            )
            return FieldSample(out_len, grad)
        # interior: distance to the nearest face, gradient along that axis
        axis = max(range(3), key=lambda i: q[i])
        grad = [0.0, 0.0, 0.0]
        grad[axis] = 1.0 if d[axis] >= 0 else -1.0
        return FieldSample(q[axis], tuple(grad))


class Torus(ScalarField):
    """Torus around the z axis through ``center``."""

    def __init__(self, major: float, minor: float,
                 center: Point3 = (0.0, 0.0, 0.0)):
        super().__init__()
        if major <= 0 or minor <= 0 or minor >= major:
            raise ValueError("torus requires 0 < minor < major")
        self.major = float(major)
        self.minor = float(minor)
        self.center = tuple(float(c) for c in center)

    def _sample(self, p):
        x = p[0] - self.center[0]
        y = p[1] - self.center[1]
        z = p[2] - self.center[2]
        u = math.hypot(x, y)
        a = u - self.major
        ln = math.hypot(a, z)
        if ln == 0.0:
            return FieldSample(-self.minor, (0.0, 0.0, 0.0))
        if u == 0.0:
            # on the axis the radial direction is undefined
            return FieldSample(ln - self.minor, (0.0, 0.0, z / ln))
        gr = a / ln
        return FieldSample(ln - self.minor,
                           (gr * x / u, gr * y / u, z / ln))


class _Combine(ScalarField):
    """min/max composition; the winning operand supplies value and gradient."""

    def __init__(self, children: Sequence[ScalarField], take_max: bool):
        super().__init__()
        if len(children) < 2:
            raise ValueError("CSG composition needs at least two operands")
        self.children = list(children)
        self.take_max = take_max

    def _sample(self, p):
        best = self.children[0]._sample(p)
        for child in self.children[1:]:
            s = child._sample(p)
            if (s.value > best.value) if self.take_max else (s.value < best.value):
                best = s
        return best


class Union(_Combine):
    def __init__(self, *children):
        super().__init__(children, take_max=False)


class Intersection(_Combine):
    def __init__(self, *children):
        super().__init__(children, take_max=True)


class Difference(ScalarField):
    """a minus b: max(a, -b); ties resolve to operand a."""

    def __init__(self, a: ScalarField, b: ScalarField):
        super().__init__()
        self.a = a
        self.b = b

    def _sample(self, p):
        sa = self.a._sample(p)
        sb = self.b._sample(p)
        neg_b = -sb.value
        if neg_b > sa.value:
            g = sb.gradient
            return FieldSample(neg_b, (-g[0], -g[1], -g[2]))
        return sa


# ---------------------------------------------------------------------------
# sampled grid field


class GridField(ScalarField):
    """Trilinear interpolation of a uniform scalar grid.

    Values are stored x-fastest.  Queries must stay one cell inside the grid
    box so the central-difference gradient never leaves the data.
    """

    def __init__(self, dims: Tuple[int, int, int], origin: Point3,
                 spacing: float, values: np.ndarray):
        super().__init__()
        nx, ny, nz = dims
        if nx < 2 or ny < 2 or nz < 2:
            raise ValueError("grid needs at least 2 samples per axis")
        if spacing <= 0:
            raise ValueError("grid spacing must be positive")
        values = np.asarray(values, dtype=np.float64)
        if values.size != nx * ny * nz:
            raise ValueError("value count does not match dims")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid contains non-finite values")
        self.dims = (nx, ny, nz)
        self.origin = tuple(float(c) for c in origin)
        self.spacing = float(spacing)
        # x-fastest flat order -> index as [ix, iy, iz]
        self.values = values.reshape(nz, ny, nx).transpose(2, 1, 0).copy()

    def box(self):
        o = self.origin
        return (o, tuple(o[i] + self.spacing * (self.dims[i] - 1)
                         for i in range(3)))

    def query_box(self):
        """Largest box in which eval() is defined (grid box inset one cell)."""
        lo, hi = self.box()
        h = self.spacing
        return (tuple(v + h for v in lo), tuple(v - h for v in hi))

    def _interp(self, p):
        t = [(p[i] - self.origin[i]) / self.spacing for i in range(3)]
        idx = []
        frac = []
        for i in range(3):
            j = int(math.floor(t[i]))
            j = min(max(j, 0), self.dims[i] - 2)
            idx.append(j)
            frac.append(t[i] - j)
        ix, iy, iz = idx
        fx, fy, fz = frac
        v = self.values
        c00 = v[ix, iy, iz] * (1 - fx) + v[ix + 1, iy, iz] * fx
        c10 = v[ix, iy + 1, iz] * (1 - fx) + v[ix + 1, iy + 1, iz] * fx
        c01 = v[ix, iy, iz + 1] * (1 - fx) + v[ix + 1, iy, iz + 1] * fx
        c11 = v[ix, iy + 1, iz + 1] * (1 - fx) + v[ix + 1, iy + 1, iz + 1] * fx
        c0 = c00 * (1 - fy) + c10 * fy
        c1 = c01 * (1 - fy) + c11 * fy
        return c0 * (1 - fz) + c1 * fz

    def _sample(self, p):
        lo, hi = self.query_box()
        for i in range(3):
            if not (lo[i] <= p[i] <= hi[i]):
                raise ValueError(
                    f"grid query {p} outside inset box {lo}..{hi}")
        h = 0.5 * self.spacing
        value = self._interp(p)
        grad = []
        for axis in range(3):
            hp = list(p)
            hm = list(p)
            hp[axis] += h
            hm[axis] -= h
            grad.append((self._interp(hp) - self._interp(hm)) / (2.0 * h))
        return FieldSample(float(value), tuple(grad))


def write_sdfg(path, grid: GridField) -> None:
    nx, ny, nz = grid.dims
    flat = grid.values.transpose(2, 1, 0).reshape(-1).astype("<f4")
    with open(path, "wb") as f:
        f.write(SDFG_MAGIC)
        f.write(struct.pack("<III", nx, ny, nz))
        f.write(struct.pack("<fff", *grid.origin))
        f.write(struct.pack("<f", grid.spacing))
        f.write(flat.tobytes())


def read_sdfg(path) -> GridField:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != SDFG_MAGIC:
            raise ValueError(f"not an SDFG file (magic {magic!r})")
        nx, ny, nz = struct.unpack("<III", f.read(12))
        origin = struct.unpack("<fff", f.read(12))
        (spacing,) = struct.unpack("<f", f.read(4))
        payload = f.read()
    expected = nx * ny * nz * 4
    if len(payload) != expected:
        raise ValueError(
            f"SDFG payload is {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<f4")
    return GridField((nx, ny, nz), origin, spacing, values)


# ---------------------------------------------------------------------------
# analytic field spec strings
#
#   sphere:R[@cx,cy,cz]      box:hx,hy,hz[@c]      torus:R,r[@c]
#   plane:nx,ny,nz,offset
#   union(spec;spec[;...])   intersection(...)     difference(a;b)


def _split_top(text: str, sep: str):
    parts = []
    depth = 0
    cur = []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ValueError(f"unbalanced parentheses in field spec: {text!r}")
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        raise ValueError(f"unbalanced parentheses in field spec: {text!r}")
    parts.append("".join(cur))
    return parts


def _parse_floats(text: str, n: int, what: str):
    parts = text.split(",")
    if len(parts) != n:
        raise ValueError(f"{what}: expected {n} numbers, got {text!r}")
    try:
        return [float(v) for v in parts]
    except ValueError as exc:
        raise ValueError(f"{what}: bad number in {text!r}") from exc


def analytic_field(spec: str) -> ScalarField:
    """Build a field from a spec string; raises ValueError on malformed input."""
    spec = spec.strip()
    if not spec:
        raise ValueError("empty field spec")
    for op, cls in (("union", Union), ("intersection", Intersection),
                    ("difference", Difference)):
        if spec.startswith(op + "(") and spec.endswith(")"):
            inner = spec[len(op) + 1:-1]
            children = [analytic_field(s) for s in _split_top(inner, ";")]
            if op == "difference":
                if len(children) != 2:
                    raise ValueError("difference takes exactly two operands")
                return Difference(children[0], children[1])
            return cls(*children)
    if ":" not in spec:
        raise ValueError(f"malformed field spec {spec!r}")
    name, _, rest = spec.partition(":")
    center = (0.0, 0.0, 0.0)
    if "@" in rest:
        rest, _, ctext = rest.partition("@")
        center = tuple(_parse_floats(ctext, 3, "center"))
    name = name.strip().lower()
    if name == "sphere":
        (r,) = _parse_floats(rest, 1, "sphere")
        return Sphere(r, center)
    if name == "box":
        hx, hy, hz = _parse_floats(rest, 3, "box")
        return Box((hx, hy, hz), center)
    if name == "torus":
        major, minor = _parse_floats(rest, 2, "torus")
        return Torus(major, minor, center)
    if name == "plane":
        nx, ny, nz, off = _parse_floats(rest, 4, "plane")
        if center != (0.0, 0.0, 0.0):
            raise ValueError("plane spec does not take a center")
        return Plane((nx, ny, nz), off)
    raise ValueError(f"unknown field shape {name!r}")


# ---------------------------------------------------------------------------
# projection onto the zero level set


@dataclass(frozen=True)
class ProjectionConfig:
    max_iters: int = 20
    tol: float = PROJECTION_TOL


class Projection(NamedTuple):
    point: Point3
    converged: bool
    iterations: int
    value: float


def project_to_surface(field: ScalarField, p: Point3,
                       cfg: ProjectionConfig = ProjectionConfig(),
                       first_sample: FieldSample = None) -> Projection:
    """Walk p along the normalized gradient until |value| <= tol.

    Exact distance fields land in one step; fields with non-unit gradients
    contract geometrically.  A vanishing gradient aborts with the last
    iterate and ``converged=False``.  Callers that already sampled p can pass
    ``first_sample`` to save the first field query.
    """
    q = (float(p[0]), float(p[1]), float(p[2]))
    value = 0.0
    for it in range(cfg.max_iters + 1):
        s = first_sample if it == 0 and first_sample is not None \
            else field.eval(q)
        value = s.value
        if abs(value) <= cfg.tol:
            return Projection(q, True, it, value)
        if it == cfg.max_iters:
            break
        g = s.gradient
        gn = math.sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2])
        if gn < 1e-12:
            log.debug("projection hit vanishing gradient at %s", q)
            return Projection(q, False, it, value)
        step = value / gn
        q = (q[0] - step * g[0], q[1] - step * g[1], q[2] - step * g[2])
    return Projection(q, False, cfg.max_iters, value)
