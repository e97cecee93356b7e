"""Small 3-vector helpers on plain float tuples.

The triangulation core works on (x, y, z) tuples rather than numpy arrays:
per-element tuple math is considerably faster for the scalar-heavy inner
loops, and keeps the predicate layer free of array semantics.
"""

from __future__ import annotations

import math
from typing import Tuple

Point3 = Tuple[float, float, float]
Vec3 = Tuple[float, float, float]


def sub(a: Point3, b: Point3) -> Vec3:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def add(a: Point3, b: Point3) -> Vec3:
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def scale(a: Vec3, s: float) -> Vec3:
    return (a[0] * s, a[1] * s, a[2] * s)


def dot(a: Vec3, b: Vec3) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def cross(a: Vec3, b: Vec3) -> Vec3:
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def norm(a: Vec3) -> float:
    return math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


def dist(a: Point3, b: Point3) -> float:
    return norm(sub(a, b))


def dist2(a: Point3, b: Point3) -> float:
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    dz = a[2] - b[2]
    return dx * dx + dy * dy + dz * dz


def normalized(a: Vec3) -> Vec3:
    n = norm(a)
    if n == 0.0:
        return (0.0, 0.0, 0.0)
    return (a[0] / n, a[1] / n, a[2] / n)


def is_finite_point(p) -> bool:
    return (
        len(p) == 3
        and math.isfinite(p[0])
        and math.isfinite(p[1])
        and math.isfinite(p[2])
    )
