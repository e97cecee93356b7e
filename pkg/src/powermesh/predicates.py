"""Robust geometric predicates and constructions for weighted points.

Predicate policy: every sign decision is first attempted in plain floating
point with a forward error bound on the determinant.  If the computed
magnitude does not clear the bound, the determinant is re-evaluated in exact
rational arithmetic (floats are dyadic rationals, so ``fractions.Fraction``
reproduces the input bit-for-bit).  Exact ties in the conflict predicate are
broken by symbolic perturbation of the weights: among the five sites involved
the one with the largest id is treated as infinitesimally heavier, then the
next largest, and so on.  This yields a unique, reproducible triangulation on
degenerate inputs (uniform grids, cospherical corners).
"""

from __future__ import annotations

import math
from enum import IntEnum
from fractions import Fraction
from typing import NamedTuple, Sequence, Tuple

from .geom import Point3, dist2, is_finite_point

__all__ = [
    "Sign",
    "orient3d",
    "in_conflict",
    "conflict_perturbed",
    "orthocenter",
    "Orthocenter",
    "DegenerateTetError",
]

_EPS = math.ulp(1.0) / 2.0  # 2^-53, unit roundoff

# Shewchuk's A-stage bound for the 3x3 orientation determinant.
_O3D_BOUND = (7.0 + 56.0 * _EPS) * _EPS

# Conservative bound for the weighted 4x4 conflict determinant.  A rounding
# analysis of the expansion below gives ~20 eps; 2e-14 leaves a 40x margin so
# a float-certified sign can never be wrong, at the cost of slightly more
# exact-arithmetic fallbacks near degeneracy.
_CONFLICT_BOUND = 2e-14

# Site tuples used by the hot paths: (x, y, z, weight, id).
SiteTuple = Tuple[float, float, float, float, int]


class Sign(IntEnum):
    NEGATIVE = -1
    ZERO = 0
    POSITIVE = 1


class DegenerateTetError(ValueError):
    """Raised when a predicate or construction requires a non-flat tet."""


def _sign_of(x) -> Sign:
    if x > 0:
        return Sign.POSITIVE
    if x < 0:
        return Sign.NEGATIVE
    return Sign.ZERO


# ---------------------------------------------------------------------------
# orient3d


def _orient3d_parts(a, b, c, d):
    """Float determinant of rows (b-a, c-a, d-a) plus its error permanent."""
    bax = b[0] - a[0]
    bay = b[1] - a[1]
    baz = b[2] - a[2]
    cax = c[0] - a[0]
    cay = c[1] - a[1]
    caz = c[2] - a[2]
    dax = d[0] - a[0]
    day = d[1] - a[1]
    daz = d[2] - a[2]

    caydaz = cay * daz
    cazday = caz * day
    cazdax = caz * dax
    caxdaz = cax * daz
    caxday = cax * day
    caydax = cay * dax

    det = (
        bax * (caydaz - cazday)
        + bay * (cazdax - caxdaz)
        + baz * (caxday - caydax)
    )
    permanent = (
        abs(bax) * (abs(caydaz) + abs(cazday))
        + abs(bay) * (abs(cazdax) + abs(caxdaz))
        + abs(baz) * (abs(caxday) + abs(caydax))
    )
    return det, permanent


def _orient3d_exact(a, b, c, d) -> Sign:
    ax, ay, az = Fraction(a[0]), Fraction(a[1]), Fraction(a[2])
    r0 = (Fraction(b[0]) - ax, Fraction(b[1]) - ay, Fraction(b[2]) - az)
    r1 = (Fraction(c[0]) - ax, Fraction(c[1]) - ay, Fraction(c[2]) - az)
    r2 = (Fraction(d[0]) - ax, Fraction(d[1]) - ay, Fraction(d[2]) - az)
    det = (
        r0[0] * (r1[1] * r2[2] - r1[2] * r2[1])
        - r0[1] * (r1[0] * r2[2] - r1[2] * r2[0])
        + r0[2] * (r1[0] * r2[1] - r1[1] * r2[0])
    )
    return _sign_of(det)


def orient3d(a: Point3, b: Point3, c: Point3, d: Point3) -> Sign:
    """Side of the oriented plane (a, b, c) that d lies on.

    Positive for the canonical tet (origin, +x, +y, +z); antisymmetric under
    odd vertex permutations; exact in the near-zero regime.
    """
    det, permanent = _orient3d_parts(a, b, c, d)
    bound = _O3D_BOUND * permanent
    # NaN/inf inputs fail this comparison and fall through to validation.
    if det > bound:
        return Sign.POSITIVE
    if -det > bound:
        return Sign.NEGATIVE
    for p in (a, b, c, d):
        if not is_finite_point(p):
            raise ValueError(f"orient3d: non-finite input point {p!r}")
    return _orient3d_exact(a, b, c, d)


# ---------------------------------------------------------------------------
# conflict predicate (weighted in-sphere against a tet's orthosphere)


def _conflict_parts(a: SiteTuple, b: SiteTuple, c: SiteTuple, d: SiteTuple,
                    e: SiteTuple):
    """Float conflict determinant and its error permanent.

    Rows are (p - e, |p - e|^2 - w_p + w_e) for p in (a, b, c, d).  With the
    tet positively oriented, a positive value of the returned determinant
    means e has negative power distance to the tet's orthosphere (conflict).
    """
    ex, ey, ez, ew = e[0], e[1], e[2], e[3]

    ax = a[0] - ex
    ay = a[1] - ey
    az = a[2] - ez
    bx = b[0] - ex
    by = b[1] - ey
    bz = b[2] - ez
    cx = c[0] - ex
    cy = c[1] - ey
    cz = c[2] - ez
    dx = d[0] - ex
    dy = d[1] - ey
    dz = d[2] - ez

    la = ax * ax + ay * ay + az * az - a[3] + ew
    lb = bx * bx + by * by + bz * bz - b[3] + ew
    lc = cx * cx + cy * cy + cz * cz - c[3] + ew
    ld = dx * dx + dy * dy + dz * dz - d[3] + ew

    # 3x3 position minors (rows kept in a,b,c,d order).
    m_bcd = (
        bx * (cy * dz - cz * dy)
        - by * (cx * dz - cz * dx)
        + bz * (cx * dy - cy * dx)
    )
    m_acd = (
        ax * (cy * dz - cz * dy)
        - ay * (cx * dz - cz * dx)
        + az * (cx * dy - cy * dx)
    )
    m_abd = (
        ax * (by * dz - bz * dy)
        - ay * (bx * dz - bz * dx)
        + az * (bx * dy - by * dx)
    )
    m_abc = (
        ax * (by * cz - bz * cy)
        - ay * (bx * cz - bz * cx)
        + az * (bx * cy - by * cx)
    )

    det = la * m_bcd - lb * m_acd + lc * m_abd - ld * m_abc

    p_bcd = (
        abs(bx) * (abs(cy * dz) + abs(cz * dy))
        + abs(by) * (abs(cx * dz) + abs(cz * dx))
        + abs(bz) * (abs(cx * dy) + abs(cy * dx))
    )
    p_acd = (
        abs(ax) * (abs(cy * dz) + abs(cz * dy))
        + abs(ay) * (abs(cx * dz) + abs(cz * dx))
        + abs(az) * (abs(cx * dy) + abs(cy * dx))
    )
    p_abd = (
        abs(ax) * (abs(by * dz) + abs(bz * dy))
        + abs(ay) * (abs(bx * dz) + abs(bz * dx))
        + abs(az) * (abs(bx * dy) + abs(by * dx))
    )
    p_abc = (
        abs(ax) * (abs(by * cz) + abs(bz * cy))
        + abs(ay) * (abs(bx * cz) + abs(bz * cx))
        + abs(az) * (abs(bx * cy) + abs(by * cx))
    )
    la_abs = ax * ax + ay * ay + az * az + abs(a[3]) + abs(ew)
    lb_abs = bx * bx + by * by + bz * bz + abs(b[3]) + abs(ew)
    lc_abs = cx * cx + cy * cy + cz * cz + abs(c[3]) + abs(ew)
    ld_abs = dx * dx + dy * dy + dz * dz + abs(d[3]) + abs(ew)

    permanent = la_abs * p_bcd + lb_abs * p_acd + lc_abs * p_abd + ld_abs * p_abc
    return det, permanent


def _conflict_exact_parts(a, b, c, d, e):
    """Exact conflict determinant plus the weight-perturbation cofactors.

    Returns (det, coeffs) where coeffs maps each of the five site ids to the
    exact derivative of the conflict determinant w.r.t. that site's weight.
    """
    ex, ey, ez = Fraction(e[0]), Fraction(e[1]), Fraction(e[2])
    ew = Fraction(e[3])

    rows = []
    for p in (a, b, c, d):
        px = Fraction(p[0]) - ex
        py = Fraction(p[1]) - ey
        pz = Fraction(p[2]) - ez
        lift = px * px + py * py + pz * pz - Fraction(p[3]) + ew
        rows.append((px, py, pz, lift))

    def det3(r0, r1, r2):
        return (
            r0[0] * (r1[1] * r2[2] - r1[2] * r2[1])
            - r0[1] * (r1[0] * r2[2] - r1[2] * r2[0])
            + r0[2] * (r1[0] * r2[1] - r1[1] * r2[0])
        )

    ra, rb, rc, rd = rows
    m_bcd = det3(rb, rc, rd)
    m_acd = det3(ra, rc, rd)
    m_abd = det3(ra, rb, rd)
    m_abc = det3(ra, rb, rc)

    det = ra[3] * m_bcd - rb[3] * m_acd + rc[3] * m_abd - rd[3] * m_abc

    coeffs = {
        a[4]: -m_bcd,
        b[4]: m_acd,
        c[4]: -m_abd,
        d[4]: m_abc,
    }
    # Heavier query site -> larger lifts all around -> derivative is the
    # alternating minor sum (equals the tet's orientation determinant).
    coeffs[e[4]] = m_bcd - m_acd + m_abd - m_abc
    return det, coeffs


def _conflict_sign_exact(a, b, c, d, e, perturb: bool) -> Sign:
    det, coeffs = _conflict_exact_parts(a, b, c, d, e)
    if det != 0:
        return _sign_of(det)
    if not perturb:
        return Sign.ZERO
    # Symbolic perturbation: larger id = infinitesimally heavier.  The first
    # site (by descending id) whose weight actually moves the determinant
    # decides the sign.
    for sid in sorted(coeffs, reverse=True):
        coef = coeffs[sid]
        if coef != 0:
            return _sign_of(coef)
    return Sign.ZERO


def conflict_sign(a: SiteTuple, b: SiteTuple, c: SiteTuple, d: SiteTuple,
                  e: SiteTuple) -> Sign:
    """Unperturbed conflict sign; assumes (a, b, c, d) positively oriented."""
    det, permanent = _conflict_parts(a, b, c, d, e)
    bound = _CONFLICT_BOUND * permanent
    if det > bound:
        return Sign.POSITIVE
    if -det > bound:
        return Sign.NEGATIVE
    return _conflict_sign_exact(a, b, c, d, e, perturb=False)


def conflict_perturbed(a: SiteTuple, b: SiteTuple, c: SiteTuple, d: SiteTuple,
                       e: SiteTuple) -> bool:
    """True iff e conflicts with the tet under the perturbation scheme."""
    det, permanent = _conflict_parts(a, b, c, d, e)
    bound = _CONFLICT_BOUND * permanent
    if det > bound:
        return True
    if -det > bound:
        return False
    return _conflict_sign_exact(a, b, c, d, e, perturb=True) == Sign.POSITIVE


def _as_site_tuple(s) -> SiteTuple:
    p = s.position
    return (p[0], p[1], p[2], s.weight, s.id)


def in_conflict(tet: Sequence, s) -> Sign:
    """Sign of s against the orthosphere of a 4-site tet.

    Positive/Zero/Negative correspond to s inside / on / outside the
    orthosphere in the power metric.  The tet may be given in either
    orientation but must not be degenerate.
    """
    ts = [_as_site_tuple(v) for v in tet]
    st = _as_site_tuple(s)
    for t in ts + [st]:
        if not is_finite_point(t[:3]) or not math.isfinite(t[3]):
            raise ValueError(f"in_conflict: non-finite site {t!r}")
    orientation = orient3d(ts[0][:3], ts[1][:3], ts[2][:3], ts[3][:3])
    if orientation == Sign.ZERO:
        raise DegenerateTetError("in_conflict: degenerate (flat) tet")
    if orientation == Sign.NEGATIVE:
        ts[0], ts[1] = ts[1], ts[0]
    return conflict_sign(ts[0], ts[1], ts[2], ts[3], st)


# ---------------------------------------------------------------------------
# orthocenter


class Orthocenter(NamedTuple):
    point: Point3
    power_radius_squared: float
    reliable: bool


# Row-norm ratio beyond which the linear system is declared unreliable, plus
# a Hadamard-scaled determinant floor for near-flat tets that balanced row
# norms cannot detect.
_ROW_RATIO_LIMIT = 1e8
_SCALED_DET_FLOOR = 1e-12


def orthocenter(tet: Sequence) -> Orthocenter:
    """Point with equal power distance to all four weighted sites.

    Returns the common power value as ``power_radius_squared`` (may be
    negative).  ``reliable`` is False when the defining linear system is too
    ill-conditioned for the result to be trusted downstream.
    """
    sites = [_as_site_tuple(v) for v in tet]
    p0 = sites[0]
    z0 = p0[0] * p0[0] + p0[1] * p0[1] + p0[2] * p0[2] - p0[3]

    rows = []
    rhs = []
    for p in sites[1:]:
        rows.append((2.0 * (p[0] - p0[0]), 2.0 * (p[1] - p0[1]),
                     2.0 * (p[2] - p0[2])))
        rhs.append(p[0] * p[0] + p[1] * p[1] + p[2] * p[2] - p[3] - z0)

    r0, r1, r2 = rows
    det = (
        r0[0] * (r1[1] * r2[2] - r1[2] * r2[1])
        - r0[1] * (r1[0] * r2[2] - r1[2] * r2[0])
        + r0[2] * (r1[0] * r2[1] - r1[1] * r2[0])
    )
    norms = [math.sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]) for r in rows]
    if min(norms) == 0.0 or orient3d(
            sites[0][:3], sites[1][:3], sites[2][:3], sites[3][:3]) == Sign.ZERO:
        raise DegenerateTetError("orthocenter: degenerate tet")

    ratio = max(norms) / min(norms)
    scaled = abs(det) / (norms[0] * norms[1] * norms[2])
    reliable = ratio <= _ROW_RATIO_LIMIT and scaled >= _SCALED_DET_FLOOR
    if det == 0.0:
        # Exactly singular in float but not flat by the exact test: report
        # the centroid as an unreliable placeholder rather than dividing.
        cx = sum(s[0] for s in sites) / 4.0
        cy = sum(s[1] for s in sites) / 4.0
        cz = sum(s[2] for s in sites) / 4.0
        pt = (cx, cy, cz)
        return Orthocenter(pt, dist2(pt, p0[:3]) - p0[3], False)

    # Cramer's rule.
    def det3(c0, c1, c2):
        return (
            c0[0] * (c1[1] * c2[2] - c1[2] * c2[1])
            - c0[1] * (c1[0] * c2[2] - c1[2] * c2[0])
            + c0[2] * (c1[0] * c2[1] - c1[1] * c2[0])
        )

    b = rhs
    col_b = (b[0], b[1], b[2])
    colx = (r0[0], r1[0], r2[0])
    coly = (r0[1], r1[1], r2[1])
    colz = (r0[2], r1[2], r2[2])
    # dets of the matrix with one column replaced, computed column-wise
    dx = det3(
        (col_b[0], coly[0], colz[0]),
        (col_b[1], coly[1], colz[1]),
        (col_b[2], coly[2], colz[2]),
    )
    dy = det3(
        (colx[0], col_b[0], colz[0]),
        (colx[1], col_b[1], colz[1]),
        (colx[2], col_b[2], colz[2]),
    )
    dz = det3(
        (colx[0], coly[0], col_b[0]),
        (colx[1], coly[1], col_b[1]),
        (colx[2], coly[2], col_b[2]),
    )
    x = (dx / det, dy / det, dz / det)
    r2sq = dist2(x, p0[:3]) - p0[3]
    if not is_finite_point(x) or not math.isfinite(r2sq):
        cx = sum(s[0] for s in sites) / 4.0
        cy = sum(s[1] for s in sites) / 4.0
        cz = sum(s[2] for s in sites) / 4.0
        pt = (cx, cy, cz)
        return Orthocenter(pt, dist2(pt, p0[:3]) - p0[3], False)
    return Orthocenter(x, r2sq, reliable)
