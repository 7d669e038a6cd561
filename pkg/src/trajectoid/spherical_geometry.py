"""Closing geodesics, enclosed areas and the two-period doubling construction.

Turning angles on the sphere are measured about the inward normal, i.e. as
seen from the ball centre.  With that orientation a trace turns exactly as
the planar path does, and for a closed piecewise-geodesic loop

    area / r**2 = 2*pi - sum(turning angles)    (mod 4*pi).

Areas handed out of this module are reduced mod ``2*pi*r**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .path_model import PlanarPath, turning_profile
from .rolling_map import (
    DOWN,
    MAX_STEP,
    SphereTrace,
    holonomy_quats,
    quat_conj,
    quat_rotate,
    sigma_to_radius,
    sphere_trace,
)

__all__ = [
    "ANTIPODAL_TOL",
    "AntipodalError",
    "AreaValue",
    "ClosedSphericalLoop",
    "DoublingReport",
    "closing_geodesic",
    "turning_angles",
    "close_trace",
    "enclosed_area",
    "normalized_area",
    "normalized_area_batch",
    "triangulated_area",
    "double_trace",
    "doubling_report",
    "wrap_angle",
]

TWO_PI = 2.0 * math.pi
ANTIPODAL_TOL = 1e-6
_SAME_TOL = 1e-12


class AntipodalError(ValueError):
    """The two endpoints are (nearly) antipodal, so the closing arc is not unique."""


def wrap_angle(a):
    """Map angles into (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + math.pi, TWO_PI) - math.pi
    return np.where(w == -math.pi, math.pi, w)


def _angle_between(a, b) -> float:
    return float(math.atan2(np.linalg.norm(np.cross(a, b)), np.dot(a, b)))


def closing_geodesic(a, b, max_step: float = MAX_STEP) -> np.ndarray:
    """Shortest great-circle arc from ``b`` to ``a``, endpoints included.

    Returns an empty ``(0, 3)`` array when the points coincide.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    theta = _angle_between(a, b)
    if theta <= _SAME_TOL:
        return np.empty((0, 3))
    if theta >= math.pi - ANTIPODAL_TOL:
        raise AntipodalError(f"endpoints are {math.pi - theta:.3g} rad from antipodal")
    m = max(1, math.ceil(theta / max_step))
    t = np.arange(m + 1) / m
    # slerp from b to a
    s = math.sin(theta)
    pts = (np.sin((1 - t) * theta)[:, None] * b + np.sin(t * theta)[:, None] * a) / s
    pts[0], pts[-1] = b, a
    return pts / np.linalg.norm(pts, axis=1)[:, None]


def turning_angles(points: np.ndarray) -> np.ndarray:
    """Signed turning at each vertex of a closed loop (last point == first).

    The vertex list is treated cyclically with the duplicate endpoint
    dropped; entry ``i`` is the turn at ``points[i]``.
    """
    p = np.asarray(points, dtype=float)[:-1]
    prev = np.roll(p, 1, axis=0)
    nxt = np.roll(p, -1, axis=0)
    return _turns(prev, p, nxt)


def _turns(prev, p, nxt):
    # tangents at p: arriving from prev, leaving towards nxt
    t_in = np.sum(prev * p, axis=-1)[..., None] * p - prev
    t_out = nxt - np.sum(nxt * p, axis=-1)[..., None] * p
    # measured about the inward normal -p
    cross = -np.sum(np.cross(t_in, t_out) * p, axis=-1)
    dot = np.sum(t_in * t_out, axis=-1)
    return np.arctan2(cross, dot)


@dataclass(frozen=True)
class ClosedSphericalLoop:
    """Closed polyline on the unit sphere; ``radius`` scales areas."""

    points: np.ndarray
    radius: float
    exterior_angles: np.ndarray
    corner_a: int = 0
    corner_m: int | None = None

    @classmethod
    def from_points(cls, points, radius: float = 1.0, corner_m: int | None = None):
        p = np.asarray(points, dtype=float)
        if np.linalg.norm(p[0] - p[-1]) > 1e-9:
            raise ValueError("loop is not closed")
        p = p.copy()
        p[-1] = p[0]
        return cls(p, radius, turning_angles(p), 0, corner_m)

    @property
    def total_turning(self) -> float:
        return float(math.fsum(self.exterior_angles))

    def raw_area(self) -> float:
        """Area in units of length squared, in [0, 4*pi*r**2)."""
        return (TWO_PI - self.total_turning) % (2 * TWO_PI) * self.radius**2

    def to_csv(self) -> str:
        """Rows ``x,y,z,turn``; the last row repeats the first point."""
        turns = np.append(self.exterior_angles, self.exterior_angles[0])
        pts = self.points * self.radius
        rows = ["x,y,z,turn"] + [f"{x:.17g},{y:.17g},{z:.17g},{a:.17g}" for (x, y, z), a in zip(pts, turns)]
        return "\n".join(rows) + "\n"

    @property
    def corner_angles(self) -> tuple[float, float]:
        if self.corner_m is None:
            raise ValueError("loop has no marked junction")
        return float(self.exterior_angles[self.corner_a]), float(self.exterior_angles[self.corner_m])


@dataclass(frozen=True)
class AreaValue:
    raw: float
    reduced: float
    antipodal: bool = False
    radius: float = 1.0

    @classmethod
    def from_raw(cls, raw: float, radius: float) -> "AreaValue":
        return cls(raw, raw % (TWO_PI * radius**2), False, radius)

    @classmethod
    def undefined(cls, radius: float) -> "AreaValue":
        return cls(math.nan, math.nan, True, radius)

    def normalized(self) -> "AreaValue":
        r2 = self.radius**2
        return AreaValue(self.raw / r2, self.reduced / r2, self.antipodal, 1.0)


def close_trace(trace: SphereTrace, max_step: float = MAX_STEP) -> ClosedSphericalLoop:
    """Join the trace end back to its start along the closing geodesic."""
    pts = trace.points
    arc = closing_geodesic(pts[0], pts[-1], max_step)
    corner_m = len(pts) - 1
    if len(arc) == 0:
        loop = np.vstack([pts[:-1], pts[:1]])
        corner_m = None
    else:
        loop = np.vstack([pts, arc[1:-1], pts[:1]])
    return ClosedSphericalLoop.from_points(loop, trace.radius, corner_m)


def enclosed_area(trace: SphereTrace) -> AreaValue:
    """Area bounded by the trace and its closing geodesic (Gauss-Bonnet form).

    Antipodal endpoints return an :class:`AreaValue` with the flag set and
    NaN values rather than raising.
    """
    try:
        loop = close_trace(trace)
    except AntipodalError:
        return AreaValue.undefined(trace.radius)
    return AreaValue.from_raw(loop.raw_area(), trace.radius)


def normalized_area(path: PlanarPath, sigma: float) -> AreaValue:
    r = sigma_to_radius(path.length, sigma)
    return enclosed_area(sphere_trace(path, r)).normalized()


def triangulated_area(points, radius: float = 1.0, apex=None) -> float:
    """Independent area check: signed spherical excess of a triangle fan.

    Each triangle (apex, p_i, p_i+1) contributes its signed solid angle
    (Van Oosterom-Strackee).  The sign is flipped to match the inward-normal
    orientation used for turning angles.  Result in [0, 4*pi*r**2).
    """
    p = np.asarray(points, dtype=float)
    if apex is None:
        c = p[:-1].sum(axis=0)
        apex = -c / np.linalg.norm(c) if np.linalg.norm(c) > 1e-6 else np.array([0.0, 0.0, 1.0])
        # keep the apex away from the loop itself
        if np.min(np.linalg.norm(p - apex, axis=1)) < 1e-3:
            apex = np.array([0.5773502691896258, 0.5773502691896258, -0.5773502691896258])
    a = np.asarray(apex, dtype=float)
    b, c = p[:-1], p[1:]
    num = np.einsum("j,ij->i", a, np.cross(b, c))
    den = 1.0 + b @ a + c @ a + np.sum(b * c, axis=1)
    excess = 2.0 * np.arctan2(num, den)
    return (-math.fsum(excess)) % (2 * TWO_PI) * radius**2


def normalized_area_batch(path: PlanarPath, sigmas, quats=None):
    """Vectorized normalized area over many sigma values.

    Only the endpoints of the trace carry corners that depend on the
    closing arc; every turn inside the trace equals the planar turn, so

        S / r**2 = 2*pi - (total planar turning + corner at end + corner at start).

    Returns ``(area mod 2*pi, raw area mod 4*pi, antipodal flags)``.
    """
    sigmas = np.asarray(sigmas, dtype=float)
    L = path.length
    radii = L / (TWO_PI * sigmas)
    if quats is None:
        quats = holonomy_quats(path, radii)
    inv = quat_conj(quats)
    d = path.directions
    d_first = np.array([d[0, 0], d[0, 1], 0.0])
    d_last = np.array([d[-1, 0], d[-1, 1], 0.0])
    A = np.broadcast_to(DOWN, inv.shape[:-1] + (3,))
    omega = quat_rotate(inv, DOWN)
    t_end = quat_rotate(inv, d_last)
    sep = np.arctan2(np.linalg.norm(np.cross(A, omega), axis=-1), np.sum(A * omega, axis=-1))
    antipodal = sep >= math.pi - ANTIPODAL_TOL
    same = sep <= _SAME_TOL

    # direction at omega towards A along the shortest arc, and arrival direction at A
    g_out = A - np.sum(A * omega, axis=-1)[..., None] * omega
    g_in = np.sum(omega * A, axis=-1)[..., None] * A - omega
    c_m = _tangent_turn(t_end, g_out, omega)
    c_a = _tangent_turn(g_in, np.broadcast_to(d_first, g_in.shape), A)
    # a trace that already closes has a single corner at A
    c_closed = _tangent_turn(np.broadcast_to(t_end, t_end.shape), np.broadcast_to(d_first, t_end.shape), A)
    corners = np.where(same, c_closed, c_m + c_a)
    total = turning_profile(path).total_turning + corners
    raw = np.mod(TWO_PI - total, 2 * TWO_PI)
    raw = np.where(antipodal, np.nan, raw)
    return np.mod(raw, TWO_PI), raw, antipodal


def _tangent_turn(t_in, t_out, p):
    cross = -np.sum(np.cross(t_in, t_out) * p, axis=-1)
    dot = np.sum(t_in * t_out, axis=-1)
    return np.arctan2(cross, dot)


def double_trace(trace: SphereTrace) -> SphereTrace:
    """Append the trace rotated by pi about the midpoint of its closing arc.

    The half-turn swaps the two endpoints, so the result always ends where
    it started; it is the true two-period trace only when the one-period
    area is ``pi r**2`` mod ``2 pi r**2``.
    """
    a, b = trace.start, trace.end
    if _angle_between(a, b) >= math.pi - ANTIPODAL_TOL:
        raise AntipodalError("cannot double a trace with antipodal endpoints")
    m = a + b
    m = m / np.linalg.norm(m)
    rotated = 2.0 * np.outer(trace.points @ m, m) - trace.points
    L = trace.arclength[-1]
    return SphereTrace(
        trace.radius,
        np.vstack([trace.points, rotated[1:]]),
        np.concatenate([trace.arclength, L + trace.arclength[1:]]),
    )


@dataclass(frozen=True)
class DoublingReport:
    corner_a: float
    corner_m: float
    corner_sum: float
    closure_gap: float
    junction_m: float
    junction_a: float
    doubled_area: float
    single_area: float
    degenerate: bool

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def doubling_report(trace: SphereTrace) -> DoublingReport:
    """Diagnostics for the two-period doubling of a single-period trace.

    ``corner_a`` and ``corner_m`` are the turns where the closing geodesic
    meets the trace; ``junction_*`` are the turns of the doubled loop at the
    two seams; ``doubled_area`` is the raw area of the doubled loop in
    units of r**2 (mod 4*pi); ``closure_gap`` is in units of r.
    """
    loop = close_trace(trace)
    degenerate = loop.corner_m is None
    if degenerate:
        c_a = float(loop.exterior_angles[0])
        c_m = 0.0
    else:
        c_a, c_m = loop.corner_angles
    single = loop.raw_area() / trace.radius**2
    doubled = double_trace(trace)
    pts = doubled.points
    gap = float(np.linalg.norm(pts[-1] - pts[0]))
    closed = np.vstack([pts[:-1], pts[:1]])
    turns = turning_angles(closed)
    seam = len(trace.points) - 1
    total = math.fsum(turns)
    return DoublingReport(
        corner_a=c_a,
        corner_m=c_m,
        corner_sum=c_a + c_m,
        closure_gap=gap,
        junction_m=float(turns[seam]),
        junction_a=float(turns[0]),
        doubled_area=(TWO_PI - total) % (2 * TWO_PI),
        single_area=single,
        degenerate=degenerate,
    )
