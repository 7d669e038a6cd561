"""Independent checks that a carved body really rolls along its path.

Three oracles, each recomputing from scratch rather than reusing solver state:
closure of the holonomy (with plain 3x3 matrices), the support function of
the mesh along and away from the trace, and a replay that rolls the body
over its own trace and recovers the planar path.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .mesh_forge import TrajectoidSolid, support_height
from .path_model import PlanarPath
from .rolling_map import Rotation, SphereTrace, holonomy, sphere_trace
from .solver import Solution

__all__ = [
    "Thresholds",
    "HolonomyCheck",
    "SupportCheck",
    "ReplayResult",
    "VerificationReport",
    "fibonacci_sphere",
    "matrix_holonomy",
    "verify_holonomy",
    "verify_trace_support",
    "replay",
    "verify_solution",
]


@dataclass(frozen=True)
class Thresholds:
    holonomy: float = 1e-8
    support_rel: float = 1e-5
    off_trace_delta: float = 0.1
    off_trace_samples: int = 2000
    replay_rel: float = 1e-9
    orientation: float = 1e-8
    minimality: float = 1e-4


DEFAULTS = Thresholds()


def fibonacci_sphere(k: int) -> np.ndarray:
    """``k`` nearly uniform unit vectors (golden-angle spiral)."""
    i = np.arange(k) + 0.5
    z = 1.0 - 2.0 * i / k
    rho = np.sqrt(1.0 - z * z)
    th = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.column_stack([rho * np.cos(th), rho * np.sin(th), z])


def _rodrigues(axis, angle) -> np.ndarray:
    x, y, z = axis
    K = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def matrix_holonomy(path: PlanarPath, r: float) -> np.ndarray:
    """One-period rotation as a product of 3x3 matrices."""
    M = np.eye(3)
    for (dx, dy), ell in zip(path.directions, path.segment_lengths):
        M = _rodrigues((-dy, dx, 0.0), ell / r) @ M
    return M


def _matrix_angle(M) -> float:
    # atan2 keeps precision near the identity where acos would not
    s = 0.5 * np.linalg.norm([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
    c = 0.5 * (np.trace(M) - 1.0)
    return math.atan2(s, c)


@dataclass(frozen=True)
class HolonomyCheck:
    residual: float
    matrix_angle: float
    power_residuals: list[float]
    passed: bool
    minimal: bool


def verify_holonomy(path: PlanarPath, sol: Solution, thresholds: Thresholds = DEFAULTS) -> HolonomyCheck:
    """Distance of ``H(r*)**n`` from the identity, by quaternions and by matrices.

    ``power_residuals[m-1]`` is the distance for ``H**m``; for ``m < n`` it
    must stay above the minimality threshold.
    """
    H = holonomy(path, sol.radius)
    powers = []
    acc = Rotation.identity()
    for _ in range(sol.n):
        acc = H @ acc
        powers.append(acc.distance_to_identity())
    Mn = np.linalg.matrix_power(matrix_holonomy(path, sol.radius), sol.n)
    m_angle = _matrix_angle(Mn)
    residual = powers[-1]
    passed = residual <= thresholds.holonomy and m_angle <= 2.0 * thresholds.holonomy
    minimal = all(p > thresholds.minimality for p in powers[:-1])
    return HolonomyCheck(residual, m_angle, powers, passed, minimal)


def _densify(points: np.ndarray, max_step: float) -> np.ndarray:
    a, b = points[:-1], points[1:]
    ang = np.arctan2(np.linalg.norm(np.cross(a, b), axis=1), np.sum(a * b, axis=1))
    out = [points[:1]]
    for i in range(len(a)):
        m = max(1, math.ceil(ang[i] / max_step))
        t = np.arange(1, m + 1)[:, None] / m
        p = (1 - t) * a[i] + t * b[i]
        out.append(p / np.linalg.norm(p, axis=1)[:, None])
    return np.vstack(out)


def _midpoints(points: np.ndarray) -> np.ndarray:
    m = points[:-1] + points[1:]
    n = np.linalg.norm(m, axis=1)
    ok = n > 1e-12
    return m[ok] / n[ok, None]


@dataclass(frozen=True)
class SupportCheck:
    max_deviation: float
    max_deviation_rel: float
    worst_index: int
    min_margin: float | None
    min_margin_rel: float | None
    off_trace_count: int
    midpoint_deviation_rel: float
    passed: bool


def verify_trace_support(
    solid: TrajectoidSolid, trace: SphereTrace, thresholds: Thresholds = DEFAULTS
) -> SupportCheck:
    """Support height along the trace and away from it.

    On every trace sample the centre must sit at height ``r``.  Directions at
    least ``delta`` away from the trace and from every cut normal must lift
    it strictly.  The deviation at the midpoints between trace samples is
    reported for information; it measures the polygonal approximation of
    the continuous cut set.
    """
    r = solid.radius
    h = support_height(solid, trace.points)
    dev = np.abs(h - r)
    worst = int(np.argmax(dev))
    mid = support_height(solid, _midpoints(trace.points)) - r if len(trace.points) > 1 else np.zeros(1)

    delta = thresholds.off_trace_delta
    chord = 2.0 * math.sin(delta / 2.0)
    dirs = fibonacci_sphere(thresholds.off_trace_samples)
    near = _densify(trace.points, delta / 10.0)
    if solid.planes:
        near = np.vstack([near, np.array([p.normal for p in solid.planes])])
    dist, _ = cKDTree(near).query(dirs)
    far = dirs[dist >= chord]
    if len(far):
        margin = float(np.min(support_height(solid, far)) - r)
        margin_rel = margin / r
    else:
        margin = margin_rel = None
    passed = dev[worst] <= thresholds.support_rel * r and (margin is None or margin > 0.0)
    return SupportCheck(
        float(dev[worst]),
        float(dev[worst] / r),
        worst,
        margin,
        margin_rel,
        int(len(far)),
        float(np.max(np.abs(mid)) / r),
        bool(passed),
    )


@dataclass(frozen=True)
class ReplayResult:
    positions: np.ndarray = field(repr=False)
    arclength: np.ndarray = field(repr=False)
    max_deviation: float
    orientation_residuals: list[float]
    closure_periods: list[int]
    passed: bool

    def to_csv(self) -> str:
        lines = ["s,x,y"]
        lines += [f"{s:.17g},{x:.17g},{y:.17g}" for s, (x, y) in zip(self.arclength, self.positions)]
        return "\n".join(lines) + "\n"


def replay(
    path: PlanarPath,
    sol: Solution,
    periods: int,
    thresholds: Thresholds = DEFAULTS,
    trace: SphereTrace | None = None,
) -> ReplayResult:
    """Roll the ball so its contact point follows the body-frame trace.

    Each step finds the body point that must touch next, reads off the
    rolling direction from where that point currently sits, and rolls.
    The recovered ground track is compared with the periodic extension of
    ``path``; the body orientation is recorded after every period.
    """
    if periods < 1:
        raise ValueError("periods must be >= 1")
    r = sol.radius
    if trace is None:
        trace = sphere_trace(path.repeated(periods), r)
    pts = trace.points
    q = Rotation.identity()
    pos = np.empty((len(pts), 2))
    pos[0] = path.vertices[0]
    L = path.length
    marks = {int(np.argmin(np.abs(trace.arclength - m * L))): m for m in range(1, periods + 1)}
    orient: list[float] = []
    for i in range(1, len(pts)):
        w = q.apply(pts[i])
        horiz = w[:2]
        hn = math.hypot(horiz[0], horiz[1])
        theta = math.atan2(hn, -w[2])
        if hn > 0:
            d = horiz / hn
            q = Rotation.from_axis_angle((-d[1], d[0], 0.0), theta) @ q
            pos[i] = pos[i - 1] + r * theta * d
        else:
            pos[i] = pos[i - 1]
        if i in marks:
            orient.append(q.distance_to_identity())
    expected = path.point_at(trace.arclength)
    dev = float(np.max(np.linalg.norm(pos - expected, axis=1)))
    closure = [m for m, res in enumerate(orient, start=1) if res <= thresholds.orientation]
    passed = dev <= thresholds.replay_rel * L and all(
        (orient[m - 1] <= thresholds.orientation) == (m % sol.n == 0) for m in range(1, len(orient) + 1)
    )
    return ReplayResult(pos, trace.arclength.copy(), dev, orient, closure, bool(passed))


@dataclass(frozen=True)
class VerificationReport:
    solution: dict
    holonomy: HolonomyCheck
    support: SupportCheck | None
    replay: ReplayResult | None
    thresholds: Thresholds
    passed: bool

    def to_dict(self) -> dict:
        out = {
            "passed": self.passed,
            "solution": self.solution,
            "thresholds": asdict(self.thresholds),
            "holonomy": asdict(self.holonomy),
            "support": None if self.support is None else asdict(self.support),
            "replay": None,
        }
        if self.replay is not None:
            rp = self.replay
            out["replay"] = {
                "max_deviation": rp.max_deviation,
                "orientation_residuals": rp.orientation_residuals,
                "closure_periods": rp.closure_periods,
                "passed": rp.passed,
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_plain)


def _plain(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def verify_solution(
    path: PlanarPath,
    sol: Solution,
    solid: TrajectoidSolid | None = None,
    trace: SphereTrace | None = None,
    periods: int | None = None,
    thresholds: Thresholds = DEFAULTS,
) -> VerificationReport:
    hol = verify_holonomy(path, sol, thresholds)
    sup = None
    if solid is not None:
        if trace is None:
            raise ValueError("support check needs the carving trace")
        sup = verify_trace_support(solid, trace, thresholds)
    rp = replay(path, sol, periods or 2 * sol.n, thresholds)
    ok = hol.passed and hol.minimal and rp.passed and (sup is None or sup.passed)
    return VerificationReport(sol.to_dict(), hol, sup, rp, thresholds, bool(ok))
