"""Rolling a ball along a planar polyline, expressed in SO(3).

Conventions: the plane is ``z = 0`` and the ball centre sits at height ``r``.
Rolling a distance ``ell`` in unit direction ``d`` rotates the ball, in the
world frame, about ``z x d`` by ``ell / r``; later segments compose on the
left.  The body-frame contact point after arc length ``t`` is
``R(t)^-1 (0, 0, -r)``.

Quaternions are stored ``(w, x, y, z)`` and every function here accepts
leading batch dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .path_model import PlanarPath

__all__ = [
    "quat_mul",
    "quat_conj",
    "quat_rotate",
    "quat_from_axis_angle",
    "quat_to_matrix",
    "quat_angle",
    "quat_distance_identity",
    "chain_product",
    "segment_quats",
    "holonomy_quats",
    "Rotation",
    "SphereTrace",
    "segment_rotation",
    "holonomy",
    "rotation_angle",
    "sphere_trace",
    "sigma_to_radius",
    "radius_to_sigma",
    "MAX_STEP",
    "DOWN",
]

MAX_STEP = 0.05
DOWN = np.array([0.0, 0.0, -1.0])


def quat_mul(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pw, px, py, pz = np.moveaxis(p, -1, 0)
    qw, qx, qy, qz = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ],
        axis=-1,
    )


def quat_conj(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_normalize(q):
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_rotate(q, v):
    """Rotate vectors ``v`` by unit quaternions ``q`` (broadcasting)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    angle = np.asarray(angle, dtype=float)
    half = 0.5 * angle
    return np.concatenate([np.cos(half)[..., None], np.sin(half)[..., None] * axis], axis=-1)


def quat_to_matrix(q):
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=-2,
    )


def quat_angle(q):
    """Rotation angle in [0, pi], insensitive to the sign of ``q``."""
    q = np.asarray(q, dtype=float)
    return 2.0 * np.arctan2(np.linalg.norm(q[..., 1:], axis=-1), np.abs(q[..., 0]))


def quat_distance_identity(q):
    """min(|q - 1|, |q + 1|): chordal distance to the identity rotation."""
    q = np.asarray(q, dtype=float)
    v2 = np.sum(q[..., 1:] ** 2, axis=-1)
    w = np.abs(q[..., 0])
    return np.sqrt((w - 1.0) ** 2 + v2)


def chain_product(qs):
    """Ordered product ``q[M-1] ... q[1] q[0]`` along axis -2.

    Pairwise reduction keeps the number of numpy calls logarithmic in M; each
    level is renormalized.
    """
    qs = np.asarray(qs, dtype=float)
    while qs.shape[-2] > 1:
        m = qs.shape[-2]
        even = qs[..., 0 : m - 1 : 2, :]
        odd = qs[..., 1:m:2, :]
        paired = quat_normalize(quat_mul(odd, even))
        if m % 2:
            paired = np.concatenate([paired, qs[..., m - 1 :, :]], axis=-2)
        qs = paired
    return qs[..., 0, :]


def _axes(directions):
    d = np.asarray(directions, dtype=float)
    return np.stack([-d[..., 1], d[..., 0], np.zeros(d.shape[:-1])], axis=-1)


def segment_quats(directions, lengths, radii):
    """Per-segment quaternions, shape ``radii.shape + (M, 4)``."""
    axes = _axes(directions)
    radii = np.asarray(radii, dtype=float)
    angle = np.asarray(lengths, dtype=float) / radii[..., None]
    return quat_from_axis_angle(axes, angle)


def holonomy_quats(path: PlanarPath, radii, chunk: int = 1 << 21):
    """Raw holonomy quaternions for an array of radii.

    No sign canonicalization: for a fixed path the result depends
    continuously on the radius, so the scalar part changes sign exactly where
    the rotation angle passes through pi.
    """
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if np.any(radii <= 0):
        raise ValueError("radius must be positive")
    dirs = path.directions
    lens = path.segment_lengths
    flat = radii.ravel()
    step = max(1, chunk // max(1, len(lens)))
    out = np.empty((len(flat), 4))
    for i in range(0, len(flat), step):
        out[i : i + step] = chain_product(segment_quats(dirs, lens, flat[i : i + step]))
    return out.reshape(radii.shape + (4,))


@dataclass(frozen=True)
class Rotation:
    """Unit quaternion element of SO(3); ``q`` and ``-q`` are the same rotation."""

    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if not n > 0:
            raise ValueError("zero quaternion")
        q = q / n
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Rotation":
        axis = np.asarray(axis, dtype=float)
        return cls(quat_from_axis_angle(axis / np.linalg.norm(axis), angle))

    def __matmul__(self, other: "Rotation") -> "Rotation":
        return Rotation(quat_mul(self.q, other.q))

    def inverse(self) -> "Rotation":
        return Rotation(quat_conj(self.q))

    def __pow__(self, n: int) -> "Rotation":
        base = self if n >= 0 else self.inverse()
        result = Rotation.identity()
        for _ in range(abs(n)):
            result = base @ result
        return result

    def apply(self, v) -> np.ndarray:
        return quat_rotate(self.q, v)

    def canonical(self) -> np.ndarray:
        return self.q if self.q[0] >= 0 else -self.q

    @property
    def angle(self) -> float:
        return float(quat_angle(self.q))

    @property
    def axis(self) -> np.ndarray:
        c = self.canonical()
        n = np.linalg.norm(c[1:])
        return c[1:] / n if n > 0 else np.array([0.0, 0.0, 1.0])

    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def distance_to_identity(self) -> float:
        return float(quat_distance_identity(self.q))

    def distance(self, other: "Rotation") -> float:
        return (self.inverse() @ other).distance_to_identity()


def segment_rotation(direction, length: float, r: float) -> Rotation:
    if not r > 0:
        raise ValueError("radius must be positive")
    if length < 0:
        raise ValueError("length must be non-negative")
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    return Rotation(quat_from_axis_angle(_axes(d), length / r))


def holonomy(path: PlanarPath, r: float) -> Rotation:
    """Net rotation after rolling once along ``path`` with ball radius ``r``."""
    return Rotation(holonomy_quats(path, [r])[0])


def rotation_angle(rot: Rotation) -> float:
    return rot.angle


def sigma_to_radius(L: float, sigma: float) -> float:
    if not (L > 0 and sigma > 0):
        raise ValueError("L and sigma must be positive")
    return L / (2.0 * math.pi * sigma)


def radius_to_sigma(L: float, r: float) -> float:
    if not (L > 0 and r > 0):
        raise ValueError("L and r must be positive")
    return L / (2.0 * math.pi * r)


def prefix_rotations(path: PlanarPath, r: float, start: Rotation | None = None) -> np.ndarray:
    """Cumulative rotations at every vertex, shape (N, 4); entry 0 is ``start``."""
    qs = segment_quats(path.directions, path.segment_lengths, np.asarray(r))
    out = np.empty((len(qs) + 1, 4))
    cur = np.array([1.0, 0.0, 0.0, 0.0]) if start is None else start.q.copy()
    out[0] = cur
    for i, q in enumerate(qs, start=1):
        cur = quat_mul(q, cur)
        cur /= math.sqrt(cur @ cur)
        out[i] = cur
    return out


@dataclass(frozen=True)
class SphereTrace:
    """Body-frame contact trace: unit vectors plus planar arc length of each."""

    radius: float
    points: np.ndarray
    arclength: np.ndarray

    def __post_init__(self):
        p = np.array(self.points, dtype=float)
        s = np.array(self.arclength, dtype=float)
        if p.ndim != 2 or p.shape[1] != 3 or len(p) != len(s):
            raise ValueError("points must be (K, 3) with one arc length each")
        p.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "arclength", s)

    @property
    def scaled(self) -> np.ndarray:
        return self.points * self.radius

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def step_angles(self) -> np.ndarray:
        a, b = self.points[:-1], self.points[1:]
        return np.arctan2(np.linalg.norm(np.cross(a, b), axis=1), np.sum(a * b, axis=1))

    def rotated(self, rot: Rotation) -> "SphereTrace":
        return SphereTrace(self.radius, rot.apply(self.points), self.arclength)

    def to_csv(self) -> str:
        """Rows ``t,x,y,z`` with points scaled to the ball radius."""
        rows = ["t,x,y,z"]
        rows += [f"{t:.17g},{x:.17g},{y:.17g},{z:.17g}" for t, (x, y, z) in zip(self.arclength, self.scaled)]
        return "\n".join(rows) + "\n"


def sphere_trace(path: PlanarPath, r: float, max_step: float = MAX_STEP) -> SphereTrace:
    """Trace left by the contact point on the ball, in the body frame.

    Each straight segment maps to a great-circle arc; arcs are subdivided so
    no step exceeds ``max_step`` radians.
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    pre = prefix_rotations(path, r)
    inv = quat_conj(pre[:-1])
    dirs3 = np.column_stack([path.directions, np.zeros(len(path.directions))])
    e1 = quat_rotate(inv, DOWN)
    e2 = quat_rotate(inv, dirs3)
    pts = [DOWN[None, :]]
    arc = [np.zeros(1)]
    s0 = path.arclength
    for k, ell in enumerate(path.segment_lengths):
        theta = ell / r
        m = max(1, math.ceil(theta / max_step))
        a = theta * np.arange(1, m + 1) / m
        p = np.outer(np.cos(a), e1[k]) + np.outer(np.sin(a), e2[k])
        pts.append(p / np.linalg.norm(p, axis=1)[:, None])
        arc.append(s0[k] + ell * np.arange(1, m + 1) / m)
    arc = np.concatenate(arc)
    arc[-1] = s0[-1]
    return SphereTrace(r, np.vstack(pts), arc)
