"""Planar paths: ingestion, generators and turning analysis.

A path is an open polyline in the rolling plane.  Turning angles are signed,
positive for counterclockwise (left) turns when the plane is seen from above.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "PathFormatError",
    "DegeneratePathError",
    "PlanarPath",
    "TurningProfile",
    "load_path_csv",
    "dump_path_csv",
    "resample",
    "turning_profile",
    "gen_v_path",
    "gen_wedge_path",
    "gen_zigzag",
    "gen_fourier_random",
    "gen_random_polyline",
]


class PathFormatError(ValueError):
    """Raised when path text cannot be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegeneratePathError(ValueError):
    """Raised for paths with too few points or back-tracking cusps."""


@dataclass(frozen=True)
class PlanarPath:
    vertices: np.ndarray
    name: str = ""

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise DegeneratePathError("vertices must be an (N, 2) array")
        if len(v) < 2:
            raise DegeneratePathError("a path needs at least 2 vertices")
        if not np.all(np.isfinite(v)):
            raise DegeneratePathError("vertices must be finite")
        seg = np.linalg.norm(np.diff(v, axis=0), axis=1)
        if np.any(seg <= 0.0):
            i = int(np.argmin(seg))
            raise DegeneratePathError(f"zero-length segment after vertex {i}")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def segments(self) -> np.ndarray:
        return np.diff(self.vertices, axis=0)

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.segments, axis=1)

    @property
    def directions(self) -> np.ndarray:
        """Unit direction of each segment, shape (M, 2)."""
        seg = self.segments
        return seg / np.linalg.norm(seg, axis=1)[:, None]

    @property
    def arclength(self) -> np.ndarray:
        """Cumulative arc length at each vertex, starting at 0."""
        return np.concatenate([[0.0], np.cumsum(self.segment_lengths)])

    @property
    def length(self) -> float:
        return float(np.sum(self.segment_lengths))

    @property
    def displacement(self) -> np.ndarray:
        """The period vector from first to last vertex."""
        return self.vertices[-1] - self.vertices[0]

    def __len__(self) -> int:
        return len(self.vertices)

    def transformed(self, angle: float = 0.0, shift=(0.0, 0.0), scale: float = 1.0) -> "PlanarPath":
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        return PlanarPath(scale * self.vertices @ rot.T + np.asarray(shift, float), self.name)

    def reversed(self) -> "PlanarPath":
        return PlanarPath(self.vertices[::-1], self.name)

    def repeated(self, m: int) -> "PlanarPath":
        """``m`` translated copies joined into one path."""
        if m < 1:
            raise ValueError("m must be >= 1")
        d = self.displacement
        parts = [self.vertices] + [self.vertices[1:] + k * d for k in range(1, m)]
        return PlanarPath(np.vstack(parts), self.name)

    def point_at(self, t) -> np.ndarray:
        """Position at arc length ``t`` (array-like), extended periodically past L."""
        t = np.asarray(t, dtype=float)
        L = self.length
        period = np.floor(t / L)
        # keep exact period ends on the current copy
        period = np.where((t - period * L == 0.0) & (period > 0), period - 1, period)
        local = t - period * L
        s = self.arclength
        idx = np.clip(np.searchsorted(s, local, side="right") - 1, 0, len(s) - 2)
        frac = (local - s[idx]) / (s[idx + 1] - s[idx])
        p = self.vertices[idx] + frac[..., None] * (self.vertices[idx + 1] - self.vertices[idx])
        return p + period[..., None] * self.displacement


@dataclass(frozen=True)
class TurningProfile:
    exterior_angles: np.ndarray
    total_turning: float
    index: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "index", self.total_turning / (2.0 * math.pi))

    def reduced_index(self) -> float:
        return self.index % 1.0


def _parse_float(token: str) -> float:
    token = token.strip()
    if not token:
        raise ValueError("empty field")
    return float(token)


def load_path_csv(data: bytes | str, name: str = "") -> PlanarPath:
    """Parse two-column ``x,y`` text into a path.

    A single non-numeric first row is treated as a header.  Repeated
    consecutive points are collapsed.
    """
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    points: list[tuple[float, float]] = []
    first = True
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            if first and not _row_is_numeric(row):
                first = False
                continue
            raise PathFormatError(f"expected 2 columns, got {len(row)}", lineno)
        try:
            x, y = _parse_float(row[0]), _parse_float(row[1])
        except ValueError:
            if first:
                first = False
                continue
            raise PathFormatError(f"non-numeric value in {row!r}", lineno) from None
        first = False
        if not (math.isfinite(x) and math.isfinite(y)):
            raise PathFormatError("non-finite coordinate", lineno)
        if points and points[-1] == (x, y):
            continue
        points.append((x, y))
    if len(points) < 2:
        raise DegeneratePathError("fewer than 2 distinct points")
    return PlanarPath(np.array(points), name)


def _row_is_numeric(row) -> bool:
    try:
        [_parse_float(c) for c in row]
    except ValueError:
        return False
    return True


def dump_path_csv(path: PlanarPath, header: bool = True) -> str:
    lines = ["x,y"] if header else []
    lines += [f"{x:.17g},{y:.17g}" for x, y in path.vertices]
    return "\n".join(lines) + "\n"


def resample(path: PlanarPath, max_seg: float | None = None) -> PlanarPath:
    """Split every segment evenly so that no piece exceeds ``max_seg``.

    Original vertices are kept bit-for-bit.  Defaults to ``L / 2000``.
    """
    if max_seg is None:
        max_seg = path.length / 2000.0
    if not max_seg > 0:
        raise ValueError("max_seg must be positive")
    v = path.vertices
    out = [v[:1]]
    for a, b, ell in zip(v[:-1], v[1:], path.segment_lengths):
        m = max(1, math.ceil(ell / max_seg))
        if m > 1:
            f = np.arange(1, m)[:, None] / m
            out.append(a + f * (b - a))
        out.append(b[None, :])
    return PlanarPath(np.vstack(out), path.name)


def exterior_angles(directions: np.ndarray) -> np.ndarray:
    d0, d1 = directions[:-1], directions[1:]
    cross = d0[:, 0] * d1[:, 1] - d0[:, 1] * d1[:, 0]
    dot = np.sum(d0 * d1, axis=1)
    return np.arctan2(cross, dot)


def turning_profile(path: PlanarPath) -> TurningProfile:
    seg = path.segments
    d0, d1 = seg[:-1], seg[1:]
    cross = d0[:, 0] * d1[:, 1] - d0[:, 1] * d1[:, 0]
    dot = np.sum(d0 * d1, axis=1)
    cusp = (cross == 0.0) & (dot < 0.0)
    if np.any(cusp):
        i = int(np.flatnonzero(cusp)[0]) + 1
        raise DegeneratePathError(f"path reverses direction at vertex {i}")
    ang = np.arctan2(cross, dot)
    ang.setflags(write=False)
    return TurningProfile(ang, float(math.fsum(ang)))


def gen_v_path(x: float, y: float) -> PlanarPath:
    if not (x > 0 and y > 0):
        raise ValueError("V path needs x > 0 and y > 0")
    return PlanarPath(np.array([[-x, y], [0.0, 0.0], [x, y]]), f"v({x:g},{y:g})")


def _wedge(w: PlanarPath, beta: float) -> PlanarPath:
    # Second piece: w run backwards, rotated by beta about the junction.
    end = w.vertices[-1]
    c, s = math.cos(beta), math.sin(beta)
    rot = np.array([[c, -s], [s, c]])
    back = (w.vertices[::-1] - end) @ rot.T + end
    return PlanarPath(np.vstack([w.vertices, back[1:]]), f"wedge[{w.name}]({beta:.6g})")


def gen_wedge_path(w: PlanarPath, beta: float) -> PlanarPath:
    """Join ``w`` to a reversed copy of itself rotated by ``beta`` about its end.

    The full holonomy is then the commutator of the rotation by ``beta`` with
    the holonomy of ``w``, which caps the rotation angle at ``2 * beta``.
    """
    if not 0.0 < beta < math.pi / 2:
        raise ValueError("beta must lie in (0, pi/2)")
    return _wedge(w, beta)


def _zigzag_piece(k: float, alpha: float) -> PlanarPath:
    turn = math.pi - alpha
    v = np.array([[0.0, 0.0], [1.0, 0.0], [1.0 + k * math.cos(turn), k * math.sin(turn)]])
    return PlanarPath(v, "zig")


def gen_zigzag(k: float, alpha: float, beta: float) -> PlanarPath:
    """Four-segment wedge built from a two-segment piece.

    The piece has unit first segment, second segment of length ``k`` and
    interior angle ``alpha`` at the joint.  For rational ``k`` the piece
    admits radii where its holonomy is trivial, so a warning is emitted.
    """
    if not k > 0:
        raise ValueError("k must be positive")
    for label, a in (("alpha", alpha), ("beta", beta)):
        if not 0.0 < a < math.pi:
            raise ValueError(f"{label} must lie in (0, pi)")
    if abs(float(Fraction(k).limit_denominator(1000)) - k) <= 1e-12 * k:
        warnings.warn(f"k={k!r} is rational; the half path has trivial-holonomy radii", stacklevel=2)
    p = _wedge(_zigzag_piece(k, alpha), beta)
    return PlanarPath(p.vertices, f"zigzag({k:.6g},{alpha:.6g},{beta:.6g})")


def gen_fourier_random(seed: int, modes: int = 5, scale: float = 0.25, samples: int = 400) -> PlanarPath:
    """Random smooth curve whose periodic repetition is C1.

    The curve is ``(s, 0) + f(s) - f(0)`` for a random trigonometric
    polynomial ``f`` of period 1 with coefficients decaying as ``1/m**2``.
    Short straight stubs along the common end tangent are added at both
    ends, so the first and last segments are parallel.
    """
    if modes < 1:
        raise ValueError("modes must be >= 1")
    rng = np.random.default_rng(seed)
    m = np.arange(1, modes + 1)
    amp = scale / m**2
    a = rng.standard_normal((modes, 2)) * amp[:, None]
    b = rng.standard_normal((modes, 2)) * amp[:, None]

    def curve(s):
        ph = 2 * np.pi * np.outer(s, m)
        return np.column_stack([s, np.zeros_like(s)]) + np.cos(ph) @ a + np.sin(ph) @ b

    def tangent(s):
        ph = 2 * np.pi * s * m
        return np.array([1.0, 0.0]) + (2 * np.pi * m * (-np.sin(ph))) @ a + (2 * np.pi * m * np.cos(ph)) @ b

    s = np.linspace(0.0, 1.0, samples + 1)
    pts = curve(s)
    pts = pts - pts[0]
    t0 = tangent(0.0)
    t0 = t0 / np.linalg.norm(t0)
    stub = t0 * (np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)) / samples)
    verts = np.vstack([[0.0, 0.0], pts + stub, pts[-1] + 2 * stub])
    return PlanarPath(verts, f"fourier(seed={seed},modes={modes},scale={scale:g})")


def gen_random_polyline(seed: int, segments: int = 6, max_turn: float = 2.0) -> PlanarPath:
    """Random open polyline: lengths in [0.5, 1.5], turns uniform in ``[-max_turn, max_turn]``."""
    if segments < 1:
        raise ValueError("segments must be >= 1")
    if not 0 <= max_turn < math.pi:
        raise ValueError("max_turn must lie in [0, pi)")
    rng = np.random.default_rng(seed)
    lengths = rng.uniform(0.5, 1.5, segments)
    heading = np.concatenate([[0.0], np.cumsum(rng.uniform(-max_turn, max_turn, segments - 1))])
    steps = lengths[:, None] * np.column_stack([np.cos(heading), np.sin(heading)])
    v = np.vstack([[0.0, 0.0], np.cumsum(steps, axis=0)])
    return PlanarPath(v, f"polyline(seed={seed},segments={segments})")
