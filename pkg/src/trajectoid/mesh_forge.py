"""Carving the trajectoid body out of a shell ball with tangent-plane cuts.

The body is the intersection of the shell ball with one half space
``u . x <= r`` per contact direction ``u``.  Everything is convex, so the
carving is done by clipping a convex polyhedron plane by plane.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .path_model import PlanarPath
from .rolling_map import MAX_STEP, Rotation, SphereTrace, holonomy, sphere_trace

__all__ = [
    "MeshError",
    "NonManifoldError",
    "CavityError",
    "CutPlane",
    "TrajectoidSolid",
    "ConvexPolyhedron",
    "build_shell",
    "cut_planes",
    "periodic_trace",
    "trajectoid_trace",
    "carve",
    "support_height",
    "mesh_volume",
    "mesh_area",
    "check_mesh",
    "export_stl",
    "read_stl",
    "export_obj",
    "sidecar",
    "core_cavity",
    "cavity_volume",
    "DEFAULT_SHELL_RATIO",
]

DEFAULT_SHELL_RATIO = 1.4
DEFAULT_MIN_SPACING = 1e-3
DEFAULT_MAX_CUTS = 2000
DEDUP_DOT = 1.0 - 1e-10


class MeshError(RuntimeError):
    pass


class NonManifoldError(MeshError):
    """Clipping produced a cap that is not a single cycle (tolerance failure)."""


class CavityError(MeshError):
    pass


@dataclass(frozen=True)
class CutPlane:
    normal: np.ndarray
    offset: float

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        return np.asarray(x) @ self.normal <= self.offset + tol


# --- shell -----------------------------------------------------------------


def _icosahedron():
    t = (1.0 + 5**0.5) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    return v / np.linalg.norm(v, axis=1)[:, None], f


def _subdivide(v, f):
    edges = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.ravel()
    mids = v[uniq[:, 0]] + v[uniq[:, 1]]
    mids /= np.linalg.norm(mids, axis=1)[:, None]
    nf = len(f)
    ab, bc, ca = inv[:nf] + len(v), inv[nf : 2 * nf] + len(v), inv[2 * nf :] + len(v)
    a, b, c = f.T
    faces = np.concatenate(
        [np.column_stack(x) for x in ((a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca))]
    )
    return np.vstack([v, mids]), faces


def build_shell(r_shell: float, subdivisions: int):
    """Icosphere with vertices on the sphere of radius ``r_shell``.

    Returns ``(vertices, faces)``; ``subdivisions=k`` gives ``20 * 4**k`` faces.
    """
    if not r_shell > 0:
        raise ValueError("r_shell must be positive")
    if not 1 <= subdivisions <= 8:
        raise ValueError("subdivisions must be in [1, 8]")
    v, f = _icosahedron()
    for _ in range(subdivisions):
        v, f = _subdivide(v, f)
    return v * r_shell, f


# --- convex clipping ---------------------------------------------------------


class ConvexPolyhedron:
    """Polygon-face convex polyhedron supporting in-place half-space clipping.

    Faces are vertex-index lists ordered counterclockwise from outside.  Each
    face carries a label: ``-1`` for shell faces, otherwise the cut index.
    """

    def __init__(self, vertices, faces, labels=None):
        self._v = np.array(vertices, dtype=float)
        self.n_verts = len(self._v)
        self.faces: dict[int, list[int]] = {i: list(map(int, f)) for i, f in enumerate(faces)}
        self.labels: dict[int, int] = {i: (-1 if labels is None else int(labels[i])) for i in self.faces}
        self._next_face = len(self.faces)
        self.vert_faces: list[set[int]] = [set() for _ in range(self.n_verts)]
        self._alive = np.zeros(len(self._v), dtype=bool)
        for fid, f in self.faces.items():
            for v in f:
                self.vert_faces[v].add(fid)
        self._alive[: self.n_verts] = [bool(s) for s in self.vert_faces]
        self.scale = float(np.max(np.linalg.norm(self._v, axis=1)))

    @property
    def vertices(self) -> np.ndarray:
        return self._v[: self.n_verts]

    def _add_vertex(self, x) -> int:
        if self.n_verts == len(self._v):
            self._v = np.vstack([self._v, np.empty_like(self._v)])
            self._alive = np.concatenate([self._alive, np.zeros(len(self._alive), dtype=bool)])
        self._v[self.n_verts] = x
        self.vert_faces.append(set())
        self.n_verts += 1
        return self.n_verts - 1

    def _set_face(self, fid: int, verts: list[int] | None):
        for v in self.faces.get(fid, ()):
            vf = self.vert_faces[v]
            vf.discard(fid)
            if not vf:
                self._alive[v] = False
        if verts is None:
            self.faces.pop(fid, None)
            self.labels.pop(fid, None)
            return
        self.faces[fid] = verts
        for v in verts:
            self.vert_faces[v].add(fid)
            self._alive[v] = True

    def clip(self, normal, offset: float, label: int, eps: float | None = None) -> bool:
        """Keep ``normal . x <= offset``.  Returns False if nothing was cut."""
        n = np.asarray(normal, dtype=float)
        if eps is None:
            eps = 1e-11 * self.scale
        alive = self._alive[: self.n_verts]
        s = self.vertices @ n - offset
        out_mask = (s > eps) & alive
        if not out_mask.any():
            return False
        if not np.any(~out_mask & alive):
            raise MeshError("cut removes the whole body")
        outside = np.flatnonzero(out_mask).tolist()
        on_plane: set[int] = set(np.flatnonzero((np.abs(s) <= eps) & alive).tolist())
        edge_cache: dict[tuple[int, int], int] = {}

        touched = set()
        for v in outside:
            touched |= self.vert_faces[v]
        idx = sorted({v for fid in touched for v in self.faces[fid]})
        sv = dict(zip(idx, s[idx].tolist()))

        def cross_vertex(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            got = edge_cache.get(key)
            if got is None:
                t = sv[a] / (sv[a] - sv[b])
                x = self._v[a] + t * (self._v[b] - self._v[a])
                got = self._add_vertex(x)
                sv[got] = 0.0
                edge_cache[key] = got
            return got

        for fid in touched:
            poly = self.faces[fid]
            new: list[int] = []
            m = len(poly)
            for i in range(m):
                a, b = poly[i], poly[(i + 1) % m]
                sa, sb = sv[a], sv[b]
                if sa <= eps:
                    new.append(a)
                    if sa >= -eps:
                        on_plane.add(a)
                if (sa < -eps and sb > eps) or (sa > eps and sb < -eps):
                    c = cross_vertex(a, b)
                    new.append(c)
                    on_plane.add(c)
            self._set_face(fid, new if len(new) >= 3 else None)

        on_plane = {v for v in on_plane if self._alive[v]}

        # open boundary = edges between on-plane vertices without a twin
        nxt: dict[int, int] = {}
        for fid in {f for v in on_plane for f in self.vert_faces[v]}:
            poly = self.faces[fid]
            m = len(poly)
            for i in range(m):
                a, b = poly[i], poly[(i + 1) % m]
                if a in on_plane and b in on_plane:
                    twin = any(_has_edge(self.faces[g], b, a) for g in self.vert_faces[a] & self.vert_faces[b] if g != fid)
                    if not twin:
                        if b in nxt:
                            raise NonManifoldError(f"vertex {b} opens twice on cut {label}")
                        nxt[b] = a
        if not nxt:
            return True
        start = next(iter(nxt))
        cap = [start]
        cur = nxt[start]
        while cur != start:
            cap.append(cur)
            if cur not in nxt or len(cap) > len(nxt):
                raise NonManifoldError(f"cap of cut {label} is not a single cycle")
            cur = nxt[cur]
        if len(cap) != len(nxt):
            raise NonManifoldError(f"cap of cut {label} has {len(nxt) - len(cap)} stray edges")
        fid = self._next_face
        self._next_face += 1
        self._set_face(fid, cap)
        self.labels[fid] = label
        if self.n_verts > 4096 and 2 * np.count_nonzero(self._alive[: self.n_verts]) < self.n_verts:
            self._collect()
        return True

    def _collect(self):
        # drop dead vertices so per-cut work tracks the live surface
        keep = np.flatnonzero(self._alive[: self.n_verts])
        remap = np.full(self.n_verts, -1, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        rl = remap.tolist()
        self._v = self._v[keep].copy()
        self._alive = np.ones(len(keep), dtype=bool)
        self.vert_faces = [self.vert_faces[v] for v in keep.tolist()]
        self.faces = {fid: [rl[v] for v in f] for fid, f in self.faces.items()}
        self.n_verts = len(keep)

    def compact(self):
        """``(vertices, polygons, labels)`` with unused vertices dropped."""
        used = sorted({v for f in self.faces.values() for v in f})
        remap = {v: i for i, v in enumerate(used)}
        polys = [[remap[v] for v in f] for f in self.faces.values()]
        labels = [self.labels[fid] for fid in self.faces]
        return self.vertices[used].copy(), polys, np.array(labels)


def _has_edge(poly, a, b) -> bool:
    m = len(poly)
    for i in range(m):
        if poly[i] == a and poly[(i + 1) % m] == b:
            return True
    return False


def _triangulate(vertices, polygons):
    """Fan each polygon with more than 3 corners about its centroid."""
    verts = [vertices]
    tris = []
    owner = []
    nv = len(vertices)
    extra = []
    for pi, poly in enumerate(polygons):
        if len(poly) == 3:
            tris.append(poly)
            owner.append(pi)
            continue
        c = vertices[poly].mean(axis=0)
        ci = nv + len(extra)
        extra.append(c)
        m = len(poly)
        for i in range(m):
            tris.append([ci, poly[i], poly[(i + 1) % m]])
            owner.append(pi)
    if extra:
        verts.append(np.array(extra))
    return np.vstack(verts), np.array(tris, dtype=np.int64), np.array(owner)


# --- solids ------------------------------------------------------------------


@dataclass(frozen=True)
class TrajectoidSolid:
    vertices: np.ndarray
    faces: np.ndarray
    planes: list[CutPlane]
    radius: float
    shell_radius: float
    polygons: list[list[int]] = field(default_factory=list, repr=False)
    polygon_labels: np.ndarray = field(default=None, repr=False)
    face_owner: np.ndarray = field(default=None, repr=False)
    cavity_radius: float | None = None
    bore_axis: np.ndarray | None = None
    cavity_face_start: int | None = None
    bore_rim: np.ndarray | None = field(default=None, repr=False)

    @property
    def face_normals(self) -> np.ndarray:
        v = self.vertices[self.faces]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        norm = np.linalg.norm(n, axis=1)
        out = np.zeros_like(n)
        ok = norm > 0
        out[ok] = n[ok] / norm[ok, None]
        if self.polygon_labels is not None and self.face_owner is not None:
            # degenerate slivers take the normal of the plane they lie in
            for i in np.flatnonzero(norm <= 1e-14 * self.shell_radius**2):
                lab = self.polygon_labels[self.face_owner[i]]
                if lab >= 0:
                    out[i] = self.planes[lab].normal
        return out

    def volume(self) -> float:
        return mesh_volume(self.vertices, self.faces)


def periodic_trace(trace: SphereTrace, one_period: Rotation, periods: int) -> SphereTrace:
    """Extend a one-period trace to ``periods`` periods.

    Period ``m`` of the trace is the first period mapped by the inverse of
    the one-period holonomy raised to ``m``.
    """
    if periods < 1:
        raise ValueError("periods must be >= 1")
    step = one_period.inverse()
    pts = [trace.points]
    arc = [trace.arclength]
    L = trace.arclength[-1]
    rot = Rotation.identity()
    for m in range(1, periods):
        rot = step @ rot
        pts.append(rot.apply(trace.points)[1:])
        arc.append(m * L + trace.arclength[1:])
    return SphereTrace(trace.radius, np.vstack(pts), np.concatenate(arc))


def trajectoid_trace(
    path: PlanarPath,
    r: float,
    periods: int,
    max_cuts: int | None = DEFAULT_MAX_CUTS,
    min_spacing: float = DEFAULT_MIN_SPACING,
) -> tuple[SphereTrace, Rotation]:
    """Trace over ``periods`` periods, sampled about as finely as the cut budget allows.

    Returns the trace and the one-period holonomy.
    """
    step = MAX_STEP
    if max_cuts:
        # every segment end is a sample anyway; spend the rest of the budget evenly
        total = periods * path.length / r
        room = 0.9 * max_cuts - periods * (len(path) - 1)
        if room > 0:
            step = min(MAX_STEP, max(min_spacing, total / room))
    one = sphere_trace(path, r, max_step=step)
    H = holonomy(path, r)
    return periodic_trace(one, H, periods), H


def _decimate(points: np.ndarray, spacing: float) -> np.ndarray:
    keep = [0]
    last = points[0]
    for i in range(1, len(points)):
        p = points[i]
        if math.atan2(np.linalg.norm(np.cross(last, p)), float(last @ p)) >= spacing:
            keep.append(i)
            last = p
    if keep[-1] != len(points) - 1:
        keep.append(len(points) - 1)
    return points[keep]


def _dedupe_normals(normals: np.ndarray) -> np.ndarray:
    chord = math.sqrt(2.0 * (1.0 - DEDUP_DOT))
    tree = cKDTree(normals)
    drop = set()
    for i, j in sorted(tree.query_pairs(chord * 1.0000001)):
        if i not in drop and normals[i] @ normals[j] >= DEDUP_DOT:
            drop.add(j)
    return normals[[i for i in range(len(normals)) if i not in drop]]


def cut_planes(
    trace: SphereTrace,
    min_spacing: float = DEFAULT_MIN_SPACING,
    max_cuts: int | None = DEFAULT_MAX_CUTS,
    period_points: int | None = None,
    one_period: Rotation | None = None,
    periods: int = 1,
) -> list[CutPlane]:
    """Tangent planes along the trace, decimated to at least ``min_spacing`` rad.

    With ``one_period`` and ``periods`` the first period is decimated once
    and copied by the holonomy, so the cut set is exactly invariant under it.
    ``max_cuts`` widens the spacing until the budget is met.
    """
    pts = trace.points if period_points is None else trace.points[:period_points]
    copies = periods if one_period is not None else 1
    spacing = min_spacing
    while True:
        base = _decimate(pts, spacing)
        normals = base
        if one_period is not None:
            step = one_period.inverse()
            rot = Rotation.identity()
            parts = [base]
            for _ in range(1, copies):
                rot = step @ rot
                parts.append(rot.apply(base))
            normals = np.vstack(parts)
        normals = _dedupe_normals(normals / np.linalg.norm(normals, axis=1)[:, None])
        if max_cuts is None or len(normals) <= max_cuts:
            break
        spacing *= 1.25
    return [CutPlane(u.copy(), trace.radius) for u in normals]


def _max_dot(vertices: np.ndarray, dirs: np.ndarray, chunk: int = 512) -> np.ndarray:
    out = np.empty(len(dirs))
    for i in range(0, len(dirs), chunk):
        out[i : i + chunk] = np.max(vertices @ dirs[i : i + chunk].T, axis=0)
    return out


def carve(
    trace: SphereTrace | list[CutPlane],
    r_shell: float | None = None,
    subdivisions: int = 4,
    min_spacing: float = DEFAULT_MIN_SPACING,
    max_cuts: int | None = DEFAULT_MAX_CUTS,
    radius: float | None = None,
    one_period: Rotation | None = None,
    periods: int = 1,
    refine_tol: float | None = 1e-6,
    max_refine: int = 6,
) -> TrajectoidSolid:
    """Shell ball clipped by the tangent half space at every trace point.

    ``trace`` may be an explicit list of planes.  For a trace spanning
    ``periods`` periods, pass the one-period holonomy as ``one_period`` to
    decimate the first period once and copy it, keeping the cut set closed
    under the holonomy.

    Decimation can drop a sharp corner of the trace and leave the support
    there above ``r``.  With ``refine_tol`` set, every trace direction whose
    support exceeds ``r * (1 + refine_tol)`` is added as a cut (with its
    holonomy copies) and clipped, for up to ``max_refine`` rounds.
    """
    k_period = None
    if isinstance(trace, SphereTrace):
        r = trace.radius
        if one_period is not None:
            if periods < 1 or (len(trace.points) - 1) % periods:
                raise ValueError("trace length does not split into the given periods")
            k_period = (len(trace.points) - 1) // periods + 1
        planes = cut_planes(trace, min_spacing, max_cuts, k_period, one_period, periods)
    else:
        planes = list(trace)
        if radius is None:
            radius = planes[0].offset
        r = radius
    if r_shell is None:
        r_shell = DEFAULT_SHELL_RATIO * r
    if not r_shell > r:
        raise ValueError("r_shell must exceed the ball radius")
    v, f = build_shell(r_shell, subdivisions)
    poly = ConvexPolyhedron(v, f)
    for i, pl in enumerate(planes):
        poly.clip(pl.normal, pl.offset, i)

    if isinstance(trace, SphereTrace) and refine_tol is not None:
        normals = np.array([p.normal for p in planes])
        for _ in range(max_refine):
            live = poly.vertices[poly._alive[: poly.n_verts]]
            bad = np.flatnonzero(_max_dot(live, trace.points) > r * (1.0 + refine_tol))
            if not len(bad):
                break
            if k_period is not None:
                bad = np.unique(bad % (k_period - 1))
                step = one_period.inverse()
                rot = Rotation.identity()
                base = trace.points[bad]
                extra = [base]
                for _ in range(1, periods):
                    rot = step @ rot
                    extra.append(rot.apply(base))
                extra = np.vstack(extra)
            else:
                extra = trace.points[bad]
            extra = extra / np.linalg.norm(extra, axis=1)[:, None]
            fresh = _dedupe_normals(np.vstack([normals, extra]))[len(normals) :]
            if not len(fresh):
                break
            for u in fresh:
                planes.append(CutPlane(u.copy(), r))
                poly.clip(u, r, len(planes) - 1)
            normals = np.vstack([normals, fresh])

    verts, polys, labels = poly.compact()
    tv, tf, owner = _triangulate(verts, polys)
    return TrajectoidSolid(tv, tf, planes, r, r_shell, polys, labels, owner)


def support_height(solid: TrajectoidSolid, direction) -> np.ndarray:
    """Height of the centre above the plane when resting on ``-direction``.

    Accepts one direction or an ``(K, 3)`` array.
    """
    d = np.asarray(direction, dtype=float)
    if d.ndim == 1:
        return float(np.max(solid.vertices @ d))
    return _max_dot(solid.vertices, d)


# --- mesh checks ------------------------------------------------------------


def mesh_volume(vertices, faces) -> float:
    v = vertices[faces]
    return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)


def mesh_area(vertices, faces) -> float:
    v = vertices[faces]
    return float(0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1).sum())


def check_mesh(vertices, faces) -> dict:
    """Topological checks on a triangle mesh.

    ``watertight``: every undirected edge has exactly two faces.
    ``manifold``: every directed edge appears once with its reverse present,
    and each vertex has a single fan of faces.
    """
    faces = np.asarray(faces)
    directed = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    und = np.sort(directed, axis=1)
    _, counts = np.unique(und, axis=0, return_counts=True)
    watertight = bool(np.all(counts == 2))
    d_uniq, d_counts = np.unique(directed, axis=0, return_counts=True)
    consistent = bool(np.all(d_counts == 1)) and watertight
    manifold = consistent and _single_fans(faces)
    n_v = len(np.unique(faces))
    euler = n_v - len(np.unique(und, axis=0)) + len(faces)
    return {
        "watertight": watertight,
        "oriented": consistent,
        "manifold": manifold,
        "euler": int(euler),
        "volume": mesh_volume(vertices, faces),
    }


def _single_fans(faces) -> bool:
    # around each vertex, following "next edge" must visit all incident faces
    nxt: dict[tuple[int, int], int] = {}
    for a, b, c in faces.tolist():
        for p, q, r in ((a, b, c), (b, c, a), (c, a, b)):
            nxt[(p, q)] = r
    by_vertex: dict[int, list[tuple[int, int]]] = {}
    for p, q in nxt:
        by_vertex.setdefault(p, []).append(q)
    for v, outs in by_vertex.items():
        q0 = outs[0]
        q = q0
        seen = 0
        while True:
            r = nxt.get((v, q))
            if r is None:
                return False
            seen += 1
            q = r
            if q == q0 or seen > len(outs):
                break
        if seen != len(outs):
            return False
    return True


# --- export ------------------------------------------------------------------

_STL_DTYPE = np.dtype(
    [("normal", "<f4", (3,)), ("v0", "<f4", (3,)), ("v1", "<f4", (3,)), ("v2", "<f4", (3,)), ("attr", "<u2")]
)


def export_stl(solid: TrajectoidSolid, header: bytes = b"trajectoid") -> bytes:
    """Binary little-endian STL."""
    tri = solid.vertices[solid.faces]
    rec = np.zeros(len(tri), dtype=_STL_DTYPE)
    rec["normal"] = solid.face_normals
    rec["v0"], rec["v1"], rec["v2"] = tri[:, 0], tri[:, 1], tri[:, 2]
    head = header[:80].ljust(80, b"\0")
    return head + struct.pack("<I", len(tri)) + rec.tobytes()


def read_stl(data: bytes):
    """Parse binary STL into ``(vertices, faces, normals)`` with merged vertices."""
    (count,) = struct.unpack_from("<I", data, 80)
    if len(data) != 84 + 50 * count:
        raise ValueError("truncated or oversized STL payload")
    rec = np.frombuffer(data, dtype=_STL_DTYPE, count=count, offset=84)
    corners = np.stack([rec["v0"], rec["v1"], rec["v2"]], axis=1).reshape(-1, 3)
    verts, inv = np.unique(corners, axis=0, return_inverse=True)
    return verts.astype(float), inv.reshape(-1, 3), rec["normal"].astype(float)


def export_obj(solid: TrajectoidSolid) -> str:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in solid.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in solid.faces]
    return "\n".join(lines) + "\n"


def sidecar(solid: TrajectoidSolid, **extra) -> dict:
    """Metadata for the JSON file written next to the mesh."""
    meta = {
        "r": solid.radius,
        "r_shell": solid.shell_radius,
        "cut_count": len(solid.planes),
        "triangles": int(len(solid.faces)),
        "cavity_radius": solid.cavity_radius,
    }
    meta.update(extra)
    return meta


# --- cavity -------------------------------------------------------------------


def _solid_planes(solid: TrajectoidSolid):
    """Half spaces ``n . x <= h`` bounding the carved body."""
    v = solid.vertices
    normals, offsets = [], []
    for poly in solid.polygons:
        p = v[poly]
        # Newell's method is robust for slivers
        n = np.zeros(3)
        for i in range(len(p)):
            a, b = p[i], p[(i + 1) % len(p)]
            n += np.array([(a[1] - b[1]) * (a[2] + b[2]), (a[2] - b[2]) * (a[0] + b[0]), (a[0] - b[0]) * (a[1] + b[1])])
        nn = np.linalg.norm(n)
        if nn == 0:
            continue
        n /= nn
        normals.append(n)
        offsets.append(float(np.max(p @ n)))
    return np.array(normals), np.array(offsets)


def _ray_exit(normals, offsets, origins, dirs):
    """Distance along ``dirs`` from ``origins`` to the boundary of the body."""
    out = np.empty(len(dirs))
    step = max(1, (1 << 22) // max(1, len(normals)))
    for i in range(0, len(dirs), step):
        nd = dirs[i : i + step] @ normals.T
        room = offsets[None, :] - origins[i : i + step] @ normals.T
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(nd > 1e-15, room / nd, np.inf)
        out[i : i + step] = t.min(axis=1)
    return out


def _frame(axis):
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(a, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(a, e1), a


def core_cavity(
    solid: TrajectoidSolid,
    r_ball: float | None,
    bore_radius: float | None = None,
    axis=None,
    rings: int = 96,
    sectors: int = 192,
    min_wall: float | None = None,
) -> TrajectoidSolid:
    """Hollow out a spherical cavity with a cylindrical access bore.

    The outer surface is resampled on a grid of rays from the centre, exact
    against the carved planes at every grid vertex.  The bore runs from the
    cavity along ``axis`` (default: the direction of greatest support) and
    exits through the outer surface.  ``r_ball=None`` returns ``solid``.
    """
    if not r_ball:
        return solid
    r = solid.radius
    if r_ball > r * (1 + 1e-12):
        raise ValueError("cavity radius must not exceed the ball radius")
    if bore_radius is None:
        bore_radius = 0.35 * r_ball
    if not 0 < bore_radius < r_ball:
        raise ValueError("bore radius must lie in (0, r_ball)")
    if min_wall is None:
        min_wall = 0.02 * r
    normals, offsets = _solid_planes(solid)
    if axis is None:
        k = np.argmax(np.linalg.norm(solid.vertices, axis=1))
        axis = solid.vertices[k]
    e1, e2, a = _frame(axis)

    phi = 2 * np.pi * np.arange(sectors) / sectors
    rim_dir = np.outer(np.cos(phi), e1) + np.outer(np.sin(phi), e2)
    # bore rim on the outer surface: walk up the cylinder wall
    rim_base = bore_radius * rim_dir
    z_out = _ray_exit(normals, offsets, rim_base, np.broadcast_to(a, rim_base.shape))
    z_in = math.sqrt(r_ball**2 - bore_radius**2)
    if np.any(z_out - z_in < min_wall):
        raise CavityError(
            f"bore exits through a wall thinner than {min_wall:.3g} (min {float(np.min(z_out - z_in)):.3g})"
        )
    outer_rim = rim_base + z_out[:, None] * a
    alpha_out = np.arctan2(bore_radius, z_out)
    alpha_in = math.asin(bore_radius / r_ball)

    t = np.linspace(0.0, 1.0, rings + 1)

    def ring_dirs(alpha0):
        # polar angle from alpha0 (per sector) down to pi, excluding the pole
        th = alpha0[None, :] + np.outer(t[:-1], np.pi - alpha0)
        return (
            np.sin(th)[..., None] * rim_dir[None, :, :] + np.cos(th)[..., None] * a[None, None, :]
        )

    d_out = ring_dirs(alpha_out)
    rho = _ray_exit(normals, offsets, np.zeros((d_out.size // 3, 3)), d_out.reshape(-1, 3)).reshape(d_out.shape[:2])
    outer = rho[..., None] * d_out
    outer[0] = outer_rim
    d_in = ring_dirs(np.full(sectors, alpha_in))
    inner = r_ball * d_in
    south_out = _ray_exit(normals, offsets, np.zeros((1, 3)), -a[None, :])[0] * -a
    south_in = -r_ball * a

    wall_steps = max(2, int(np.ceil(float(np.max(z_out - z_in)) / (np.pi * r_ball / rings))))
    s = np.linspace(0.0, 1.0, wall_steps + 1)[1:-1]
    inner_rim = rim_base + z_in * a
    wall = outer_rim[None] + s[:, None, None] * (inner_rim - outer_rim)[None]

    # assemble: south_out, outer rings (pole -> rim), wall, inner rings (rim -> pole), south_in
    rings_list = list(outer[::-1]) + list(wall) + list(inner)
    grid = np.array(rings_list)
    nr = len(grid)
    verts = np.vstack([south_out[None], grid.reshape(-1, 3), south_in[None]])
    tris = []
    ring0 = 1
    last = 1 + (nr - 1) * sectors
    south_in_i = len(verts) - 1
    j = np.arange(sectors)
    jn = (j + 1) % sectors
    # outer south cap: seen from outside (-a side) counterclockwise
    tris.append(np.column_stack([np.zeros(sectors, int), ring0 + jn, ring0 + j]))
    for i in range(nr - 1):
        r0 = 1 + i * sectors
        r1 = r0 + sectors
        tris.append(np.column_stack([r0 + j, r0 + jn, r1 + jn]))
        tris.append(np.column_stack([r0 + j, r1 + jn, r1 + j]))
    tris.append(np.column_stack([np.full(sectors, south_in_i), last + j, last + jn]))
    faces = np.vstack(tris)
    if mesh_volume(verts, faces) < 0:
        faces = faces[:, ::-1]
    return TrajectoidSolid(
        verts,
        faces,
        solid.planes,
        solid.radius,
        solid.shell_radius,
        cavity_radius=float(r_ball),
        bore_axis=a,
        cavity_face_start=sectors * (1 + 2 * (rings - 1)),
        bore_rim=1 + (rings - 1) * sectors + j,
    )


def cavity_volume(solid: TrajectoidSolid) -> float:
    """Volume of the hollow (sphere plus bore) by the divergence theorem.

    The hollow is bounded by the inward faces and the bore mouth, which is
    closed here with a fan about its centroid.
    """
    if solid.cavity_face_start is None:
        return 0.0
    cav = solid.faces[solid.cavity_face_start :]
    rim = solid.bore_rim
    v = solid.vertices
    c = v[rim].mean(axis=0)
    a, b = rim, np.roll(rim, -1)
    directed = set(map(tuple, np.concatenate([cav[:, [0, 1]], cav[:, [1, 2]], cav[:, [2, 0]]]).tolist()))
    if (int(a[0]), int(b[0])) in directed:
        a, b = b, a
    fan = np.einsum("ij,ij->i", np.broadcast_to(c, (len(a), 3)), np.cross(v[a], v[b])).sum() / 6.0
    return abs(mesh_volume(v, cav) + fan)
