import io
import math

import numpy as np
import pytest
import trimesh
from hypothesis import given, settings
from hypothesis import strategies as st

from trajectoid.mesh_forge import (
    CavityError,
    CutPlane,
    ConvexPolyhedron,
    build_shell,
    carve,
    cavity_volume,
    check_mesh,
    core_cavity,
    cut_planes,
    export_obj,
    export_stl,
    mesh_volume,
    read_stl,
    sidecar,
    support_height,
    trajectoid_trace,
)
from trajectoid.path_model import PlanarPath, gen_fourier_random
from trajectoid.rolling_map import sphere_trace
from trajectoid.roll_verify import fibonacci_sphere
from trajectoid.solver import solve_n


def ball_cap(R, h):
    return math.pi * h * h * (3 * R - h) / 3


@pytest.fixture(scope="module")
def carved():
    p = gen_fourier_random(0)
    sol = solve_n(p, 2)[0]
    tr, H = trajectoid_trace(p, sol.radius, 2)
    solid = carve(tr, 1.4 * sol.radius, 4, one_period=H, periods=2)
    return p, sol, tr, H, solid


@pytest.mark.parametrize("k", [1, 2, 3])
def test_icosphere_counts(k):
    v, f = build_shell(2.0, k)
    assert len(f) == 20 * 4**k
    assert len(v) - 30 * 4**k + len(f) == 2
    assert np.allclose(np.linalg.norm(v, axis=1), 2.0)


def test_shell_subdivision_range():
    with pytest.raises(ValueError):
        build_shell(1.0, 0)
    with pytest.raises(ValueError):
        build_shell(1.0, 9)


def test_slab_from_two_flats():
    R, r = 1.5, 1.0
    planes = [CutPlane(np.array([1.0, 0, 0]), r), CutPlane(np.array([-1.0, 0, 0]), r)]
    s = carve(planes, R, 6)
    assert support_height(s, [1.0, 0, 0]) == pytest.approx(r, abs=1e-12)
    assert support_height(s, [-1.0, 0, 0]) == pytest.approx(r, abs=1e-12)
    assert support_height(s, [0, 1.0, 0]) == pytest.approx(R, rel=1e-3)
    exact = 4 / 3 * math.pi * R**3 - 2 * ball_cap(R, R - r)
    shell = mesh_volume(*build_shell(R, 6))
    # scale by the icosphere deficit so the check isolates the cuts
    assert s.volume() == pytest.approx(exact * shell / (4 / 3 * math.pi * R**3), rel=2e-3)


def test_great_circle_band_is_a_cylinder():
    R, r = 1.4, 1.0
    straight = PlanarPath(np.array([[0.0, 0.0], [2 * math.pi * r, 0.0]]))
    tr = sphere_trace(straight, r, max_step=0.01)
    s = carve(tr, R, 6, max_cuts=None, min_spacing=0.01)
    a = math.sqrt(R * R - r * r)
    exact = 2 * math.pi * r * r * a + 2 * math.pi * (R * R * (R - a) - (R**3 - a**3) / 3)
    assert s.volume() == pytest.approx(exact, rel=5e-3)
    # the axis of the band is the rolling axis, left uncut
    assert support_height(s, [0, 1.0, 0]) == pytest.approx(R, rel=1e-3)
    assert np.allclose(support_height(s, tr.points), r, atol=1e-12)


def test_mesh_is_closed_manifold(carved):
    *_, s = carved
    rep = check_mesh(s.vertices, s.faces)
    assert rep["watertight"] and rep["oriented"] and rep["manifold"]
    assert rep["euler"] == 2
    assert rep["volume"] > 0


def test_trimesh_agrees(carved):
    *_, s = carved
    m = trimesh.Trimesh(s.vertices, s.faces, process=False)
    assert m.is_watertight and m.is_winding_consistent and m.is_volume
    assert m.volume == pytest.approx(s.volume(), rel=1e-12)
    assert abs(m.convex_hull.volume - m.volume) <= 1e-9 * m.volume


def test_vertices_inside_every_cut(carved):
    *_, s = carved
    normals = np.array([p.normal for p in s.planes])
    offsets = np.array([p.offset for p in s.planes])
    assert np.max(s.vertices @ normals.T - offsets) <= 1e-9 * s.radius
    assert np.max(np.linalg.norm(s.vertices, axis=1)) <= s.shell_radius * (1 + 1e-12)


def test_contains_inner_ball(carved):
    *_, s = carved
    n = s.face_normals
    d = np.einsum("ij,ij->i", n, s.vertices[s.faces[:, 0]])
    assert np.min(d) >= s.radius * (1 - 1e-9)
    assert np.min(support_height(s, fibonacci_sphere(4000))) >= s.radius * (1 - 1e-12)


def test_support_on_trace(carved):
    _, sol, tr, _, s = carved
    dev = np.abs(support_height(s, tr.points) - sol.radius)
    assert np.max(dev) <= 1e-5 * sol.radius


def test_facets_are_planar(carved):
    *_, s = carved
    for poly, lab in zip(s.polygons, s.polygon_labels):
        if lab < 0:
            continue
        pl = s.planes[lab]
        assert np.max(np.abs(s.vertices[poly] @ pl.normal - pl.offset)) <= 1e-9 * s.radius


def test_cut_set_closed_under_holonomy(carved):
    *_, H, s = carved
    normals = np.array([p.normal for p in s.planes])
    # the n = 2 holonomy maps the cut set onto itself
    image = H.apply(normals)
    best = np.max(image @ normals.T, axis=1)
    assert np.min(best) >= 1 - 1e-9


def test_cut_budget(carved):
    p, sol, *_ = carved
    tr, H = trajectoid_trace(p, sol.radius, 2)
    planes = cut_planes(tr, 1e-3, 2000, (len(tr.points) - 1) // 2 + 1, H, 2)
    assert len(planes) <= 2000
    normals = np.array([q.normal for q in planes])
    g = normals @ normals.T
    np.fill_diagonal(g, -1)
    assert np.max(g) < 1 - 1e-10


def test_more_cuts_less_volume(carved):
    _, sol, tr, *_ = carved
    normals = tr.points
    r = sol.radius
    vols = []
    for k in (50, 200, 800):
        idx = np.linspace(0, len(normals) - 1, k).astype(int)
        planes = [CutPlane(u, r) for u in normals[np.unique(idx)]]
        vols.append(carve(planes, 1.4 * r, 3).volume())
    assert vols[0] > vols[1] > vols[2]


def test_large_shell_leaves_only_cut_faces(carved):
    p, sol, *_ = carved
    tr, H = trajectoid_trace(p, sol.radius, 2)
    s = carve(tr, 10 * sol.radius, 3, one_period=H, periods=2)
    assert not np.any(s.polygon_labels < 0)
    assert np.max(np.linalg.norm(s.vertices, axis=1)) < 10 * sol.radius


def test_shell_must_exceed_ball():
    with pytest.raises(ValueError):
        carve([CutPlane(np.array([1.0, 0, 0]), 1.0)], 1.0, 2)


@settings(max_examples=15)
@given(st.integers(0, 2**31 - 1))
def test_random_cuts_stay_convex_and_closed(seed):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((60, 3))
    u /= np.linalg.norm(u, axis=1)[:, None]
    s = carve([CutPlane(x, 1.0) for x in u], 1.6, 2)
    rep = check_mesh(s.vertices, s.faces)
    assert rep["watertight"] and rep["manifold"] and rep["euler"] == 2
    assert np.max(s.vertices @ u.T - 1.0) <= 1e-9


def test_clip_reports_change():
    v, f = build_shell(1.0, 1)
    poly = ConvexPolyhedron(v, f)
    assert not poly.clip(np.array([0, 0, 1.0]), 2.0, 0)
    assert poly.clip(np.array([0, 0, 1.0]), 0.5, 0)


def test_stl_round_trip(carved):
    *_, s = carved
    data = export_stl(s)
    assert len(data) == 84 + 50 * len(s.faces)
    v, f, n = read_stl(data)
    assert len(f) == len(s.faces)
    assert mesh_volume(v, f) == pytest.approx(s.volume(), rel=1e-5)
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-6)
    m = trimesh.load(io.BytesIO(data), file_type="stl")
    assert m.is_watertight and m.is_volume


def test_stl_rejects_truncated(carved):
    *_, s = carved
    with pytest.raises(ValueError):
        read_stl(export_stl(s)[:-10])


def test_obj_and_sidecar(carved):
    *_, s = carved
    text = export_obj(s)
    assert text.count("\nf ") + text.startswith("f ") == len(s.faces)
    meta = sidecar(s, n=2)
    assert meta["cut_count"] == len(s.planes) and meta["n"] == 2


@pytest.mark.parametrize("frac", [0.5, 0.8, 1.0])
def test_cavity_volume_and_topology(carved, frac):
    *_, s = carved
    rb = frac * s.radius
    c = core_cavity(s, rb)
    rep = check_mesh(c.vertices, c.faces)
    assert rep["watertight"] and rep["manifold"] and rep["euler"] == 2
    bore = 0.35 * rb
    z_in = math.sqrt(rb * rb - bore * bore)
    # sphere plus the bore from the sphere surface out to the rim (numeric quadrature)
    z_rim = np.max(c.vertices[c.bore_rim] @ c.bore_axis)
    zs = np.linspace(z_in, rb, 20001)
    lens_gap = np.trapezoid(np.pi * (bore**2 - (rb**2 - zs**2)).clip(0), zs)
    hollow = 4 / 3 * math.pi * rb**3 + lens_gap + math.pi * bore**2 * max(0.0, z_rim - rb)
    assert cavity_volume(c) == pytest.approx(hollow, rel=0.01)
    assert c.volume() == pytest.approx(s.volume() - cavity_volume(c), rel=0.01)


def test_full_cavity_touches_only_from_inside(carved):
    *_, s = carved
    c = core_cavity(s, s.radius)
    outer = c.vertices[c.faces[: c.cavity_face_start]].reshape(-1, 3)
    assert np.min(np.linalg.norm(outer, axis=1)) >= s.radius * (1 - 1e-9)
    assert np.max(np.linalg.norm(c.vertices, axis=1)) <= s.shell_radius * (1 + 1e-9)


def test_cavity_rejects_thin_wall(carved):
    *_, s = carved
    with pytest.raises(CavityError):
        core_cavity(s, s.radius, bore_radius=0.1 * s.radius, axis=s.planes[0].normal)


def test_cavity_argument_checks(carved):
    *_, s = carved
    assert core_cavity(s, None) is s
    with pytest.raises(ValueError):
        core_cavity(s, 1.1 * s.radius)
    with pytest.raises(ValueError):
        core_cavity(s, 0.5 * s.radius, bore_radius=0.6 * s.radius)


@pytest.mark.parametrize("k", [1, 3, 5])
def test_shell_area_approaches_sphere(k):
    from trajectoid.mesh_forge import mesh_area

    v, f = build_shell(1.0, k)
    ratio = mesh_area(v, f) / (4 * math.pi)
    assert ratio < 1
    assert 1 - ratio < {1: 0.1, 3: 0.01, 5: 1e-3}[k]


def test_great_circle_support_in_plane():
    r = 1.0
    straight = PlanarPath(np.array([[0.0, 0.0], [2 * math.pi * r, 0.0]]))
    tr = sphere_trace(straight, r, max_step=0.002)
    s = carve(tr, 1.4, 3, max_cuts=None, min_spacing=0.002)
    ang = np.linspace(0, 2 * math.pi, 5000)
    band = np.column_stack([np.cos(ang), np.zeros_like(ang), np.sin(ang)])
    assert np.max(np.abs(support_height(s, band) - r)) <= 1e-6 * r


def test_two_flats_support_profile():
    R, r = 1.5, 1.0
    planes = [CutPlane(np.array([1.0, 0, 0]), r), CutPlane(np.array([-1.0, 0, 0]), r)]
    s = carve(planes, R, 5)
    ang = np.linspace(0, math.pi, 181)
    dirs = np.column_stack([np.cos(ang), np.sin(ang), np.zeros_like(ang)])
    h = support_height(s, dirs)
    assert h[0] == pytest.approx(r, abs=1e-12) and h[-1] == pytest.approx(r, abs=1e-12)
    assert np.all(h[1:-1] > r)
    # between the flats the support follows R cos(a - a0) up to the rim, then the shell
    assert np.max(h) == pytest.approx(R, rel=2e-3)


def test_uncut_direction_reaches_shell(carved):
    *_, s = carved
    normals = np.array([p.normal for p in s.planes])
    dirs = fibonacci_sphere(3000)
    far = dirs[np.max(dirs @ normals.T, axis=1) < math.cos(0.8)]
    if len(far):
        assert np.allclose(support_height(s, far), s.shell_radius, rtol=5e-3)


def test_stl_of_plain_shell_size():
    s = carve([], 1.0, 1, radius=0.5)
    data = export_stl(s)
    assert len(s.faces) == 80
    assert len(data) == 84 + 80 * 50
    v, f, _ = read_stl(data)
    assert np.max(np.abs(np.sort(v, axis=0) - np.sort(s.vertices.astype(np.float32), axis=0))) == 0.0
