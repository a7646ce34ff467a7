import struct

import numpy as np
import pytest

import shapegen as sg
from millreach import (
    DegenerateBBox,
    EmptyMesh,
    ParseError,
    SurfaceSamples,
    TriangleMesh,
    export_colored_mesh,
    load_mesh,
    normalize_scale,
    save_ply,
    validate,
)

CUBE_OBJ = """\
# unit cube
v 0 0 0
v 1 0 0
v 0 1 0
v 1 1 0
v 0 0 1
v 1 0 1
v 0 1 1
v 1 1 1
f 1 3 2
f 2 3 4
f 5 6 7
f 6 8 7
f 1 2 5
f 2 6 5
f 3 7 4
f 4 7 8
f 1 5 3
f 3 5 7
f 2 4 6
f 4 8 6
"""


def write_cube_obj(path):
    path.write_text(CUBE_OBJ)
    return str(path)


def write_stl_binary(path, mesh: TriangleMesh):
    corners = mesh.triangle_corners().astype("<f4")
    with open(path, "wb") as fh:
        fh.write(b"\0" * 80)
        fh.write(struct.pack("<I", mesh.triangle_count))
        for i in range(mesh.triangle_count):
            fh.write(struct.pack("<3f", *mesh.normals[i].astype(np.float32)))
            fh.write(corners[i].tobytes())
            fh.write(struct.pack("<H", 0))
    return str(path)


def test_load_cube_obj(tmp_path):
    mesh = load_mesh(write_cube_obj(tmp_path / "cube.obj"))
    assert mesh.vertex_count == 8
    assert mesh.triangle_count == 12
    assert np.allclose(np.linalg.norm(mesh.normals, axis=1), 1.0, atol=1e-9)


def test_load_stl_dedups_to_8_vertices(tmp_path):
    cube = load_mesh(write_cube_obj(tmp_path / "cube.obj"))
    mesh = load_mesh(write_stl_binary(tmp_path / "cube.stl", cube))
    assert mesh.vertex_count == 8
    assert mesh.triangle_count == 12


def test_load_stl_ascii(tmp_path):
    cube = load_mesh(write_cube_obj(tmp_path / "cube.obj"))
    lines = ["solid cube"]
    for tri, n in zip(cube.triangle_corners(), cube.normals):
        lines.append(f"facet normal {n[0]} {n[1]} {n[2]}")
        lines.append("outer loop")
        for v in tri:
            lines.append(f"vertex {v[0]} {v[1]} {v[2]}")
        lines.append("endloop")
        lines.append("endfacet")
    lines.append("endsolid cube")
    p = tmp_path / "cube_ascii.stl"
    p.write_text("\n".join(lines))
    mesh = load_mesh(str(p))
    assert mesh.vertex_count == 8
    assert mesh.triangle_count == 12


def test_truncated_file_is_parse_error(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0\nf 1 2")
    with pytest.raises(ParseError):
        load_mesh(str(p))
    q = tmp_path / "bad.stl"
    q.write_bytes(b"\0" * 90)  # claims triangles it does not have
    with pytest.raises(ParseError):
        load_mesh(str(q))
    r = tmp_path / "bad.ply"
    r.write_bytes(b"ply\nformat binary_little_endian 1.0\n"
                  b"element vertex 100\nproperty double x\nproperty double y\n"
                  b"property double z\nelement face 1\n"
                  b"property list uchar int vertex_indices\nend_header\n\x00\x01")
    with pytest.raises(ParseError):
        load_mesh(str(r))


def test_empty_mesh_error(tmp_path):
    p = tmp_path / "points_only.obj"
    p.write_text("v 0 0 0\nv 1 0 0\n")
    with pytest.raises(EmptyMesh):
        load_mesh(str(p))


def test_obj_quad_fan_triangulation(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    mesh = load_mesh(str(p))
    assert mesh.triangle_count == 2


def test_degenerate_triangles_dropped(tmp_path):
    p = tmp_path / "degen.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\nf 1 2 3\nf 1 2 4\n")  # second is collinear
    mesh = load_mesh(str(p))
    assert mesh.triangle_count == 1


def test_validate_cube_clean():
    report = validate(sg.cube(10))
    assert report.is_manifold
    assert report.is_watertight
    assert report.component_count == 1
    assert report.bbox_min_edge == pytest.approx(10.0)


def test_validate_open_cube():
    cube = sg.cube(10)
    open_mesh = TriangleMesh.create(cube.vertices, cube.triangles[:-2])  # drop one face
    report = validate(open_mesh)
    assert not report.is_watertight
    assert not report.is_manifold


def test_validate_two_components():
    a = sg.cube(10)
    shifted = a.vertices + np.array([30.0, 0, 0])
    verts = np.vstack([a.vertices, shifted])
    tris = np.vstack([a.triangles, a.triangles + a.vertex_count])
    report = validate(TriangleMesh.create(verts, tris))
    assert report.component_count == 2
    assert report.is_watertight


def test_validate_inconsistent_orientation():
    cube = sg.cube(10)
    tris = cube.triangles.copy()
    tris[0] = tris[0][::-1]  # flip one face
    report = validate(TriangleMesh.create(cube.vertices, tris))
    assert report.is_watertight  # every edge still has two faces
    assert not report.is_manifold


def test_normalize_scale_up():
    mesh = sg.box(40, 80, 120)
    scaled = normalize_scale(mesh, 80.0)
    vmin, vmax = scaled.bbox()
    assert np.allclose(vmax - vmin, [80, 160, 240])
    # scaling is about the bbox center
    assert np.allclose((vmin + vmax) / 2, np.array([20.0, 40.0, 60.0]))


def test_normalize_scale_noop_and_idempotent():
    mesh = sg.box(100, 100, 100)
    assert normalize_scale(mesh, 80.0) is mesh
    mesh2 = sg.box(37.3, 90, 90)
    once = normalize_scale(mesh2, 80.0)
    twice = normalize_scale(once, 80.0)
    assert np.array_equal(once.vertices, twice.vertices)


def test_normalize_scale_degenerate():
    flat = sg.open_plate(50, 50, z=3.0)
    with pytest.raises(DegenerateBBox):
        normalize_scale(flat, 80.0)


def test_ply_roundtrip_bit_exact(tmp_path):
    mesh = sg.uv_sphere(13.7, rings=6, segments=8)
    path = tmp_path / "sphere.ply"
    save_ply(mesh, str(path))
    back = load_mesh(str(path))
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)


def test_ply_ascii_roundtrip(tmp_path):
    mesh = sg.cube(10)
    path = tmp_path / "cube_ascii.ply"
    save_ply(mesh, str(path), binary=False)
    back = load_mesh(str(path))
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)


class _FakeReport:
    def __init__(self, inaccessible, occlusion):
        self.inaccessible = np.asarray(inaccessible, bool)
        self.occlusion = np.asarray(occlusion, bool)


def _plate_samples(mesh, site_xy):
    sites = np.array([[x, y, 0.0] for x, y in site_xy])
    proj_tri = np.full(len(sites), -1, dtype=np.int64)
    return SurfaceSamples(sites=sites, normals=np.tile([0.0, 0.0, 1.0], (len(sites), 1)),
                          site_triangle=proj_tri, mesh_hash="")


def _read_face_colors(path, n_faces):
    data = open(path, "rb").read()
    body = data[data.find(b"end_header\n") + len(b"end_header\n"):]
    n_verts = int([ln for ln in data.split(b"\n") if ln.startswith(b"element vertex")][0].split()[2])
    off = n_verts * 24
    face_dt = np.dtype([("k", "u1"), ("idx", "<i4", 3), ("rgb", "u1", 3)])
    faces = np.frombuffer(body, face_dt, n_faces, off)
    return faces["rgb"]


def test_export_colored_mesh_rules(tmp_path):
    # 2x2-division plate: 8 triangles; two sites split it left/right
    mesh = sg.open_plate(20, 20, divisions=2)
    samples = _plate_samples(mesh, [(1.0, 10.0), (19.0, 10.0)])
    n = mesh.triangle_count

    # no labels anywhere: all gray
    report = _FakeReport([False, False], [False, False])
    p = tmp_path / "gray.ply"
    export_colored_mesh(mesh, samples, report, str(p))
    assert (_read_face_colors(p, n) == (200, 200, 200)).all()

    # left site inaccessible, right site occlusion
    report = _FakeReport([True, False], [False, True])
    p = tmp_path / "split.ply"
    export_colored_mesh(mesh, samples, report, str(p))
    colors = _read_face_colors(p, n)
    centroids = mesh.triangle_centroids()
    left = centroids[:, 0] < 10.0
    assert (colors[left] == (255, 0, 0)).all()
    assert (colors[~left] == (0, 255, 0)).all()

    # both labels on one site: yellow
    report = _FakeReport([True, False], [True, False])
    p = tmp_path / "both.ply"
    export_colored_mesh(mesh, samples, report, str(p))
    colors = _read_face_colors(p, n)
    assert (colors[left] == (255, 255, 0)).all()


def test_colored_ply_reloads(tmp_path):
    # per-face color properties must not confuse the PLY reader
    mesh = sg.cube(10)
    samples = _plate_samples(mesh, [(5.0, 5.0)])
    report = _FakeReport([True], [True])
    p = tmp_path / "colored.ply"
    export_colored_mesh(mesh, samples, report, str(p))
    back = load_mesh(str(p))
    assert back.triangle_count == mesh.triangle_count
    assert np.array_equal(back.vertices, mesh.vertices)


def test_single_site_owns_all_triangles(tmp_path):
    # one inaccessible site and a 4-triangle sheet: every triangle red
    mesh = sg.open_plate(10, 10, divisions=1)  # 2 triangles
    extra = sg.open_plate(10, 10, divisions=1)
    verts = np.vstack([mesh.vertices, extra.vertices + [20, 0, 0]])
    tris = np.vstack([mesh.triangles, extra.triangles + mesh.vertex_count])
    sheet = TriangleMesh.create(verts, tris)
    samples = _plate_samples(sheet, [(5.0, 5.0)])
    report = _FakeReport([True], [False])
    p = tmp_path / "allred.ply"
    export_colored_mesh(sheet, samples, report, str(p))
    assert (_read_face_colors(p, 4) == (255, 0, 0)).all()
