"""Triangle mesh type, file IO (OBJ/STL/PLY), validation, and rescaling.

Meshes are immutable after construction. Vertex dedup is by exact coordinate
equality and normals are always recomputed from winding order; normals stored
in files are ignored.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBBox, EmptyMesh, ParseError

logger = logging.getLogger(__name__)

MIN_TRIANGLE_AREA = 1e-12  # mm^2; triangles below this are dropped on build

COLOR_NEITHER = (200, 200, 200)
COLOR_INACCESSIBLE = (255, 0, 0)
COLOR_OCCLUSION = (0, 255, 0)
COLOR_BOTH = (255, 255, 0)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle mesh with derived per-triangle unit normals (mm units)."""

    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int64
    normals: np.ndarray  # (T, 3) float64, derived
    areas: np.ndarray  # (T,) float64, derived

    @classmethod
    def create(cls, vertices, triangles, dedup: bool = False) -> "TriangleMesh":
        """Build a mesh from raw arrays.

        Optionally dedups exactly-equal vertices, then drops degenerate
        triangles (repeated indices or area < 1e-12 mm^2) and derives
        normals from winding order.
        """
        vertices = np.ascontiguousarray(np.asarray(vertices, dtype=np.float64).reshape(-1, 3))
        triangles = np.ascontiguousarray(np.asarray(triangles, dtype=np.int64).reshape(-1, 3))
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise ParseError("triangle index out of range")
        if dedup and len(vertices):
            vertices, triangles = _dedup_vertices(vertices, triangles)
        if len(triangles) == 0:
            raise EmptyMesh("mesh has no triangles")

        repeated = (
            (triangles[:, 0] == triangles[:, 1])
            | (triangles[:, 1] == triangles[:, 2])
            | (triangles[:, 0] == triangles[:, 2])
        )
        cross = _triangle_cross(vertices, triangles)
        area2 = np.linalg.norm(cross, axis=1)  # twice the area
        keep = ~repeated & (0.5 * area2 >= MIN_TRIANGLE_AREA)
        if not keep.all():
            logger.debug("dropping %d degenerate triangles", int((~keep).sum()))
            triangles = triangles[keep]
            cross = cross[keep]
            area2 = area2[keep]
        if len(triangles) == 0:
            raise EmptyMesh("mesh has no non-degenerate triangles")

        normals = cross / area2[:, None]
        for a in (vertices, triangles, normals):
            a.setflags(write=False)
        areas = 0.5 * area2
        areas.setflags(write=False)
        return cls(vertices=vertices, triangles=triangles, normals=normals, areas=areas)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def triangle_centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def triangle_corners(self) -> np.ndarray:
        """(T, 3, 3) corner coordinates, contiguous."""
        return np.ascontiguousarray(self.vertices[self.triangles])

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.vertices.tobytes())
        h.update(self.triangles.tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class ValidationReport:
    is_manifold: bool
    is_watertight: bool
    component_count: int
    bbox_min_edge: float

    @property
    def is_clean(self) -> bool:
        """Usable for dataset generation: manifold, watertight, one component."""
        return self.is_manifold and self.is_watertight and self.component_count == 1


def _triangle_cross(vertices, triangles):
    p = vertices[triangles]
    return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])


def _dedup_vertices(vertices, triangles):
    # Exact-coordinate dedup preserving first-occurrence order.
    uniq, first, inverse = np.unique(vertices, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty(len(order), dtype=np.int64)
    rank[order] = np.arange(len(order))
    new_vertices = np.ascontiguousarray(uniq[order])
    new_triangles = rank[inverse.reshape(-1)][triangles]
    return new_vertices, np.ascontiguousarray(new_triangles)


# ---------------------------------------------------------------------------
# Loading


def load_mesh(path: str, fmt: str = "auto") -> TriangleMesh:
    """Load an OBJ, STL, or PLY mesh file.

    Vertices are deduplicated by exact coordinate equality and degenerate
    triangles dropped. Raises ParseError for malformed files and EmptyMesh
    when no triangles survive.
    """
    if fmt == "auto":
        lowered = str(path).lower()
        for ext in ("obj", "stl", "ply"):
            if lowered.endswith("." + ext):
                fmt = ext
                break
        else:
            raise ParseError(f"cannot infer mesh format from {path!r}")
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc

    if fmt == "obj":
        vertices, triangles = _parse_obj(data, path)
    elif fmt == "stl":
        vertices, triangles = _parse_stl(data, path)
    elif fmt == "ply":
        vertices, triangles = _parse_ply(data, path)
    else:
        raise ParseError(f"unsupported format {fmt!r}")
    if not triangles:
        raise EmptyMesh(f"{path}: no triangles")
    return TriangleMesh.create(vertices, triangles, dedup=True)


def _fan(indices):
    return [(indices[0], indices[i], indices[i + 1]) for i in range(1, len(indices) - 1)]


def _parse_obj(data: bytes, path):
    vertices, triangles = [], []
    try:
        text = data.decode("utf-8", errors="replace")
    except Exception as exc:  # pragma: no cover - decode with replace cannot fail
        raise ParseError(f"{path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ParseError(f"{path}:{lineno}: vertex needs 3 coordinates")
            try:
                vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad vertex: {raw!r}") from exc
        elif tag == "f":
            if len(parts) < 4:
                raise ParseError(f"{path}:{lineno}: face needs at least 3 vertices")
            idx = []
            for tok in parts[1:]:
                head = tok.split("/")[0]
                try:
                    v = int(head)
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: bad face index {tok!r}") from exc
                idx.append(v - 1 if v > 0 else len(vertices) + v)
            for tri in _fan(idx):
                triangles.append(tri)
        # all other records (vn, vt, usemtl, o, g, s, mtllib, ...) are ignored
    return vertices, triangles


def _parse_stl(data: bytes, path):
    # Binary detection by exact size; "solid" prefix alone is unreliable.
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if len(data) == 84 + 50 * count:
            return _parse_stl_binary(data, count)
    if data[:5].lower() == b"solid":
        return _parse_stl_ascii(data, path)
    raise ParseError(f"{path}: not a valid STL file")


def _parse_stl_binary(data: bytes, count: int):
    raw = np.frombuffer(data, dtype=np.uint8, count=50 * count, offset=84)
    rec = raw.reshape(count, 50)[:, 12:48].copy()
    corners = rec.view("<f4").reshape(count, 3, 3).astype(np.float64)
    vertices = corners.reshape(-1, 3)
    triangles = np.arange(3 * count, dtype=np.int64).reshape(count, 3)
    return vertices, triangles.tolist()


def _parse_stl_ascii(data: bytes, path):
    vertices = []
    for lineno, raw in enumerate(data.decode("utf-8", errors="replace").splitlines(), 1):
        parts = raw.split()
        if len(parts) == 4 and parts[0].lower() == "vertex":
            try:
                vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad vertex: {raw!r}") from exc
    if len(vertices) % 3 != 0:
        raise ParseError(f"{path}: vertex count {len(vertices)} not a multiple of 3")
    triangles = [(3 * i, 3 * i + 1, 3 * i + 2) for i in range(len(vertices) // 3)]
    return vertices, triangles


_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _parse_ply(data: bytes, path):
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError(f"{path}: missing PLY header")
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[end + len(b"end_header\n"):]

    fmt = None
    elements = []  # (name, count, [properties])
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise ParseError(f"{path}: property before element")
            if parts[1] == "list":
                elements[-1][2].append(("list", parts[2], parts[3], parts[4]))
            else:
                elements[-1][2].append(("scalar", parts[1], parts[2]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise ParseError(f"{path}: unsupported PLY format {fmt!r}")

    vertices, faces = None, []
    try:
        if fmt == "ascii":
            tokens = body.decode("ascii", errors="replace").split()
            pos = 0
            for name, count, props in elements:
                rows = []
                for _ in range(count):
                    row = []
                    for p in props:
                        if p[0] == "list":
                            k = int(tokens[pos]); pos += 1
                            row.append([float(tokens[pos + i]) for i in range(k)])
                            pos += k
                        else:
                            row.append(float(tokens[pos])); pos += 1
                    rows.append(row)
                vertices, faces = _ply_collect(name, props, rows, vertices, faces)
        else:
            off = 0
            for name, count, props in elements:
                rows = []
                for _ in range(count):
                    row = []
                    for p in props:
                        if p[0] == "list":
                            cdt = np.dtype("<" + _PLY_TYPES[p[1]])
                            idt = np.dtype("<" + _PLY_TYPES[p[2]])
                            k = int(np.frombuffer(body, cdt, 1, off)[0]); off += cdt.itemsize
                            row.append(np.frombuffer(body, idt, k, off).tolist()); off += idt.itemsize * k
                        else:
                            sdt = np.dtype("<" + _PLY_TYPES[p[1]])
                            row.append(float(np.frombuffer(body, sdt, 1, off)[0])); off += sdt.itemsize
                    rows.append(row)
                vertices, faces = _ply_collect(name, props, rows, vertices, faces)
    except (IndexError, ValueError, KeyError) as exc:
        raise ParseError(f"{path}: truncated or malformed PLY body") from exc

    if vertices is None:
        raise ParseError(f"{path}: no vertex element")
    triangles = []
    for f in faces:
        triangles.extend(_fan([int(v) for v in f]))
    return vertices, triangles


def _ply_collect(name, props, rows, vertices, faces):
    if name == "vertex":
        names = [p[2] for p in props if p[0] == "scalar"]
        for axis in ("x", "y", "z"):
            if axis not in names:
                raise ParseError(f"vertex element lacks property {axis!r}")
        cols = {n: i for i, n in enumerate(names)}
        scalars = [[r[i] for i, p in enumerate(props) if p[0] == "scalar"] for r in rows]
        vertices = [(row[cols["x"]], row[cols["y"]], row[cols["z"]]) for row in scalars]
    elif name == "face":
        list_pos = [i for i, p in enumerate(props) if p[0] == "list"]
        if not list_pos:
            raise ParseError("face element lacks a list property")
        faces = [r[list_pos[0]] for r in rows]
    return vertices, faces


# ---------------------------------------------------------------------------
# Saving


def save_ply(mesh: TriangleMesh, path: str, face_colors: np.ndarray | None = None,
             binary: bool = True) -> None:
    """Write a PLY file; binary little-endian with float64 vertices by default.

    face_colors, when given, is a (T, 3) uint8 array stored as per-face
    red/green/blue properties.
    """
    v = np.ascontiguousarray(mesh.vertices, dtype="<f8")
    t = np.ascontiguousarray(mesh.triangles, dtype="<i4")
    header = ["ply"]
    header.append("format binary_little_endian 1.0" if binary else "format ascii 1.0")
    header += [
        f"element vertex {len(v)}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {len(t)}",
        "property list uchar int vertex_indices",
    ]
    if face_colors is not None:
        face_colors = np.ascontiguousarray(face_colors, dtype=np.uint8)
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append("end_header")

    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(v.tobytes())
            n = len(t)
            face_dt = [("k", "u1"), ("idx", "<i4", 3)]
            if face_colors is not None:
                face_dt.append(("rgb", "u1", 3))
            block = np.empty(n, dtype=face_dt)
            block["k"] = 3
            block["idx"] = t
            if face_colors is not None:
                block["rgb"] = face_colors
            fh.write(block.tobytes())
        else:
            for row in v:
                fh.write((" ".join(repr(float(c)) for c in row) + "\n").encode("ascii"))
            for i, tri in enumerate(t):
                line = f"3 {tri[0]} {tri[1]} {tri[2]}"
                if face_colors is not None:
                    c = face_colors[i]
                    line += f" {c[0]} {c[1]} {c[2]}"
                fh.write((line + "\n").encode("ascii"))


# ---------------------------------------------------------------------------
# Validation and rescaling


def validate(mesh: TriangleMesh) -> ValidationReport:
    """Check edge-manifoldness, watertightness, and connected component count.

    Manifold: every undirected edge is shared by exactly two triangles with
    opposite winding. Watertight: no edge belongs to a single triangle.
    """
    tris = mesh.triangles
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    lo = edges.min(axis=1)
    hi = edges.max(axis=1)
    forward = edges[:, 0] < edges[:, 1]
    key = lo * (mesh.vertex_count + 1) + hi

    order = np.argsort(key, kind="stable")
    sorted_key = key[order]
    uniq, start = np.unique(sorted_key, return_index=True)
    counts = np.diff(np.append(start, len(sorted_key)))

    fwd_sorted = forward[order].astype(np.int64)
    fwd_per_edge = np.add.reduceat(fwd_sorted, start)
    is_watertight = bool((counts != 1).all())
    is_manifold = bool(((counts == 2) & (fwd_per_edge == 1)).all())

    component_count = _component_count(tris, key, order, start, counts)
    vmin, vmax = mesh.bbox()
    return ValidationReport(
        is_manifold=is_manifold,
        is_watertight=is_watertight,
        component_count=component_count,
        bbox_min_edge=float((vmax - vmin).min()),
    )


def _component_count(tris, key, order, start, counts) -> int:
    # Union-find over triangles joined by shared undirected edges.
    n = len(tris)
    parent = np.arange(n, dtype=np.int64)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    tri_of_edge = order % n  # edge row e belongs to triangle e % n
    pos = 0
    for c in counts:
        first = find(tri_of_edge[pos])
        for k in range(1, c):
            other = find(tri_of_edge[pos + k])
            parent[other] = first
        pos += c
    roots = {int(find(i)) for i in range(n)}
    return len(roots)


def normalize_scale(mesh: TriangleMesh, min_edge: float = 80.0) -> TriangleMesh:
    """Scale the mesh up about its bbox center so the shortest bbox edge is
    at least min_edge mm. Meshes already large enough are returned unchanged.
    """
    vmin, vmax = mesh.bbox()
    extent = vmax - vmin
    if float(extent.min()) <= 1e-12:
        raise DegenerateBBox(f"zero-extent bounding box axis: extents {extent.tolist()}")
    shortest = float(extent.min())
    if shortest >= min_edge * (1.0 - 1e-12):
        return mesh
    scale = min_edge / shortest
    center = (vmin + vmax) / 2.0
    vertices = center + (mesh.vertices - center) * scale
    return TriangleMesh.create(vertices, mesh.triangles)


# ---------------------------------------------------------------------------
# Label visualization


def export_colored_mesh(mesh: TriangleMesh, samples, report, path: str) -> None:
    """Write a binary PLY with triangles colored by their nearest site's labels.

    Gray = neither label, red = inaccessible, green = occlusion, yellow = both.
    Triangles directly claimed through the samples' site->triangle map take
    the claiming site; all others take the site nearest their centroid.
    """
    from scipy.spatial import cKDTree

    if len(np.asarray(report.inaccessible)) != len(samples.sites):
        raise ValueError("report does not match the sample set")
    centroids = mesh.triangle_centroids()
    tri_site = cKDTree(samples.sites).query(centroids)[1].astype(np.int64)

    claim_dist = np.full(mesh.triangle_count, np.inf)
    for site_idx, tri_idx in enumerate(np.asarray(samples.site_triangle)):
        t = int(tri_idx)
        if t < 0 or t >= mesh.triangle_count:
            continue
        d = float(np.linalg.norm(samples.sites[site_idx] - centroids[t]))
        if d < claim_dist[t]:
            claim_dist[t] = d
            tri_site[t] = site_idx

    inac = np.asarray(report.inaccessible, dtype=bool)[tri_site]
    occl = np.asarray(report.occlusion, dtype=bool)[tri_site]
    colors = np.empty((mesh.triangle_count, 3), dtype=np.uint8)
    colors[:] = COLOR_NEITHER
    colors[inac & ~occl] = COLOR_INACCESSIBLE
    colors[~inac & occl] = COLOR_OCCLUSION
    colors[inac & occl] = COLOR_BOTH
    save_ply(mesh, path, face_colors=colors)
