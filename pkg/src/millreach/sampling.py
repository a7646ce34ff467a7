"""Surface site sampling (Lloyd relaxation), cutter directions, volume grids."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .cutter import Cutter
from .errors import InvalidCount, NotWatertight
from .mesh import TriangleMesh, validate

logger = logging.getLogger(__name__)

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
AUX_FACTOR = 30  # auxiliary surface points per requested site

# Cast directions for containment: axis ray first, then fixed generic
# fallbacks used when a cast grazes an edge or vertex.
_FALLBACK_DIRECTIONS = np.vstack([
    np.array([[1.0, 0.0, 0.0]]),
    np.random.default_rng(1905).normal(size=(15, 3)),
])
_FALLBACK_DIRECTIONS /= np.linalg.norm(_FALLBACK_DIRECTIONS, axis=1, keepdims=True)
_FALLBACK_DIRECTIONS.setflags(write=False)


@dataclass(frozen=True, eq=False)
class SurfaceSamples:
    """Voronoi-site surface discretization: one point per cell, with the
    triangle it lies on and that triangle's normal."""

    sites: np.ndarray  # (n, 3) float64, mm
    normals: np.ndarray  # (n, 3) float64, unit
    site_triangle: np.ndarray  # (n,) int64
    mesh_hash: str

    def __len__(self) -> int:
        return len(self.sites)


@dataclass(frozen=True, eq=False)
class DirectionSet:
    """Unit cutter-approach directions on the upper hemisphere (z >= 0)."""

    directions: np.ndarray  # (m, 3) float64
    mode: str

    def __len__(self) -> int:
        return len(self.directions)


@dataclass(frozen=True, eq=False)
class VolumeSamples:
    """Grid cell centers inside the mesh bbox but outside the part itself."""

    points: np.ndarray  # (k, 3) float64
    grid_resolution: tuple[int, int, int]

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class DensityReport:
    max_neighbor_gap: float
    ok: bool


# ---------------------------------------------------------------------------
# Surface sampling


def _area_weighted_points(mesh: TriangleMesh, count: int, rng) -> tuple[np.ndarray, np.ndarray]:
    probs = mesh.areas / mesh.areas.sum()
    tri = rng.choice(len(probs), size=count, p=probs)
    r1 = rng.random(count)
    r2 = rng.random(count)
    s = np.sqrt(r1)
    u = 1.0 - s
    v = s * (1.0 - r2)
    w = s * r2
    corners = mesh.vertices[mesh.triangles[tri]]
    pts = u[:, None] * corners[:, 0] + v[:, None] * corners[:, 1] + w[:, None] * corners[:, 2]
    return pts, tri.astype(np.int64)


def _triangle_spheres(mesh: TriangleMesh) -> tuple[np.ndarray, np.ndarray]:
    corners = mesh.triangle_corners()
    centers = corners.mean(axis=1)
    radii = np.linalg.norm(corners - centers[:, None, :], axis=2).max(axis=1)
    return np.ascontiguousarray(centers), np.ascontiguousarray(radii)


def project_to_surface(mesh: TriangleMesh, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closest surface point, owning triangle, and squared distance per query."""
    points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    centers, radii = _triangle_spheres(mesh)
    return kernels.project_points(points, mesh.triangle_corners(), centers, radii)


def _lloyd(mesh: TriangleMesh, n: int, iters: int, seed: int):
    rng = np.random.default_rng(seed)
    sites, site_tri = _area_weighted_points(mesh, n, rng)
    aux, _ = _area_weighted_points(mesh, AUX_FACTOR * n, rng)
    energies = []
    for _ in range(iters):
        dist, idx = cKDTree(sites).query(aux)
        energies.append(float(np.sum(dist * dist)))
        sums = np.zeros((n, 3))
        counts = np.zeros(n)
        np.add.at(sums, idx, aux)
        np.add.at(counts, idx, 1.0)
        centroids = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1.0)[:, None], sites)
        sites, site_tri, _ = project_to_surface(mesh, centroids)
    dist, _ = cKDTree(sites).query(aux)
    energies.append(float(np.sum(dist * dist)))
    return sites, site_tri, energies


def sample_surface(mesh: TriangleMesh, n: int, lloyd_iters: int = 10, seed: int = 0) -> SurfaceSamples:
    """Sample n roughly-uniform sites on the surface via Lloyd relaxation.

    Sites start as area-weighted random surface points; each iteration
    clusters a dense auxiliary point set (30n points, fixed per seed) to the
    nearest sites, moves sites to cluster centroids, and re-projects them to
    the surface. Deterministic given (mesh, n, lloyd_iters, seed).
    """
    if n < 1:
        raise InvalidCount(f"site count must be >= 1, got {n}")
    if lloyd_iters < 0:
        raise InvalidCount(f"lloyd_iters must be >= 0, got {lloyd_iters}")
    sites, site_tri, _ = _lloyd(mesh, n, lloyd_iters, seed)
    return SurfaceSamples(
        sites=np.ascontiguousarray(sites),
        normals=np.ascontiguousarray(mesh.normals[site_tri]),
        site_triangle=site_tri,
        mesh_hash=mesh.content_hash(),
    )


def check_sampling_density(samples: SurfaceSamples, cutter: Cutter) -> DensityReport:
    """Largest nearest-neighbor gap between sites vs. the ball-end radius.

    Gaps at or above CR let the cutter slip between sites undetected; the
    result is advisory and never blocks an analysis.
    """
    if len(samples) < 2:
        return DensityReport(max_neighbor_gap=math.inf, ok=False)
    dist, _ = cKDTree(samples.sites).query(samples.sites, k=2)
    gap = float(dist[:, 1].max())
    ok = gap < cutter.cr
    if not ok:
        logger.warning("site spacing %.3f mm is not below ball-end radius %.3f mm", gap, cutter.cr)
    return DensityReport(max_neighbor_gap=gap, ok=ok)


def save_sites(samples: SurfaceSamples, path: str) -> None:
    """Text export, one line per site: x y z nx ny nz (9 significant digits)."""
    with open(path, "w", encoding="ascii") as fh:
        for p, nv in zip(samples.sites, samples.normals):
            fh.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g} {nv[0]:.9g} {nv[1]:.9g} {nv[2]:.9g}\n")


# ---------------------------------------------------------------------------
# Direction sampling


def sample_directions(m: int, mode: str = "fibonacci", azimuth_count: int | None = None) -> DirectionSet:
    """Unit directions on the upper hemisphere.

    fibonacci: spiral with z_k = k/(m-0.5) and azimuth k * golden angle;
    z strictly increases with k and never reaches the pole or equator twice.

    latlong: the pole plus rings of constant polar angle; m must equal
    n_rings * azimuth_count + 1. Symmetric under x -> -x for even
    azimuth_count, at the cost of uneven spacing.
    """
    if m < 1:
        raise InvalidCount(f"direction count must be >= 1, got {m}")
    if mode == "fibonacci":
        k = np.arange(m, dtype=np.float64)
        z = k / (m - 0.5)
        phi = k * GOLDEN_ANGLE
        rho = np.sqrt(1.0 - z * z)
        dirs = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    elif mode == "latlong":
        if not azimuth_count or azimuth_count < 1:
            raise InvalidCount("latlong mode requires a positive azimuth_count")
        if m < azimuth_count + 1 or (m - 1) % azimuth_count != 0:
            raise InvalidCount(
                f"latlong count {m} is not n_rings * {azimuth_count} + 1")
        n_rings = (m - 1) // azimuth_count
        rows = [np.array([[0.0, 0.0, 1.0]])]
        for j in range(n_rings):
            theta = (j + 0.5) * (math.pi / 2.0) / n_rings
            phi = 2.0 * math.pi * np.arange(azimuth_count) / azimuth_count
            st, ct = math.sin(theta), math.cos(theta)
            rows.append(np.stack([st * np.cos(phi), st * np.sin(phi),
                                  np.full(azimuth_count, ct)], axis=1))
        dirs = np.vstack(rows)
    else:
        raise InvalidCount(f"unknown direction mode {mode!r}")
    dirs = np.ascontiguousarray(dirs)
    dirs.setflags(write=False)
    return DirectionSet(directions=dirs, mode=mode)


# ---------------------------------------------------------------------------
# Volume sampling


def points_inside_mesh(mesh: TriangleMesh, points) -> np.ndarray:
    """Ray-parity containment test (watertight mesh), boolean per point."""
    points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    vmin, vmax = mesh.bbox()
    t_tol = 1e-9 * float(np.linalg.norm(vmax - vmin))
    res = kernels.points_inside(points, mesh.triangle_corners(), _FALLBACK_DIRECTIONS, t_tol)
    if (res < 0).any():
        raise RuntimeError("containment test degenerate in all cast directions")
    return res.astype(bool)


def sample_volume(mesh: TriangleMesh, resolution: int) -> VolumeSamples:
    """Regular grid of cell centers over the bbox, keeping points outside the
    closed mesh (the removable stock). Cell size is longest_edge/resolution.
    """
    if resolution < 2:
        raise InvalidCount(f"resolution must be >= 2, got {resolution}")
    report = validate(mesh)
    if not report.is_watertight:
        raise NotWatertight("volume sampling requires a watertight mesh")
    vmin, vmax = mesh.bbox()
    extent = vmax - vmin
    cell = float(extent.max()) / resolution
    counts = np.maximum(1, np.floor(extent / cell + 1e-9).astype(int))
    axes = [vmin[a] + (np.arange(counts[a]) + 0.5) * cell for a in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    inside = points_inside_mesh(mesh, grid)
    points = np.ascontiguousarray(grid[~inside])
    return VolumeSamples(points=points, grid_resolution=(int(counts[0]), int(counts[1]), int(counts[2])))
