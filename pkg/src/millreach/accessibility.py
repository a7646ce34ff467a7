"""Per-site cutter accessibility labeling and occlusion-factor accumulation.

Two engines share one collision definition: the production path uses a
detection-box prefilter, per-direction z-sorting, and early exits; the brute
path evaluates every (anchor, direction, obstacle) triple and serves as the
reference oracle. Both are exact and must agree bit-for-bit on labels.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .cutter import DEFAULT_EPSILON, DEFAULT_SIGMA, Cutter
from .errors import EmptyInput
from .sampling import DirectionSet, SurfaceSamples, VolumeSamples

SHAFT_MODES = ("fr_plus_sigma", "infinite")


@dataclass(frozen=True)
class AccessibilityOptions:
    """Engine tuning knobs.

    sigma widens the detection-box cylinder (radius FR + sigma) used both to
    cull obstacles and, in fr_plus_sigma mode, as the shaft radius.
    occlusion_fraction selects how many of the worst blockers get the
    occlusion label.
    """

    sigma: float = DEFAULT_SIGMA
    occlusion_fraction: float = 0.10
    epsilon: float = DEFAULT_EPSILON
    prefilter: bool = True
    shaft_mode: str = "fr_plus_sigma"

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not (0.0 < self.occlusion_fraction <= 1.0):
            raise ValueError(f"occlusion_fraction must be in (0, 1], got {self.occlusion_fraction}")
        if self.shaft_mode not in SHAFT_MODES:
            raise ValueError(f"shaft_mode must be one of {SHAFT_MODES}")


@dataclass(frozen=True, eq=False)
class AccessibilityReport:
    """Labels over the analyzed anchor points plus occlusion bookkeeping over
    the obstacle sites. For surface analyses anchors and obstacles are the
    same site set; for volume analyses anchors are the grid points and beta /
    occlusion refer to the surface sites.
    """

    inaccessible: np.ndarray  # (n_anchors,) bool
    beta: np.ndarray  # (n_obstacles,) int64
    occlusion: np.ndarray  # (n_obstacles,) bool
    accessible_direction: np.ndarray  # (n_anchors,) int64, -1 where inaccessible
    meta: dict

    @property
    def inaccessible_count(self) -> int:
        return int(self.inaccessible.sum())

    @property
    def occlusion_count(self) -> int:
        return int(self.occlusion.sum())


def rotation_to_z(d) -> np.ndarray:
    """Minimal rotation taking unit vector d onto +Z (Rodrigues about d x z).

    Within 1e-12 of +Z returns the identity; within 1e-12 of -Z returns the
    half-turn about +X.
    """
    d = np.asarray(d, dtype=np.float64).reshape(3)
    dx, dy, dz = float(d[0]), float(d[1]), float(d[2])
    s2 = dx * dx + dy * dy
    if s2 < 1e-24:
        if dz > 0:
            return np.eye(3)
        return np.diag([1.0, -1.0, -1.0])
    s = math.sqrt(s2)
    c = dz
    ux = dy / s
    uy = -dx / s
    k = np.array([[0.0, 0.0, uy], [0.0, 0.0, -ux], [-uy, ux, 0.0]])
    u = np.array([ux, uy, 0.0])
    return c * np.eye(3) + s * k + (1.0 - c) * np.outer(u, u)


# ---------------------------------------------------------------------------
# Engine internals


def _effective_shaft(cutter: Cutter, options: AccessibilityOptions) -> float:
    if options.shaft_mode == "infinite":
        return math.inf
    return cutter.fr + options.sigma


def _params(cutter: Cutter, options: AccessibilityOptions) -> tuple:
    rho = cutter.fr + options.sigma
    return (
        cutter.cr, cutter.ch, cutter.fr, cutter.fh,
        _effective_shaft(cutter, options), options.epsilon,
        rho * rho, bool(options.prefilter), options.shaft_mode == "infinite",
    )


def _columns(u: np.ndarray, rows=None):
    if rows is not None:
        u = u[rows]
    return (np.ascontiguousarray(u[:, 0]), np.ascontiguousarray(u[:, 1]),
            np.ascontiguousarray(u[:, 2]))


def _chunk_ranges(n: int, chunks: int):
    bounds = np.linspace(0, n, chunks + 1).astype(int)
    return [(int(bounds[i]), int(bounds[i + 1])) for i in range(chunks) if bounds[i] < bounds[i + 1]]


def _fast_labels(anchors, obstacles, self_ids, dirs, params, threads, pool):
    cr, ch, fr, fh, sr, eps, rho2, prefilter, inf_shaft = params
    n_a = len(anchors)
    accessible_dir = np.full(n_a, -1, dtype=np.int64)
    undecided = np.arange(n_a)
    for k in range(len(dirs)):
        if undecided.size == 0:
            break
        rot = rotation_to_z(dirs[k]).T
        u_o = obstacles @ rot
        u_a = u_o if anchors is obstacles else anchors @ rot
        order = np.argsort(u_o[:, 2], kind="stable")
        sx, sy, sz = _columns(u_o, order)
        sid = np.ascontiguousarray(order.astype(np.int64))
        ax, ay, az = _columns(u_a, undecided)
        selfs = np.ascontiguousarray(self_ids[undecided])

        if pool is None or undecided.size < 2 * threads:
            collided = kernels.scan_labels(ax, ay, az, selfs, sx, sy, sz, sid,
                                           cr, ch, fr, fh, sr, eps, rho2, prefilter, inf_shaft)
        else:
            futures = [
                pool.submit(kernels.scan_labels, ax[lo:hi], ay[lo:hi], az[lo:hi], selfs[lo:hi],
                            sx, sy, sz, sid, cr, ch, fr, fh, sr, eps, rho2, prefilter, inf_shaft)
                for lo, hi in _chunk_ranges(undecided.size, threads)
            ]
            collided = np.concatenate([f.result() for f in futures])

        accessible_dir[undecided[collided == 0]] = k
        undecided = undecided[collided == 1]
    return accessible_dir


def _fast_beta(anchors, obstacles, self_ids, anchor_rows, dirs, params, threads, pool):
    cr, ch, fr, fh, sr, eps, rho2, prefilter, inf_shaft = params
    beta = np.zeros(len(obstacles), dtype=np.int64)
    if anchor_rows.size == 0:
        return beta
    for k in range(len(dirs)):
        rot = rotation_to_z(dirs[k]).T
        u_o = obstacles @ rot
        u_a = u_o if anchors is obstacles else anchors @ rot
        order = np.argsort(u_o[:, 2], kind="stable")
        sx, sy, sz = _columns(u_o, order)
        sid = np.ascontiguousarray(order.astype(np.int64))
        ax, ay, az = _columns(u_a, anchor_rows)
        selfs = np.ascontiguousarray(self_ids[anchor_rows])

        if pool is None or anchor_rows.size < 2 * threads:
            kernels.scan_beta(ax, ay, az, selfs, sx, sy, sz, sid,
                              cr, ch, fr, fh, sr, eps, rho2, prefilter, inf_shaft, beta)
        else:
            parts = []
            for lo, hi in _chunk_ranges(anchor_rows.size, threads):
                local = np.zeros_like(beta)
                parts.append(pool.submit(
                    kernels.scan_beta, ax[lo:hi], ay[lo:hi], az[lo:hi], selfs[lo:hi],
                    sx, sy, sz, sid, cr, ch, fr, fh, sr, eps, rho2, prefilter, inf_shaft, local))
            for f in parts:
                beta += f.result()
    return beta


def _brute_labels(anchors, obstacles, self_ids, dirs, params):
    cr, ch, fr, fh, sr, eps = params[:6]
    n_a = len(anchors)
    collided = np.empty((n_a, len(dirs)), dtype=np.uint8)
    for k in range(len(dirs)):
        rot = rotation_to_z(dirs[k]).T
        u_o = obstacles @ rot
        u_a = u_o if anchors is obstacles else anchors @ rot
        ox, oy, oz = _columns(u_o)
        ax, ay, az = _columns(u_a)
        collided[:, k] = kernels.brute_labels(ax, ay, az, self_ids, ox, oy, oz,
                                              cr, ch, fr, fh, sr, eps)
    free = collided == 0
    has_free = free.any(axis=1)
    accessible_dir = np.where(has_free, np.argmax(free, axis=1), -1).astype(np.int64)
    return accessible_dir


def _brute_beta(anchors, obstacles, self_ids, anchor_rows, dirs, params):
    cr, ch, fr, fh, sr, eps = params[:6]
    beta = np.zeros(len(obstacles), dtype=np.int64)
    if anchor_rows.size == 0:
        return beta
    for k in range(len(dirs)):
        rot = rotation_to_z(dirs[k]).T
        u_o = obstacles @ rot
        u_a = u_o if anchors is obstacles else anchors @ rot
        ox, oy, oz = _columns(u_o)
        ax, ay, az = _columns(u_a, anchor_rows)
        selfs = np.ascontiguousarray(self_ids[anchor_rows])
        kernels.brute_beta(ax, ay, az, selfs, ox, oy, oz, cr, ch, fr, fh, sr, eps, beta)
    return beta


def select_occlusion(beta: np.ndarray, fraction: float) -> np.ndarray:
    """Mark the worst blockers: the top ceil(fraction * n) sites by beta,
    never labeling a site whose beta is zero. Ties break on lower index."""
    n = len(beta)
    positives = int(np.count_nonzero(beta > 0))
    count = min(math.ceil(fraction * n), positives)
    out = np.zeros(n, dtype=bool)
    if count > 0:
        order = np.lexsort((np.arange(n), -beta))
        out[order[:count]] = True
    return out


def _assemble(anchors, obstacles, self_ids, dirs_obj, cutter, options, threads, brute, extra_meta=None):
    dirs = np.ascontiguousarray(dirs_obj.directions, dtype=np.float64)
    if len(anchors) == 0:
        raise EmptyInput("no points to analyze")
    if len(dirs) == 0:
        raise EmptyInput("no cutter directions")
    params = _params(cutter, options)
    same = obstacles is anchors
    anchors = np.ascontiguousarray(anchors, dtype=np.float64)
    obstacles = anchors if same else np.ascontiguousarray(obstacles, dtype=np.float64)

    pool = None
    if threads > 1 and not brute:
        pool = ThreadPoolExecutor(max_workers=threads)
    try:
        t0 = time.perf_counter()
        if brute:
            accessible_dir = _brute_labels(anchors, obstacles, self_ids, dirs, params)
        else:
            accessible_dir = _fast_labels(anchors, obstacles, self_ids, dirs, params, threads, pool)
        t_label = time.perf_counter() - t0

        inaccessible = accessible_dir < 0
        rows = np.flatnonzero(inaccessible)
        t1 = time.perf_counter()
        if brute:
            beta = _brute_beta(anchors, obstacles, self_ids, rows, dirs, params)
        else:
            beta = _fast_beta(anchors, obstacles, self_ids, rows, dirs, params, threads, pool)
        t_beta = time.perf_counter() - t1
    finally:
        if pool is not None:
            pool.shutdown()

    occlusion = select_occlusion(beta, options.occlusion_fraction)
    meta = {
        "engine": "brute" if brute else "prefilter",
        "n": int(len(anchors)),
        "m": int(len(dirs)),
        "n_obstacles": int(len(obstacles)),
        "cutter": {"cr": cutter.cr, "ch": cutter.ch, "fr": cutter.fr, "fh": cutter.fh},
        "options": asdict(options),
        "threads": int(threads),
        "timing": {"label_s": t_label, "beta_s": t_beta, "total_s": t_label + t_beta},
    }
    if extra_meta:
        meta.update(extra_meta)
    return AccessibilityReport(
        inaccessible=inaccessible,
        beta=beta,
        occlusion=occlusion,
        accessible_direction=accessible_dir,
        meta=meta,
    )


# ---------------------------------------------------------------------------
# Public API


def analyze(samples: SurfaceSamples, directions: DirectionSet, cutter: Cutter,
            options: AccessibilityOptions | None = None, threads: int = 1) -> AccessibilityReport:
    """Label every site inaccessible or not over all cutter directions, then
    accumulate occlusion factors over the inaccessible ones.

    A site is inaccessible when every direction has at least one other site
    inside the (eps-shrunk) cutter volume anchored at it. beta[i] counts the
    (inaccessible site, direction) pairs in which site i is a blocker; the
    top occlusion_fraction of positive-beta sites receive the occlusion
    label. Deterministic and independent of thread count.
    """
    options = options or AccessibilityOptions()
    if len(samples) == 0:
        raise EmptyInput("no surface sites")
    sites = samples.sites
    self_ids = np.arange(len(sites), dtype=np.int64)
    return _assemble(sites, sites, self_ids, directions, cutter, options, threads, brute=False)


def brute_force_analyze(samples: SurfaceSamples, directions: DirectionSet, cutter: Cutter,
                        options: AccessibilityOptions | None = None) -> AccessibilityReport:
    """Reference oracle: identical contract to analyze, but every obstacle is
    tested for every (site, direction) with no prefilter and no early exit."""
    options = options or AccessibilityOptions()
    if len(samples) == 0:
        raise EmptyInput("no surface sites")
    sites = samples.sites
    self_ids = np.arange(len(sites), dtype=np.int64)
    return _assemble(sites, sites, self_ids, directions, cutter, options, threads=1, brute=True)


def analyze_volume(volume: VolumeSamples, obstacles: SurfaceSamples, directions: DirectionSet,
                   cutter: Cutter, options: AccessibilityOptions | None = None,
                   threads: int = 1) -> AccessibilityReport:
    """Accessibility of interior stock points: each grid point is tested as
    the cutter contact location against the part's surface sites (removable
    stock never blocks itself). beta accumulates onto the surface sites."""
    options = options or AccessibilityOptions()
    if len(volume) == 0:
        raise EmptyInput("no volume points")
    self_ids = np.full(len(volume), -1, dtype=np.int64)
    return _assemble(volume.points, obstacles.sites, self_ids, directions, cutter,
                     options, threads, brute=False, extra_meta={"volume": True})


def brute_force_analyze_volume(volume: VolumeSamples, obstacles: SurfaceSamples,
                               directions: DirectionSet, cutter: Cutter,
                               options: AccessibilityOptions | None = None) -> AccessibilityReport:
    options = options or AccessibilityOptions()
    if len(volume) == 0:
        raise EmptyInput("no volume points")
    self_ids = np.full(len(volume), -1, dtype=np.int64)
    return _assemble(volume.points, obstacles.sites, self_ids, directions, cutter,
                     options, threads=1, brute=True, extra_meta={"volume": True})
