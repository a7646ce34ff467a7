"""Numba kernels for collision scanning, surface projection, and containment.

All kernels are deterministic: no parallel reductions, no RNG. Threading
happens one layer up by chunking anchor points; integer accumulators make
the merge order irrelevant.

Collision codes: 0 none, 1 ball, 2 body, 3 holder, 4 shaft.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _classify(r2, dz, cr, ch, fr, fh, sr, eps):
    # Point at squared horizontal distance r2 and height dz above the tip.
    # The cutter volume is shrunk by eps; regions are disjoint in dz.
    top = cr + ch + fh
    if dz > top:
        t = sr - eps
        if r2 < t * t:
            return 4
    elif dz >= cr + ch:
        t = fr - eps
        if r2 < t * t:
            return 3
    elif dz >= cr:
        t = cr - eps
        if r2 < t * t:
            return 2
    elif dz >= 0.0:
        t = cr - eps
        h = dz - cr
        if r2 + h * h < t * t:
            return 1
    return 0


@njit(cache=True)
def classify_points(pts, cr, ch, fr, fh, sr, eps):
    """Collision code per cutter-local point; mirrors cutter.collide_point."""
    n = pts.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        r2 = pts[i, 0] * pts[i, 0] + pts[i, 1] * pts[i, 1]
        out[i] = _classify(r2, pts[i, 2], cr, ch, fr, fh, sr, eps)
    return out


@njit(cache=True, inline="always")
def _lower_bound(sz, value):
    lo = 0
    hi = sz.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if sz[mid] < value:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True, nogil=True)
def scan_labels(ax, ay, az, self_ids, sx, sy, sz, sid,
                cr, ch, fr, fh, sr, eps, rho2, prefilter, inf_shaft):
    """Fast per-direction collision test for each anchor (early exit).

    Obstacles are pre-sorted by rotated z (sx, sy, sz with original ids in
    sid); only obstacles at or above the anchor can collide. Returns 1 where
    the anchor collides with at least one obstacle in this direction.
    """
    n_a = ax.shape[0]
    n_o = sx.shape[0]
    top = cr + ch + fh
    out = np.zeros(n_a, dtype=np.uint8)
    for a in range(n_a):
        xi = ax[a]
        yi = ay[a]
        zi = az[a]
        self_id = self_ids[a]
        if inf_shaft:
            # any obstacle above the shaft plane collides regardless of radius
            q = n_o - 1
            while q >= 0 and sid[q] == self_id:
                q -= 1
            if q >= 0 and sz[q] - zi > top:
                out[a] = 1
                continue
        hit = False
        for q in range(_lower_bound(sz, zi), n_o):
            j = sid[q]
            if j == self_id:
                continue
            dz = sz[q] - zi
            dx = sx[q] - xi
            dy = sy[q] - yi
            r2 = dx * dx + dy * dy
            if prefilter and r2 > rho2:
                continue
            if _classify(r2, dz, cr, ch, fr, fh, sr, eps) != 0:
                hit = True
                break
        if hit:
            out[a] = 1
    return out


@njit(cache=True, nogil=True)
def scan_beta(ax, ay, az, self_ids, sx, sy, sz, sid,
              cr, ch, fr, fh, sr, eps, rho2, prefilter, inf_shaft, beta):
    """Accumulate occlusion counts: beta[j] += 1 for every obstacle j that
    collides with the cutter anchored at an (inaccessible) anchor, this
    direction. Full scan, no early exit."""
    n_a = ax.shape[0]
    n_o = sx.shape[0]
    top = cr + ch + fh
    for a in range(n_a):
        xi = ax[a]
        yi = ay[a]
        zi = az[a]
        self_id = self_ids[a]
        for q in range(_lower_bound(sz, zi), n_o):
            j = sid[q]
            if j == self_id:
                continue
            dz = sz[q] - zi
            dx = sx[q] - xi
            dy = sy[q] - yi
            r2 = dx * dx + dy * dy
            if prefilter and r2 > rho2:
                if inf_shaft and dz > top:
                    beta[j] += 1
                continue
            if _classify(r2, dz, cr, ch, fr, fh, sr, eps) != 0:
                beta[j] += 1
    return beta


@njit(cache=True, nogil=True)
def brute_labels(ax, ay, az, self_ids, ox, oy, oz, cr, ch, fr, fh, sr, eps):
    """Reference per-direction collision test: every obstacle is evaluated
    for every anchor, no ordering, no prefilter, no early exit."""
    n_a = ax.shape[0]
    n_o = ox.shape[0]
    out = np.zeros(n_a, dtype=np.uint8)
    for a in range(n_a):
        hit = False
        for j in range(n_o):
            if j == self_ids[a]:
                continue
            dz = oz[j] - az[a]
            dx = ox[j] - ax[a]
            dy = oy[j] - ay[a]
            r2 = dx * dx + dy * dy
            if _classify(r2, dz, cr, ch, fr, fh, sr, eps) != 0:
                hit = True
        if hit:
            out[a] = 1
    return out


@njit(cache=True, nogil=True)
def brute_beta(ax, ay, az, self_ids, ox, oy, oz, cr, ch, fr, fh, sr, eps, beta):
    n_a = ax.shape[0]
    n_o = ox.shape[0]
    for a in range(n_a):
        for j in range(n_o):
            if j == self_ids[a]:
                continue
            dz = oz[j] - az[a]
            dx = ox[j] - ax[a]
            dy = oy[j] - ay[a]
            r2 = dx * dx + dy * dy
            if _classify(r2, dz, cr, ch, fr, fh, sr, eps) != 0:
                beta[j] += 1
    return beta


# ---------------------------------------------------------------------------
# Closest point on surface (Lloyd re-projection)


@njit(cache=True, inline="always")
def _closest_on_triangle(px, py, pz, t):
    # Ericson, Real-Time Collision Detection, 5.1.5.
    ax, ay, az = t[0, 0], t[0, 1], t[0, 2]
    bx, by, bz = t[1, 0], t[1, 1], t[1, 2]
    cx, cy, cz = t[2, 0], t[2, 1], t[2, 2]
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return ax + v * abx, ay + v * aby, az + v * abz
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return ax + abx * v + acx * w, ay + aby * v + acy * w, az + abz * v + acz * w


@njit(cache=True, nogil=True)
def project_points(points, corners, centers, radii):
    """Nearest surface point for each query point.

    centers/radii are per-triangle bounding spheres used to prune the scan.
    Returns (projected points, triangle index, squared distance).
    """
    n = points.shape[0]
    n_t = corners.shape[0]
    proj = np.empty((n, 3), dtype=np.float64)
    tri = np.empty(n, dtype=np.int64)
    dist2 = np.empty(n, dtype=np.float64)
    for i in range(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        best = np.inf
        bt = -1
        bx = by = bz = 0.0
        for t in range(n_t):
            dxc = px - centers[t, 0]
            dyc = py - centers[t, 1]
            dzc = pz - centers[t, 2]
            lb = np.sqrt(dxc * dxc + dyc * dyc + dzc * dzc) - radii[t]
            if lb > 0.0 and lb * lb >= best:
                continue
            qx, qy, qz = _closest_on_triangle(px, py, pz, corners[t])
            d2 = (px - qx) ** 2 + (py - qy) ** 2 + (pz - qz) ** 2
            if d2 < best:
                best = d2
                bt = t
                bx, by, bz = qx, qy, qz
        proj[i, 0] = bx
        proj[i, 1] = by
        proj[i, 2] = bz
        tri[i] = bt
        dist2[i] = best
    return proj, tri, dist2


# ---------------------------------------------------------------------------
# Ray-parity containment


@njit(cache=True)
def _parity_one(ox, oy, oz, dx, dy, dz, corners, t_tol):
    """Count ray/triangle crossings; -1 when any hit is too degenerate."""
    n_t = corners.shape[0]
    crossings = 0
    for t in range(n_t):
        ax, ay, az = corners[t, 0, 0], corners[t, 0, 1], corners[t, 0, 2]
        bx, by, bz = corners[t, 1, 0], corners[t, 1, 1], corners[t, 1, 2]
        cx, cy, cz = corners[t, 2, 0], corners[t, 2, 1], corners[t, 2, 2]
        e1x, e1y, e1z = bx - ax, by - ay, bz - az
        e2x, e2y, e2z = cx - ax, cy - ay, cz - az
        hx = dy * e2z - dz * e2y
        hy = dz * e2x - dx * e2z
        hz = dx * e2y - dy * e2x
        det = e1x * hx + e1y * hy + e1z * hz
        mag = (abs(e1x) + abs(e1y) + abs(e1z)) * (abs(hx) + abs(hy) + abs(hz))
        if abs(det) <= 1e-12 * mag or mag == 0.0:
            # ray parallel to the triangle plane: degenerate only if the ray
            # actually passes near the triangle's bounding box
            if _ray_near_aabb(ox, oy, oz, dx, dy, dz, corners[t], t_tol):
                return -1
            continue
        inv = 1.0 / det
        sx, sy, sz = ox - ax, oy - ay, oz - az
        u = (sx * hx + sy * hy + sz * hz) * inv
        if u < -1e-10 or u > 1.0 + 1e-10:
            continue
        qx = sy * e1z - sz * e1y
        qy = sz * e1x - sx * e1z
        qz = sx * e1y - sy * e1x
        v = (dx * qx + dy * qy + dz * qz) * inv
        if v < -1e-10 or u + v > 1.0 + 1e-10:
            continue
        ray_t = (e2x * qx + e2y * qy + e2z * qz) * inv
        if ray_t < -t_tol:
            continue
        # borderline barycentric or near-origin hits are unreliable
        if u < 1e-10 or v < 1e-10 or u + v > 1.0 - 1e-10 or ray_t < t_tol:
            return -1
        crossings += 1
    return crossings & 1


@njit(cache=True, inline="always")
def _ray_near_aabb(ox, oy, oz, dx, dy, dz, tri, tol):
    lox = min(tri[0, 0], min(tri[1, 0], tri[2, 0])) - tol
    hix = max(tri[0, 0], max(tri[1, 0], tri[2, 0])) + tol
    loy = min(tri[0, 1], min(tri[1, 1], tri[2, 1])) - tol
    hiy = max(tri[0, 1], max(tri[1, 1], tri[2, 1])) + tol
    loz = min(tri[0, 2], min(tri[1, 2], tri[2, 2])) - tol
    hiz = max(tri[0, 2], max(tri[1, 2], tri[2, 2])) + tol
    tmin = 0.0
    tmax = np.inf
    for axis in range(3):
        o = ox if axis == 0 else (oy if axis == 1 else oz)
        d = dx if axis == 0 else (dy if axis == 1 else dz)
        lo = lox if axis == 0 else (loy if axis == 1 else loz)
        hi = hix if axis == 0 else (hiy if axis == 1 else hiz)
        if abs(d) < 1e-300:
            if o < lo or o > hi:
                return False
        else:
            t1 = (lo - o) / d
            t2 = (hi - o) / d
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > tmin:
                tmin = t1
            if t2 < tmax:
                tmax = t2
            if tmin > tmax:
                return False
    return True


@njit(cache=True)
def points_inside(points, corners, directions, t_tol):
    """Ray-parity containment, one result per point: 1 inside, 0 outside.

    Tries each cast direction in order until one is free of degenerate hits;
    returns -1 for a point only if every direction degenerates.
    """
    n = points.shape[0]
    k = directions.shape[0]
    out = np.empty(n, dtype=np.int8)
    for i in range(n):
        res = -1
        for d in range(k):
            res = _parity_one(points[i, 0], points[i, 1], points[i, 2],
                              directions[d, 0], directions[d, 1], directions[d, 2],
                              corners, t_tol)
            if res >= 0:
                break
        out[i] = res
    return out
