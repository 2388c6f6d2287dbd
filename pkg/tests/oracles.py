"""Independent reference implementations used only by the tests.

Each one is written differently from the library code it checks: ray hits
go through the supporting plane plus a barycentric solve instead of
Moller-Trumbore, point-in-polygon uses the winding number instead of
even-odd crossings, visibility compares every hit with every target and
set cover enumerates bitmasks.
"""
from __future__ import annotations

import math

import numpy as np

EPS = 1e-9


def brute_cast(origins, dirs, max_range, tris, chunk=64):
    """Nearest hit per ray against z = 0 and every triangle; (t, kind)."""
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    tris = np.asarray(tris, dtype=np.float64).reshape(-1, 3, 3)
    n = len(origins)
    best = np.full(n, np.inf)
    kind = np.full(n, 2, dtype=np.int8)
    with np.errstate(divide="ignore", invalid="ignore"):
        tg = -origins[:, 2] / dirs[:, 2]
    ok = (dirs[:, 2] != 0) & (tg > EPS) & (tg <= max_range)
    best[ok] = tg[ok]
    kind[ok] = 0
    if len(tris):
        a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
        normal = np.cross(b - a, c - a)
        # barycentric coordinates from the Gram system of the two edges
        e0, e1 = b - a, c - a
        d00 = (e0 * e0).sum(1)
        d01 = (e0 * e1).sum(1)
        d11 = (e1 * e1).sum(1)
        den = d00 * d11 - d01 * d01
        for lo in range(0, n, chunk):
            o = origins[lo:lo + chunk, None, :]
            d = dirs[lo:lo + chunk, None, :]
            nd = (normal[None] * d).sum(-1)
            with np.errstate(divide="ignore", invalid="ignore"):
                t = ((a[None] - o) * normal[None]).sum(-1) / nd
                w = o + t[..., None] * d - a[None]
                d20 = (w * e0[None]).sum(-1)
                d21 = (w * e1[None]).sum(-1)
                v = (d11 * d20 - d01 * d21) / den
                u = (d00 * d21 - d01 * d20) / den
                inside = (nd != 0) & (v >= -EPS) & (u >= -EPS) & (u + v <= 1 + EPS) & (t > EPS) & (t <= max_range)
            tmin = np.where(inside, t, np.inf).min(axis=1)
            closer = tmin < best[lo:lo + chunk]
            idx = np.flatnonzero(closer) + lo
            best[idx] = tmin[closer]
            kind[idx] = 1
    best[kind == 2] = max_range
    return best, kind


def winding_number(p, poly) -> int:
    x, y = p
    wn = 0
    pts = [tuple(q) for q in poly]
    for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]):
        cross = (x1 - x0) * (y - y0) - (x - x0) * (y1 - y0)
        if y0 <= y < y1 and cross > 0:
            wn += 1
        elif y1 <= y < y0 and cross < 0:
            wn -= 1
    return wn


def segment_distance(p, a, b) -> float:
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    t = 0.0 if L2 == 0 else max(0.0, min(1.0, ((p[0] - ax) * dx + (p[1] - ay) * dy) / L2))
    return math.hypot(p[0] - (ax + t * dx), p[1] - (ay + t * dy))


def all_pairs_visibility(hit_sets, targets, radius):
    """v[i, k] = 1 iff some hit of sensor i lies within ``radius`` of target k."""
    targets = np.asarray(targets, dtype=np.float64)
    v = np.zeros((len(hit_sets), len(targets)), dtype=bool)
    for i, hits in enumerate(hit_sets):
        hits = np.asarray(hits, dtype=np.float64).reshape(-1, 3)
        if not len(hits):
            continue
        for k, t in enumerate(targets):
            d2 = ((hits - t) ** 2).sum(1)
            v[i, k] = bool((d2 <= radius * radius).any())
    return v


def enumerate_cover(bits, degree, lam, need):
    """Exhaustive minimum of |S| + lam * sum(d); ties to the lexicographically
    smallest sorted index tuple. Returns (selection, objective) or None."""
    bits = np.asarray(bits, dtype=bool)
    ns = bits.shape[0]
    best = None
    for mask in range(1 << ns):
        sel = tuple(i for i in range(ns) if mask >> i & 1)
        covered = int(bits[list(sel)].any(axis=0).sum()) if sel else 0
        if covered < need:
            continue
        obj = float(len(sel)) + lam * float(sum(int(degree[i]) for i in sel))
        if best is None or obj < best[1] or (obj == best[1] and sel < best[0]):
            best = (sel, obj)
    return best
