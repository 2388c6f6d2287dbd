"""Pure-Python kernels: ray casting and the exact cover search.

Used when the compiled ``_ckernels`` extension is unavailable or disabled;
both modules expose the same functions with identical results.

Rays are traced as numpy packets: each BVH node receives the subset of rays
whose slab test passes and whose current nearest hit lies beyond the box
entry. Per-ray arithmetic matches ``_ckernels.pyx`` operation for operation.
The cover search uses Python ints as bitsets and visits nodes in the same
order as the compiled search, so node counts agree too.
"""
from __future__ import annotations

import sys
import time

import numpy as np

BARY_EPS = 1e-9
T_MIN = 1e-9

KIND_GROUND = 0
KIND_OBSTACLE = 1
KIND_MAX_RANGE = 2


def _slab(origins, inv_dirs, dir_zero, lo, hi):
    """Entry/exit distances of rays against one box; rays with a zero
    direction component get an infinite slab when the origin lies inside it."""
    with np.errstate(invalid="ignore", over="ignore"):
        t1 = (lo - origins) * inv_dirs
        t2 = (hi - origins) * inv_dirs
    tlo = np.minimum(t1, t2)
    thi = np.maximum(t1, t2)
    inside = (origins >= lo) & (origins <= hi)
    tlo = np.where(dir_zero, np.where(inside, -np.inf, np.inf), tlo)
    thi = np.where(dir_zero, np.where(inside, np.inf, -np.inf), thi)
    return tlo.max(axis=1), thi.min(axis=1)


def _hit_triangle(o, d, tri):
    """Möller-Trumbore against one triangle for a packet; returns t (inf = miss)."""
    v0x, v0y, v0z, v1x, v1y, v1z, v2x, v2y, v2z = tri
    e1x, e1y, e1z = v1x - v0x, v1y - v0y, v1z - v0z
    e2x, e2y, e2z = v2x - v0x, v2y - v0y, v2z - v0z
    dx, dy, dz = d[:, 0], d[:, 1], d[:, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    ok = det != 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        sx = o[:, 0] - v0x
        sy = o[:, 1] - v0y
        sz = o[:, 2] - v0z
        u = (sx * px + sy * py + sz * pz) * inv
        qx = sy * e1z - sz * e1y
        qy = sz * e1x - sx * e1z
        qz = sx * e1y - sy * e1x
        v = (dx * qx + dy * qy + dz * qz) * inv
        t = (e2x * qx + e2y * qy + e2z * qz) * inv
        ok &= (u >= -BARY_EPS) & (u <= 1.0 + BARY_EPS)
        ok &= (v >= -BARY_EPS) & (u + v <= 1.0 + BARY_EPS)
        ok &= t > T_MIN
    return np.where(ok, t, np.inf)


def cast_rays(origins, dirs, max_range, node_bounds, node_child, node_tris, tris):
    """Nearest hit per ray against ground plane z = 0 and the BVH triangles.

    Returns ``(t, kind)``. Rays that hit nothing within ``max_range`` get
    ``t = max_range`` and ``KIND_MAX_RANGE``. The ground wins exact ties.
    """
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    n = len(origins)
    best = np.full(n, np.inf)
    kind = np.full(n, KIND_MAX_RANGE, dtype=np.int8)

    dz = dirs[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        tg = -origins[:, 2] / dz
    ground = (dz != 0.0) & (tg > T_MIN) & (tg <= max_range)
    best[ground] = tg[ground]
    kind[ground] = KIND_GROUND

    if len(node_bounds) and n:
        dir_zero = dirs == 0.0
        with np.errstate(divide="ignore"):
            inv_dirs = 1.0 / dirs
        stack = [(0, np.arange(n))]
        while stack:
            node, idx = stack.pop()
            lo = node_bounds[node, :3]
            hi = node_bounds[node, 3:]
            tlo, thi = _slab(origins[idx], inv_dirs[idx], dir_zero[idx], lo, hi)
            limit = np.minimum(best[idx], max_range)
            keep = (tlo <= thi) & (thi >= 0.0) & (tlo <= limit)
            idx = idx[keep]
            if not len(idx):
                continue
            left, right = node_child[node]
            if left < 0:
                start, count = node_tris[node]
                o, d = origins[idx], dirs[idx]
                for k in range(start, start + count):
                    t = _hit_triangle(o, d, tris[k])
                    cur = best[idx]
                    win = (t < cur) & (t <= max_range)
                    if win.any():
                        hit = idx[win]
                        best[hit] = t[win]
                        kind[hit] = KIND_OBSTACLE
            else:
                stack.append((right, idx))
                stack.append((left, idx))

    miss = kind == KIND_MAX_RANGE
    best[miss] = max_range
    return best, kind


# ---------------------------------------------------------------- cover search


class BudgetExhausted(Exception):
    pass


def _objective(count, dsum, lam):
    return float(count) + lam * float(dsum)


def _fewest_summing(values_desc, deficit):
    total = 0
    for n, g in enumerate(values_desc, 1):
        total += g
        if total >= deficit:
            return n
    return -1


def cover_search(bits, degree, lam, need, best_obj, best_sel, node_limit=-1, time_limit=-1.0):
    """Exact search for the cheapest selection covering ``need`` targets.

    Returns ``(selected, objective, nodes, exhausted)``. ``best_obj`` /
    ``best_sel`` seed the incumbent. Among equal objectives the
    lexicographically smallest sorted selection wins.
    """
    bits = np.asarray(bits, dtype=bool)
    ns, nt = bits.shape
    masks = [int.from_bytes(np.packbits(r, bitorder="little").tobytes(), "little") for r in bits]
    cols = [int.from_bytes(np.packbits(c, bitorder="little").tobytes(), "little") for c in bits.T]
    deg = [int(d) for d in degree]
    lam = float(lam)
    deadline = None if time_limit is None or time_limit < 0 else time.perf_counter() + time_limit
    limit = None if node_limit is None or node_limit < 0 else node_limit
    state = {"obj": float(best_obj), "sel": tuple(best_sel), "nodes": 0}
    chosen: list[int] = []

    def visit(covered, allowed, count, dsum):
        state["nodes"] += 1
        if limit is not None and state["nodes"] > limit:
            raise BudgetExhausted
        if deadline is not None and (state["nodes"] & 1023) == 0 and time.perf_counter() > deadline:
            raise BudgetExhausted
        c = covered.bit_count()
        if c >= need:
            obj = _objective(count, dsum, lam)
            sel = tuple(sorted(chosen))
            if obj < state["obj"] or (obj == state["obj"] and sel < state["sel"]):
                state["obj"], state["sel"] = obj, sel
            return
        live, gains = [], []
        union = 0
        livemask = 0
        a = allowed
        while a:
            low = a & -a
            i = low.bit_length() - 1
            a ^= low
            gm = masks[i] & ~covered
            if gm:
                live.append(i)
                gains.append(gm.bit_count())
                union |= gm
                livemask |= low
        deficit = need - c
        slack = union.bit_count() - deficit
        if slack < 0:
            return
        m = _fewest_summing(sorted(gains, reverse=True), deficit)
        dlb = sum(sorted(deg[i] for i in live)[:m])
        if _objective(count + m, dsum + dlb, lam) > state["obj"]:
            return
        if slack > 0:
            top = max(gains)
            pick = live[gains.index(top)]
            rest = livemask & ~(1 << pick)
            chosen.append(pick)
            visit(covered | masks[pick], rest, count + 1, dsum + deg[pick])
            chosen.pop()
            visit(covered, rest, count, dsum)
            return
        # every reachable target must be covered: branch on the target with
        # the fewest live candidates, one child per candidate
        target, fewest = -1, ns + 1
        u = union
        while u:
            low = u & -u
            k = low.bit_length() - 1
            u ^= low
            n = (cols[k] & livemask).bit_count()
            if n < fewest:
                target, fewest = k, n
                if n == 1:
                    break
        opts = sorted(
            (-g, i) for i, g in zip(live, gains) if (masks[i] >> target) & 1
        )
        forbidden = 0
        for _, i in opts:
            chosen.append(i)
            visit(covered | masks[i], livemask & ~forbidden & ~(1 << i), count + 1, dsum + deg[i])
            chosen.pop()
            forbidden |= 1 << i

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 4 * ns + 200))
    try:
        visit(0, (1 << ns) - 1, 0, 0)
        exhausted = False
    except BudgetExhausted:
        exhausted = True
    finally:
        sys.setrecursionlimit(old_limit)
    return state["sel"], state["obj"], state["nodes"], exhausted
