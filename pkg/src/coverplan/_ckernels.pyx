# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same contracts as the functions in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY
from libc.stdint cimport uint64_t
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy, memset
from posix.time cimport clock_gettime, timespec, CLOCK_MONOTONIC

cdef extern from *:
    """
    static inline int cp_popcount(unsigned long long x) { return __builtin_popcountll(x); }
    static inline int cp_ctz(unsigned long long x) { return __builtin_ctzll(x); }
    """
    int cp_popcount(unsigned long long x) nogil
    int cp_ctz(unsigned long long x) nogil

cnp.import_array()

DEF STACK_SIZE = 128

cdef double BARY_EPS = 1e-9
cdef double T_MIN = 1e-9


cdef inline bint slab(const double[:, ::1] nb, Py_ssize_t node,
                      double ox, double oy, double oz,
                      double ix, double iy, double iz,
                      bint zx, bint zy, bint zz,
                      double limit, double* entry) noexcept nogil:
    cdef double tlo = -INFINITY, thi = INFINITY, t1, t2, a, b
    if zx:
        if ox < nb[node, 0] or ox > nb[node, 3]:
            return False
    else:
        t1 = (nb[node, 0] - ox) * ix
        t2 = (nb[node, 3] - ox) * ix
        a = t1 if t1 < t2 else t2
        b = t2 if t1 < t2 else t1
        if a > tlo: tlo = a
        if b < thi: thi = b
    if zy:
        if oy < nb[node, 1] or oy > nb[node, 4]:
            return False
    else:
        t1 = (nb[node, 1] - oy) * iy
        t2 = (nb[node, 4] - oy) * iy
        a = t1 if t1 < t2 else t2
        b = t2 if t1 < t2 else t1
        if a > tlo: tlo = a
        if b < thi: thi = b
    if zz:
        if oz < nb[node, 2] or oz > nb[node, 5]:
            return False
    else:
        t1 = (nb[node, 2] - oz) * iz
        t2 = (nb[node, 5] - oz) * iz
        a = t1 if t1 < t2 else t2
        b = t2 if t1 < t2 else t1
        if a > tlo: tlo = a
        if b < thi: thi = b
    entry[0] = tlo
    return tlo <= thi and thi >= 0.0 and tlo <= limit


cdef inline double hit_triangle(const double[:, ::1] tris, Py_ssize_t k,
                                double ox, double oy, double oz,
                                double dx, double dy, double dz) noexcept nogil:
    cdef double v0x = tris[k, 0], v0y = tris[k, 1], v0z = tris[k, 2]
    cdef double e1x = tris[k, 3] - v0x, e1y = tris[k, 4] - v0y, e1z = tris[k, 5] - v0z
    cdef double e2x = tris[k, 6] - v0x, e2y = tris[k, 7] - v0y, e2z = tris[k, 8] - v0z
    cdef double px = dy * e2z - dz * e2y
    cdef double py = dz * e2x - dx * e2z
    cdef double pz = dx * e2y - dy * e2x
    cdef double det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return INFINITY
    cdef double inv = 1.0 / det
    cdef double sx = ox - v0x, sy = oy - v0y, sz = oz - v0z
    cdef double u = (sx * px + sy * py + sz * pz) * inv
    if u < -BARY_EPS or u > 1.0 + BARY_EPS:
        return INFINITY
    cdef double qx = sy * e1z - sz * e1y
    cdef double qy = sz * e1x - sx * e1z
    cdef double qz = sx * e1y - sy * e1x
    cdef double v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -BARY_EPS or u + v > 1.0 + BARY_EPS:
        return INFINITY
    cdef double t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t > T_MIN:
        return t
    return INFINITY


def cast_rays(origins, dirs, double max_range, node_bounds, node_child, node_tris, tris):
    cdef const double[:, ::1] O = np.ascontiguousarray(origins, dtype=np.float64)
    cdef const double[:, ::1] D = np.ascontiguousarray(dirs, dtype=np.float64)
    cdef Py_ssize_t n = O.shape[0]
    best_arr = np.empty(n, dtype=np.float64)
    kind_arr = np.empty(n, dtype=np.int8)
    cdef double[::1] best = best_arr
    cdef signed char[::1] kind = kind_arr

    cdef const double[:, ::1] nb = np.ascontiguousarray(node_bounds, dtype=np.float64).reshape(-1, 6)
    cdef const long long[:, ::1] nc = np.ascontiguousarray(node_child, dtype=np.int64).reshape(-1, 2)
    cdef const long long[:, ::1] nt = np.ascontiguousarray(node_tris, dtype=np.int64).reshape(-1, 2)
    cdef const double[:, ::1] T = np.ascontiguousarray(tris, dtype=np.float64).reshape(-1, 9)
    cdef Py_ssize_t n_nodes = nb.shape[0]

    cdef Py_ssize_t r, node, k, sp, left, right
    cdef Py_ssize_t stack[STACK_SIZE]
    cdef double ox, oy, oz, dx, dy, dz, ix, iy, iz, tg, t, cur, limit, e_left, e_right
    cdef bint zx, zy, zz, hl, hr
    cdef signed char kd

    if n_nodes >= 1 and nc.shape[0] != n_nodes:
        raise ValueError("node arrays disagree in length")

    with nogil:
        for r in range(n):
            ox = O[r, 0]; oy = O[r, 1]; oz = O[r, 2]
            dx = D[r, 0]; dy = D[r, 1]; dz = D[r, 2]
            cur = INFINITY
            kd = 2
            if dz != 0.0:
                tg = -oz / dz
                if tg > T_MIN and tg <= max_range:
                    cur = tg
                    kd = 0
            if n_nodes > 0:
                zx = dx == 0.0; zy = dy == 0.0; zz = dz == 0.0
                ix = 1.0 / dx if not zx else 0.0
                iy = 1.0 / dy if not zy else 0.0
                iz = 1.0 / dz if not zz else 0.0
                limit = cur if cur < max_range else max_range
                sp = 0
                if slab(nb, 0, ox, oy, oz, ix, iy, iz, zx, zy, zz, limit, &e_left):
                    stack[0] = 0
                    sp = 1
                while sp > 0:
                    sp -= 1
                    node = stack[sp]
                    left = nc[node, 0]
                    if left < 0:
                        for k in range(nt[node, 0], nt[node, 0] + nt[node, 1]):
                            t = hit_triangle(T, k, ox, oy, oz, dx, dy, dz)
                            if t < cur and t <= max_range:
                                cur = t
                                kd = 1
                        continue
                    right = nc[node, 1]
                    limit = cur if cur < max_range else max_range
                    hl = slab(nb, left, ox, oy, oz, ix, iy, iz, zx, zy, zz, limit, &e_left)
                    hr = slab(nb, right, ox, oy, oz, ix, iy, iz, zx, zy, zz, limit, &e_right)
                    if sp + 2 > STACK_SIZE:
                        with gil:
                            raise RuntimeError("BVH deeper than traversal stack")
                    # push the farther child first so the nearer is visited next
                    if hl and hr:
                        if e_left <= e_right:
                            stack[sp] = right; stack[sp + 1] = left
                        else:
                            stack[sp] = left; stack[sp + 1] = right
                        sp += 2
                    elif hl:
                        stack[sp] = left; sp += 1
                    elif hr:
                        stack[sp] = right; sp += 1
            if kd == 2:
                cur = max_range
            best[r] = cur
            kind[r] = kd
    return best_arr, kind_arr


# ---------------------------------------------------------------- cover search

cdef struct Search:
    int ns, nt, W, CW, need, max_depth
    double lam
    const uint64_t* masks      # ns x W, target bitsets per candidate
    const uint64_t* cols       # nt x CW, candidate bitsets per target
    const long long* deg
    uint64_t* covered          # depth x W
    uint64_t* allowed          # depth x CW
    uint64_t* livemask         # depth x CW
    uint64_t* scratch          # W
    int* live                  # depth x ns
    int* gains                 # depth x ns
    int* opts                  # depth x ns
    int* sortbuf               # ns
    int* chosen                # ns
    int* best_sel              # ns
    int* tmp_sel               # ns
    int n_chosen, best_len
    double best_obj
    long long nodes, node_limit
    double deadline
    int exhausted


cdef inline double now() noexcept nogil:
    cdef timespec ts
    clock_gettime(CLOCK_MONOTONIC, &ts)
    return ts.tv_sec + ts.tv_nsec * 1e-9


cdef inline double objective(long long count, long long dsum, double lam) noexcept nogil:
    return <double>count + lam * <double>dsum


cdef void sort_desc(int* a, int n) noexcept nogil:
    cdef int i, j, x
    for i in range(1, n):
        x = a[i]
        j = i - 1
        while j >= 0 and a[j] < x:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = x


cdef void sort_asc(int* a, int n) noexcept nogil:
    cdef int i, j, x
    for i in range(1, n):
        x = a[i]
        j = i - 1
        while j >= 0 and a[j] > x:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = x


cdef void record_leaf(Search* s, long long count, long long dsum) noexcept nogil:
    cdef double obj = objective(count, dsum, s.lam)
    cdef int n = s.n_chosen, i, better
    memcpy(s.tmp_sel, s.chosen, n * sizeof(int))
    sort_asc(s.tmp_sel, n)
    if obj < s.best_obj:
        better = 1
    elif obj == s.best_obj:
        # lexicographic on sorted tuples; a proper prefix is smaller
        better = 0
        i = 0
        while True:
            if i == n:
                better = i < s.best_len
                break
            if i == s.best_len:
                break
            if s.tmp_sel[i] != s.best_sel[i]:
                better = s.tmp_sel[i] < s.best_sel[i]
                break
            i += 1
    else:
        better = 0
    if better:
        s.best_obj = obj
        s.best_len = n
        memcpy(s.best_sel, s.tmp_sel, n * sizeof(int))


cdef int visit(Search* s, int depth, long long count, long long dsum) noexcept nogil:
    """Returns 1 when the budget is exhausted."""
    cdef int W = s.W, CW = s.CW, ns = s.ns
    cdef uint64_t* cov = s.covered + depth * W
    cdef uint64_t* allw = s.allowed + depth * CW
    cdef uint64_t* lm = s.livemask + depth * CW
    cdef int* live = s.live + depth * ns
    cdef int* gains = s.gains + depth * ns
    cdef int* opts = s.opts + depth * ns
    cdef uint64_t* ccov
    cdef uint64_t* callw
    cdef const uint64_t* row
    cdef uint64_t word, gm
    cdef int w, i, j, k, c, g, n_live, deficit, slack, m, total, union_count
    cdef int top, pick, target, fewest, n_opts, cnt
    cdef long long dlb

    s.nodes += 1
    if s.node_limit >= 0 and s.nodes > s.node_limit:
        s.exhausted = 1
        return 1
    if s.deadline >= 0 and (s.nodes & 1023) == 0 and now() > s.deadline:
        s.exhausted = 1
        return 1

    c = 0
    for w in range(W):
        c += cp_popcount(cov[w])
    if c >= s.need:
        record_leaf(s, count, dsum)
        return 0

    # live candidates (positive marginal gain) in ascending index order
    n_live = 0
    memset(lm, 0, CW * sizeof(uint64_t))
    memset(s.scratch, 0, W * sizeof(uint64_t))
    for w in range(CW):
        word = allw[w]
        while word:
            i = w * 64 + cp_ctz(word)
            word &= word - 1
            row = s.masks + i * W
            g = 0
            for j in range(W):
                gm = row[j] & ~cov[j]
                g += cp_popcount(gm)
                s.scratch[j] |= gm
            if g:
                live[n_live] = i
                gains[n_live] = g
                n_live += 1
                lm[w] |= (<uint64_t>1) << (i & 63)
    union_count = 0
    for w in range(W):
        union_count += cp_popcount(s.scratch[w])
    deficit = s.need - c
    slack = union_count - deficit
    if slack < 0:
        return 0

    memcpy(s.sortbuf, gains, n_live * sizeof(int))
    sort_desc(s.sortbuf, n_live)
    m = -1
    total = 0
    for j in range(n_live):
        total += s.sortbuf[j]
        if total >= deficit:
            m = j + 1
            break
    for j in range(n_live):
        s.sortbuf[j] = <int>s.deg[live[j]]
    sort_asc(s.sortbuf, n_live)
    dlb = 0
    for j in range(m):
        dlb += s.sortbuf[j]
    if objective(count + m, dsum + dlb, s.lam) > s.best_obj:
        return 0

    ccov = s.covered + (depth + 1) * W
    callw = s.allowed + (depth + 1) * CW

    if slack > 0:
        top = -1
        pick = -1
        for j in range(n_live):
            if gains[j] > top:
                top = gains[j]
                pick = live[j]
        row = s.masks + pick * W
        for j in range(W):
            ccov[j] = cov[j] | row[j]
        for j in range(CW):
            callw[j] = lm[j]
        callw[pick >> 6] &= ~((<uint64_t>1) << (pick & 63))
        s.chosen[s.n_chosen] = pick
        s.n_chosen += 1
        if visit(s, depth + 1, count + 1, dsum + s.deg[pick]):
            return 1
        s.n_chosen -= 1
        memcpy(ccov, cov, W * sizeof(uint64_t))
        for j in range(CW):
            callw[j] = lm[j]
        callw[pick >> 6] &= ~((<uint64_t>1) << (pick & 63))
        return visit(s, depth + 1, count, dsum)

    # target with the fewest live candidates (lowest index on ties)
    target = -1
    fewest = ns + 1
    for w in range(W):
        word = s.scratch[w]
        while word:
            k = w * 64 + cp_ctz(word)
            word &= word - 1
            cnt = 0
            for j in range(CW):
                cnt += cp_popcount(s.cols[k * CW + j] & lm[j])
            if cnt < fewest:
                fewest = cnt
                target = k
                if cnt == 1:
                    break
        if fewest == 1:
            break

    # its candidates, by gain descending then index
    n_opts = 0
    for j in range(n_live):
        i = live[j]
        if (s.masks[i * W + (target >> 6)] >> (target & 63)) & 1:
            opts[n_opts] = j
            n_opts += 1
    for i in range(1, n_opts):
        k = opts[i]
        j = i - 1
        while j >= 0 and (gains[opts[j]] < gains[k] or (gains[opts[j]] == gains[k] and live[opts[j]] > live[k])):
            opts[j + 1] = opts[j]
            j -= 1
        opts[j + 1] = k

    # allowed for children: live minus earlier siblings minus the pick
    for j in range(n_opts):
        i = live[opts[j]]
        row = s.masks + i * W
        for w in range(W):
            ccov[w] = cov[w] | row[w]
        for w in range(CW):
            callw[w] = lm[w]
        for k in range(j + 1):
            pick = live[opts[k]]
            callw[pick >> 6] &= ~((<uint64_t>1) << (pick & 63))
        s.chosen[s.n_chosen] = i
        s.n_chosen += 1
        if visit(s, depth + 1, count + 1, dsum + s.deg[i]):
            return 1
        s.n_chosen -= 1
    return 0


def _pack_rows(bits):
    """Pack a bool matrix into little-endian uint64 words per row."""
    bits = np.asarray(bits, dtype=bool)
    n, m = bits.shape
    words = (m + 63) // 64
    padded = np.zeros((n, words * 64), dtype=bool)
    padded[:, :m] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed.view("<u8").astype(np.uint64)).reshape(n, max(words, 0))


def cover_search(bits, degree, double lam, int need, double best_obj, best_sel,
                 long long node_limit=-1, double time_limit=-1.0):
    bits = np.asarray(bits, dtype=bool)
    cdef int ns = bits.shape[0], nt = bits.shape[1]
    masks_arr = _pack_rows(bits) if ns else np.zeros((0, 1), dtype=np.uint64)
    cols_arr = _pack_rows(bits.T) if nt else np.zeros((0, 1), dtype=np.uint64)
    deg_arr = np.ascontiguousarray(degree, dtype=np.int64)
    cdef int W = max(1, (nt + 63) // 64)
    cdef int CW = max(1, (ns + 63) // 64)
    if masks_arr.shape[1] != W:
        masks_arr = np.zeros((ns, W), dtype=np.uint64)
    if cols_arr.shape[1] != CW:
        cols_arr = np.zeros((nt, CW), dtype=np.uint64)
    cdef const uint64_t[:, ::1] masks_v = masks_arr
    cdef const uint64_t[:, ::1] cols_v = cols_arr
    cdef const long long[::1] deg_v = deg_arr

    cdef Search s
    cdef int depth_cap = 2 * ns + 3
    cdef int nbuf = ns if ns > 0 else 1
    s.ns = ns; s.nt = nt; s.W = W; s.CW = CW; s.need = need; s.max_depth = depth_cap
    s.lam = lam
    s.masks = &masks_v[0, 0] if ns else NULL
    s.cols = &cols_v[0, 0] if nt else NULL
    s.deg = &deg_v[0] if ns else NULL
    s.covered = <uint64_t*>malloc(depth_cap * W * sizeof(uint64_t))
    s.allowed = <uint64_t*>malloc(depth_cap * CW * sizeof(uint64_t))
    s.livemask = <uint64_t*>malloc(depth_cap * CW * sizeof(uint64_t))
    s.scratch = <uint64_t*>malloc(W * sizeof(uint64_t))
    s.live = <int*>malloc(depth_cap * nbuf * sizeof(int))
    s.gains = <int*>malloc(depth_cap * nbuf * sizeof(int))
    s.opts = <int*>malloc(depth_cap * nbuf * sizeof(int))
    s.sortbuf = <int*>malloc(nbuf * sizeof(int))
    s.chosen = <int*>malloc(nbuf * sizeof(int))
    s.best_sel = <int*>malloc(nbuf * sizeof(int))
    s.tmp_sel = <int*>malloc(nbuf * sizeof(int))
    if (s.covered == NULL or s.allowed == NULL or s.livemask == NULL or s.scratch == NULL
            or s.live == NULL or s.gains == NULL or s.opts == NULL or s.sortbuf == NULL
            or s.chosen == NULL or s.best_sel == NULL or s.tmp_sel == NULL):
        raise MemoryError()
    cdef int i
    try:
        sel = sorted(int(x) for x in best_sel)
        s.best_len = len(sel)
        for i in range(s.best_len):
            s.best_sel[i] = sel[i]
        s.best_obj = best_obj
        s.n_chosen = 0
        s.nodes = 0
        s.node_limit = node_limit
        s.exhausted = 0
        s.deadline = now() + time_limit if time_limit >= 0 else -1.0
        memset(s.covered, 0, W * sizeof(uint64_t))
        memset(s.allowed, 0, CW * sizeof(uint64_t))
        for i in range(ns):
            s.allowed[i >> 6] |= (<uint64_t>1) << (i & 63)
        with nogil:
            visit(&s, 0, 0, 0)
        result = tuple(s.best_sel[i] for i in range(s.best_len))
        return result, s.best_obj, s.nodes, bool(s.exhausted)
    finally:
        free(s.covered); free(s.allowed); free(s.livemask); free(s.scratch)
        free(s.live); free(s.gains); free(s.opts); free(s.sortbuf)
        free(s.chosen); free(s.best_sel); free(s.tmp_sel)
