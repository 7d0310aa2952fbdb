# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the pure kernels (see pure.py for the semantics).

Both backends must return identical results: same subiteration order, same
scan order, same simple-point characterization, same heap tie-breaking.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, sqrt
from libc.stdlib cimport free, malloc, realloc

cnp.import_array()

# ---------------------------------------------------------------------------
# 3x3x3 neighborhood tables (cell index = (dx+1)*9 + (dy+1)*3 + (dz+1))
# ---------------------------------------------------------------------------

cdef int _POS[27][3]
cdef int _ADJ26[27][26]
cdef int _ADJ26_N[27]
cdef int _ADJ6[27][6]
cdef int _ADJ6_N[27]
cdef unsigned char _IS_FACE[27]
cdef unsigned char _IS_N18[27]

cdef void _init_tables() noexcept:
    cdef int i, j, k, la, lb, dmax, dsum, dx, dy, dz
    i = 0
    for dx in range(-1, 2):
        for dy in range(-1, 2):
            for dz in range(-1, 2):
                _POS[i][0] = dx
                _POS[i][1] = dy
                _POS[i][2] = dz
                i += 1
    for i in range(27):
        _ADJ26_N[i] = 0
        _ADJ6_N[i] = 0
        la = abs(_POS[i][0]) + abs(_POS[i][1]) + abs(_POS[i][2])
        _IS_FACE[i] = 1 if la == 1 else 0
        _IS_N18[i] = 1 if 1 <= la <= 2 else 0
    for i in range(27):
        if i == 13:
            continue
        la = abs(_POS[i][0]) + abs(_POS[i][1]) + abs(_POS[i][2])
        for j in range(27):
            if j == 13 or j == i:
                continue
            dmax = 0
            dsum = 0
            for k in range(3):
                lb = abs(_POS[i][k] - _POS[j][k])
                dsum += lb
                if lb > dmax:
                    dmax = lb
            if dmax == 1:
                _ADJ26[i][_ADJ26_N[i]] = j
                _ADJ26_N[i] += 1
            if dsum == 1 and _IS_N18[i] and _IS_N18[j]:
                _ADJ6[i][_ADJ6_N[i]] = j
                _ADJ6_N[i] += 1

_init_tables()


cdef inline bint _is_simple(const unsigned char* img, Py_ssize_t sx, Py_ssize_t sy,
                            Py_ssize_t x, Py_ssize_t y, Py_ssize_t z) noexcept nogil:
    cdef unsigned char nb[27]
    cdef unsigned char seen[27]
    cdef int stack[27]
    cdef int i, u, v, top, comp, k, dx, dy, dz
    i = 0
    for dx in range(-1, 2):
        for dy in range(-1, 2):
            for dz in range(-1, 2):
                nb[i] = img[(x + dx) * sx + (y + dy) * sy + (z + dz)]
                i += 1
    # Condition 1: one 26-component of foreground around the center.
    for i in range(27):
        seen[i] = 0
    comp = 0
    for i in range(27):
        if i == 13 or not nb[i] or seen[i]:
            continue
        comp += 1
        if comp > 1:
            return 0
        top = 0
        stack[top] = i
        top += 1
        seen[i] = 1
        while top > 0:
            top -= 1
            u = stack[top]
            for k in range(_ADJ26_N[u]):
                v = _ADJ26[u][k]
                if nb[v] and not seen[v]:
                    seen[v] = 1
                    stack[top] = v
                    top += 1
    if comp != 1:
        return 0
    # Condition 2: one 6-component of background in the 18-neighborhood
    # touching a face neighbor of the center.
    for i in range(27):
        seen[i] = 0
    comp = 0
    for i in range(27):
        if not _IS_FACE[i] or nb[i] or seen[i]:
            continue
        comp += 1
        if comp > 1:
            return 0
        top = 0
        stack[top] = i
        top += 1
        seen[i] = 1
        while top > 0:
            top -= 1
            u = stack[top]
            for k in range(_ADJ6_N[u]):
                v = _ADJ6[u][k]
                if not nb[v] and not seen[v]:
                    seen[v] = 1
                    stack[top] = v
                    top += 1
    return comp == 1


def thin_image(img):
    """Compiled 6-subiteration thinning; mirrors pure.thin_image exactly."""
    cdef cnp.ndarray[cnp.uint8_t, ndim=3] padded = np.zeros(
        (img.shape[0] + 2, img.shape[1] + 2, img.shape[2] + 2), dtype=np.uint8)
    padded[1:-1, 1:-1, 1:-1] = np.asarray(img) != 0
    cdef unsigned char* p = <unsigned char*> cnp.PyArray_DATA(padded)
    cdef Py_ssize_t nx = padded.shape[0], ny = padded.shape[1], nz = padded.shape[2]
    cdef Py_ssize_t sx = ny * nz, sy = nz
    cdef int dirs[6][3]
    dirs[0][0] = 0; dirs[0][1] = 0; dirs[0][2] = 1
    dirs[1][0] = 0; dirs[1][1] = 0; dirs[1][2] = -1
    dirs[2][0] = 0; dirs[2][1] = 1; dirs[2][2] = 0
    dirs[3][0] = 0; dirs[3][1] = -1; dirs[3][2] = 0
    dirs[4][0] = 1; dirs[4][1] = 0; dirs[4][2] = 0
    dirs[5][0] = -1; dirs[5][1] = 0; dirs[5][2] = 0

    cdef Py_ssize_t cap = 4096
    cdef Py_ssize_t* cand = <Py_ssize_t*> malloc(cap * sizeof(Py_ssize_t))
    if cand == NULL:
        raise MemoryError()
    cdef Py_ssize_t ncand, x, y, z, i, base
    cdef int d, dx, dy, dz, cnt, ex, ey, ez
    cdef bint changed = True
    try:
        while changed:
            changed = False
            for d in range(6):
                dx = dirs[d][0]
                dy = dirs[d][1]
                dz = dirs[d][2]
                ncand = 0
                with nogil:
                    for x in range(1, nx - 1):
                        for y in range(1, ny - 1):
                            for z in range(1, nz - 1):
                                base = x * sx + y * sy + z
                                if not p[base]:
                                    continue
                                if p[(x + dx) * sx + (y + dy) * sy + (z + dz)]:
                                    continue
                                cnt = 0
                                for ex in range(-1, 2):
                                    for ey in range(-1, 2):
                                        for ez in range(-1, 2):
                                            cnt += p[(x + ex) * sx + (y + ey) * sy + (z + ez)]
                                cnt -= 1  # center
                                if cnt <= 1:
                                    continue
                                if not _is_simple(p, sx, sy, x, y, z):
                                    continue
                                if ncand == cap:
                                    with gil:
                                        cap *= 2
                                        cand = <Py_ssize_t*> realloc(cand, cap * sizeof(Py_ssize_t))
                                        if cand == NULL:
                                            raise MemoryError()
                                cand[ncand] = base
                                ncand += 1
                    # Sequential recheck against the live image; the
                    # endpoint condition is rechecked too, otherwise a
                    # candidate turned chain-end by earlier deletions
                    # would unzip the whole chain.
                    for i in range(ncand):
                        base = cand[i]
                        x = base // sx
                        y = (base - x * sx) // sy
                        z = base - x * sx - y * sy
                        cnt = 0
                        for ex in range(-1, 2):
                            for ey in range(-1, 2):
                                for ez in range(-1, 2):
                                    cnt += p[(x + ex) * sx + (y + ey) * sy + (z + ez)]
                        cnt -= 1
                        if cnt > 1 and _is_simple(p, sx, sy, x, y, z):
                            p[base] = 0
                            changed = True
    finally:
        free(cand)
    return np.ascontiguousarray(padded[1:-1, 1:-1, 1:-1])


# ---------------------------------------------------------------------------
# Fast marching
# ---------------------------------------------------------------------------

cdef struct Heap:
    double* t
    Py_ssize_t* idx
    Py_ssize_t size
    Py_ssize_t cap


cdef inline bint _heap_less(Heap* h, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    if h.t[a] != h.t[b]:
        return h.t[a] < h.t[b]
    return h.idx[a] < h.idx[b]


cdef inline void _heap_swap(Heap* h, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    cdef double td = h.t[a]
    cdef Py_ssize_t ti = h.idx[a]
    h.t[a] = h.t[b]
    h.idx[a] = h.idx[b]
    h.t[b] = td
    h.idx[b] = ti


cdef int _heap_push(Heap* h, double t, Py_ssize_t idx) noexcept nogil:
    cdef Py_ssize_t i, parent
    if h.size == h.cap:
        h.cap *= 2
        h.t = <double*> realloc(h.t, h.cap * sizeof(double))
        h.idx = <Py_ssize_t*> realloc(h.idx, h.cap * sizeof(Py_ssize_t))
        if h.t == NULL or h.idx == NULL:
            return -1
    i = h.size
    h.t[i] = t
    h.idx[i] = idx
    h.size += 1
    while i > 0:
        parent = (i - 1) // 2
        if _heap_less(h, i, parent):
            _heap_swap(h, i, parent)
            i = parent
        else:
            break
    return 0


cdef void _heap_pop(Heap* h, double* t, Py_ssize_t* idx) noexcept nogil:
    cdef Py_ssize_t i = 0, left, right, smallest
    t[0] = h.t[0]
    idx[0] = h.idx[0]
    h.size -= 1
    h.t[0] = h.t[h.size]
    h.idx[0] = h.idx[h.size]
    while True:
        left = 2 * i + 1
        right = left + 1
        smallest = i
        if left < h.size and _heap_less(h, left, smallest):
            smallest = left
        if right < h.size and _heap_less(h, right, smallest):
            smallest = right
        if smallest == i:
            break
        _heap_swap(h, i, smallest)
        i = smallest


cdef inline double _solve(double* times, unsigned char* known,
                          Py_ssize_t x, Py_ssize_t y, Py_ssize_t z,
                          Py_ssize_t nx, Py_ssize_t ny, Py_ssize_t nz,
                          double hx, double hy, double hz, double s) noexcept nogil:
    cdef double a[3]
    cdef double h[3]
    cdef double best, tv, A, B, C, disc, t, ta, th
    cdef Py_ssize_t sx = ny * nz, sy = nz, base, q
    cdef int na = 0, axis, m, i, j

    for axis in range(3):
        best = INFINITY
        if axis == 0:
            if x > 0 and known[(x - 1) * sx + y * sy + z]:
                best = times[(x - 1) * sx + y * sy + z]
            if x < nx - 1 and known[(x + 1) * sx + y * sy + z]:
                tv = times[(x + 1) * sx + y * sy + z]
                if tv < best:
                    best = tv
            th = hx
        elif axis == 1:
            if y > 0 and known[x * sx + (y - 1) * sy + z]:
                best = times[x * sx + (y - 1) * sy + z]
            if y < ny - 1 and known[x * sx + (y + 1) * sy + z]:
                tv = times[x * sx + (y + 1) * sy + z]
                if tv < best:
                    best = tv
            th = hy
        else:
            if z > 0 and known[x * sx + y * sy + z - 1]:
                best = times[x * sx + y * sy + z - 1]
            if z < nz - 1 and known[x * sx + y * sy + z + 1]:
                tv = times[x * sx + y * sy + z + 1]
                if tv < best:
                    best = tv
            th = hz
        if best < INFINITY:
            a[na] = best
            h[na] = th
            na += 1
    # insertion sort by a
    for i in range(1, na):
        ta = a[i]
        th = h[i]
        j = i - 1
        while j >= 0 and a[j] > ta:
            a[j + 1] = a[j]
            h[j + 1] = h[j]
            j -= 1
        a[j + 1] = ta
        h[j + 1] = th
    for m in range(na, 0, -1):
        A = 0.0
        B = 0.0
        C = 0.0
        for i in range(m):
            tv = 1.0 / (h[i] * h[i])
            A += tv
            B += a[i] * tv
            C += a[i] * a[i] * tv
        C -= s * s
        disc = B * B - A * C
        if disc < 0.0:
            continue
        t = (B + sqrt(disc)) / A
        if m == 1 or t >= a[m - 1]:
            return t
    return INFINITY


def fast_march(speed, spacing, seed, double stop_time):
    """Compiled eikonal first-arrival solver; mirrors pure.fast_march exactly."""
    cdef cnp.ndarray[cnp.float64_t, ndim=3] slowness = 1.0 / np.ascontiguousarray(speed, dtype=np.float64)
    cdef Py_ssize_t nx = slowness.shape[0], ny = slowness.shape[1], nz = slowness.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] times_arr = np.full((nx, ny, nz), np.inf, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=3] known_arr = np.zeros((nx, ny, nz), dtype=np.uint8)
    cdef double* times = <double*> cnp.PyArray_DATA(times_arr)
    cdef unsigned char* known = <unsigned char*> cnp.PyArray_DATA(known_arr)
    cdef double* slw = <double*> cnp.PyArray_DATA(slowness)
    cdef double hx = float(spacing[0]), hy = float(spacing[1]), hz = float(spacing[2])
    cdef Py_ssize_t sx = ny * nz, sy = nz
    cdef Py_ssize_t seedf = (<Py_ssize_t> seed[0]) * sx + (<Py_ssize_t> seed[1]) * sy + (<Py_ssize_t> seed[2])

    cdef Heap heap
    heap.cap = 1 << 12
    heap.size = 0
    heap.t = <double*> malloc(heap.cap * sizeof(double))
    heap.idx = <Py_ssize_t*> malloc(heap.cap * sizeof(Py_ssize_t))
    if heap.t == NULL or heap.idx == NULL:
        free(heap.t)
        free(heap.idx)
        raise MemoryError()

    times[seedf] = 0.0
    cdef double t, tt, last = 0.0
    cdef Py_ssize_t flat, x, y, z, ux, uy, uz, ubase
    cdef int d, fail = 0, order_violation = 0
    cdef int dxs[6]
    cdef int dys[6]
    cdef int dzs[6]
    dxs[0] = 1; dys[0] = 0; dzs[0] = 0
    dxs[1] = -1; dys[1] = 0; dzs[1] = 0
    dxs[2] = 0; dys[2] = 1; dzs[2] = 0
    dxs[3] = 0; dys[3] = -1; dzs[3] = 0
    dxs[4] = 0; dys[4] = 0; dzs[4] = 1
    dxs[5] = 0; dys[5] = 0; dzs[5] = -1

    cdef Py_ssize_t svx = <Py_ssize_t> seed[0], svy = <Py_ssize_t> seed[1], svz = <Py_ssize_t> seed[2]
    cdef Py_ssize_t vx, vy, vz
    cdef int idx_, idy, idz, half
    cdef double dist, t0, s0, sm
    try:
        with nogil:
            fail = _heap_push(&heap, 0.0, seedf)
            # Straight-ray initialization of the two shells around the seed
            # (see pure.py); ray time takes the maximum slowness of the
            # crossed cells so obstacles are never undercut.
            for idx_ in range(-2, 3):
                for idy in range(-2, 3):
                    for idz in range(-2, 3):
                        if idx_ == 0 and idy == 0 and idz == 0:
                            continue
                        vx = svx + idx_
                        vy = svy + idy
                        vz = svz + idz
                        if vx < 0 or vx >= nx or vy < 0 or vy >= ny or vz < 0 or vz >= nz:
                            continue
                        ubase = vx * sx + vy * sy + vz
                        s0 = slw[ubase]
                        for half in range(2):
                            if half == 0:
                                sm = slw[(svx + (idx_ >> 1)) * sx + (svy + (idy >> 1)) * sy + (svz + (idz >> 1))]
                            else:
                                sm = slw[(svx - ((-idx_) >> 1)) * sx + (svy - ((-idy) >> 1)) * sy + (svz - ((-idz) >> 1))]
                            if sm > s0:
                                s0 = sm
                        dist = sqrt((idx_ * hx) ** 2 + (idy * hy) ** 2 + (idz * hz) ** 2)
                        t0 = dist * s0
                        if t0 < times[ubase]:
                            times[ubase] = t0
                            fail = _heap_push(&heap, t0, ubase)
                            if fail != 0:
                                break
            while heap.size > 0 and fail == 0:
                _heap_pop(&heap, &t, &flat)
                if known[flat]:
                    continue
                if t > stop_time:
                    break
                if t < last:
                    order_violation = 1
                    break
                last = t
                known[flat] = 1
                x = flat // sx
                y = (flat - x * sx) // sy
                z = flat - x * sx - y * sy
                for d in range(6):
                    ux = x + dxs[d]
                    uy = y + dys[d]
                    uz = z + dzs[d]
                    if ux < 0 or ux >= nx or uy < 0 or uy >= ny or uz < 0 or uz >= nz:
                        continue
                    ubase = ux * sx + uy * sy + uz
                    if known[ubase]:
                        continue
                    tt = _solve(times, known, ux, uy, uz, nx, ny, nz, hx, hy, hz, slw[ubase])
                    if tt < times[ubase]:
                        times[ubase] = tt
                        fail = _heap_push(&heap, tt, ubase)
                        if fail != 0:
                            break
    finally:
        free(heap.t)
        free(heap.idx)
    if fail != 0:
        raise MemoryError()
    if order_violation:
        raise AssertionError("fast marching finalized a decreasing arrival time")
    out = np.where(known_arr.astype(bool), times_arr, np.inf)
    return out, known_arr
