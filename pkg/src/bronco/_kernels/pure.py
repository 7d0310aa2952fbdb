"""Pure numpy/heapq implementations of the hot kernels.

These are the reference semantics for the compiled extension: both backends
must produce identical outputs (tests assert this).  The pure versions are
kept importable everywhere; the compiled ones are selected when available.

Kernels:

* ``thin_image``  - 6-subiteration medial-axis thinning of a 3D binary
  image.  A border voxel is deleted when it has more than one foreground
  neighbor (endpoint preservation) and is a (26, 6) simple point, i.e. its
  deletion changes neither the foreground nor the background topology of
  its neighborhood.  Candidates are gathered per subiteration against a
  snapshot, then rechecked sequentially against the live image, so the
  result is deterministic.
* ``fast_march``  - first-arrival eikonal solver |grad T| = 1/speed with a
  first-order Godunov upwind scheme over the 6-neighborhood and a binary
  heap front, spacing-aware, halting once the smallest trial value exceeds
  the stop time.
"""
from __future__ import annotations

import heapq

import numpy as np

# Subiteration border directions, fixed order: +z, -z, +y, -y, +x, -x.
DIRECTIONS = ((0, 0, 1), (0, 0, -1), (0, 1, 0), (0, -1, 0), (1, 0, 0), (-1, 0, 0))

_SIMPLE_CACHE: dict[int, bool] = {}


def _neighborhood_tables():
    """Adjacency tables over the 3x3x3 block (cell index = (dx+1)*9 + (dy+1)*3 + dz+1)."""
    pos = [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)]
    adj26 = [[] for _ in range(27)]
    adj6_18 = [[] for _ in range(27)]
    n18 = []
    faces = []
    for i, a in enumerate(pos):
        if i == 13:
            continue
        la = sum(abs(c) for c in a)
        if la <= 2:
            n18.append(i)
        if la == 1:
            faces.append(i)
        for j, b in enumerate(pos):
            if j == 13 or j == i:
                continue
            d = [abs(a[k] - b[k]) for k in range(3)]
            if max(d) == 1:
                adj26[i].append(j)
            if sum(d) == 1 and sum(abs(c) for c in b) <= 2 and la <= 2:
                adj6_18[i].append(j)
    return pos, adj26, adj6_18, n18, faces

_POS, _ADJ26, _ADJ6_18, _N18, _FACES = _neighborhood_tables()


def _is_simple_config(bits: int) -> bool:
    """(26, 6) simple-point test on a 26-neighborhood bitmask (center excluded)."""
    cached = _SIMPLE_CACHE.get(bits)
    if cached is not None:
        return cached

    fg = [bool(bits >> i & 1) for i in range(27)]
    # Condition 1: exactly one 26-component of foreground in the neighborhood.
    seen = [False] * 27
    comp = 0
    for i in range(27):
        if i == 13 or not fg[i] or seen[i]:
            continue
        comp += 1
        if comp > 1:
            break
        stack = [i]
        seen[i] = True
        while stack:
            u = stack.pop()
            for v in _ADJ26[u]:
                if fg[v] and not seen[v]:
                    seen[v] = True
                    stack.append(v)
    ok = comp == 1
    if ok:
        # Condition 2: exactly one 6-component of background within the
        # 18-neighborhood that touches a face neighbor of the center.
        seen = [False] * 27
        comp = 0
        for i in _FACES:
            if fg[i] or seen[i]:
                continue
            comp += 1
            if comp > 1:
                break
            stack = [i]
            seen[i] = True
            while stack:
                u = stack.pop()
                for v in _ADJ6_18[u]:
                    if not fg[v] and not seen[v]:
                        seen[v] = True
                        stack.append(v)
        ok = comp == 1
    _SIMPLE_CACHE[bits] = ok
    return ok


def _popcount(bits: int) -> int:
    return bin(bits).count("1")


def _config_bits(padded: np.ndarray, x: int, y: int, z: int) -> int:
    bits = 0
    i = 0
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                if padded[x + dx, y + dy, z + dz]:
                    bits |= 1 << i
                i += 1
    return bits


def thin_image(img: np.ndarray) -> np.ndarray:
    """Thin a binary image to a 1-voxel-wide, topology-preserving skeleton."""
    padded = np.zeros(tuple(s + 2 for s in img.shape), dtype=np.uint8)
    padded[1:-1, 1:-1, 1:-1] = img != 0
    changed = True
    while changed:
        changed = False
        for dx, dy, dz in DIRECTIONS:
            # Screen against the snapshot at subiteration start.  np.roll
            # wraps, but the wrapped values land only in the zero padding
            # ring, where no candidate can live.
            fg = padded.astype(bool)
            border = fg & ~np.roll(fg, (-dx, -dy, -dz), axis=(0, 1, 2))
            cand = border & (_neighbor_count(padded) > 1)
            survivors = [
                (x, y, z)
                for x, y, z in np.argwhere(cand)
                if _is_simple_config(_config_bits(padded, x, y, z))
            ]
            # Sequential recheck against the live image.  The endpoint
            # condition is rechecked too: earlier deletions in this
            # subiteration may have turned a candidate into a chain end,
            # and deleting it would unzip the whole chain.
            for x, y, z in survivors:
                bits = _config_bits(padded, x, y, z)
                if _popcount(bits) - 1 > 1 and _is_simple_config(bits):
                    padded[x, y, z] = 0
                    changed = True
    return padded[1:-1, 1:-1, 1:-1].copy()


def _neighbor_count(padded: np.ndarray) -> np.ndarray:
    out = np.zeros(padded.shape, dtype=np.int8)
    core = padded[1:-1, 1:-1, 1:-1]
    acc = np.zeros(core.shape, dtype=np.int8)
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                if dx == dy == dz == 0:
                    continue
                acc += padded[1 + dx : padded.shape[0] - 1 + dx,
                              1 + dy : padded.shape[1] - 1 + dy,
                              1 + dz : padded.shape[2] - 1 + dz]
    out[1:-1, 1:-1, 1:-1] = acc
    return out


def fast_march(speed: np.ndarray, spacing, seed, stop_time: float):
    """First-arrival times from a seed voxel; see the module docstring.

    Returns ``(times, known)`` where times is float64 (+inf where the front
    never arrived) and known flags the finalized voxels (all with
    times <= stop_time).
    """
    nx, ny, nz = speed.shape
    slowness = 1.0 / np.asarray(speed, dtype=np.float64)
    hx, hy, hz = (float(s) for s in spacing)
    times = np.full(speed.shape, np.inf, dtype=np.float64)
    known = np.zeros(speed.shape, dtype=np.uint8)
    sx, sy, sz = int(seed[0]), int(seed[1]), int(seed[2])
    times[sx, sy, sz] = 0.0
    heap: list[tuple[float, int]] = [(0.0, (sx * ny + sy) * nz + sz)]
    # Straight-ray initialization of the two shells around the seed: the
    # upwind stencil is coarsest right at a point source, and this removes
    # most of the source error.  The ray time uses the maximum slowness of
    # the cells the ray crosses, so it never undercuts an obstacle; as an
    # upper bound it still relaxes downward through the regular updates.
    for dx in (-2, -1, 0, 1, 2):
        for dy in (-2, -1, 0, 1, 2):
            for dz in (-2, -1, 0, 1, 2):
                if dx == dy == dz == 0:
                    continue
                vx, vy, vz = sx + dx, sy + dy, sz + dz
                if not (0 <= vx < nx and 0 <= vy < ny and 0 <= vz < nz):
                    continue
                s = slowness[vx, vy, vz]
                for mx, my, mz in ((dx // 2, dy // 2, dz // 2),
                                   (-(-dx // 2), -(-dy // 2), -(-dz // 2))):
                    s = max(s, slowness[sx + mx, sy + my, sz + mz])
                dist = np.sqrt((dx * hx) ** 2 + (dy * hy) ** 2 + (dz * hz) ** 2)
                t0 = dist * s
                if t0 < times[vx, vy, vz]:
                    times[vx, vy, vz] = t0
                    heapq.heappush(heap, (t0, (vx * ny + vy) * nz + vz))
    steps = ((1, 0, 0, hx), (-1, 0, 0, hx), (0, 1, 0, hy),
             (0, -1, 0, hy), (0, 0, 1, hz), (0, 0, -1, hz))
    last = 0.0
    while heap:
        t, flat = heapq.heappop(heap)
        x, rem = divmod(flat, ny * nz)
        y, z = divmod(rem, nz)
        if known[x, y, z]:
            continue
        if t > stop_time:
            break
        if t < last:  # finalization order must be non-decreasing
            raise AssertionError("fast marching finalized a decreasing arrival time")
        last = t
        known[x, y, z] = 1
        for dx, dy, dz, _h in steps:
            ux, uy, uz = x + dx, y + dy, z + dz
            if not (0 <= ux < nx and 0 <= uy < ny and 0 <= uz < nz) or known[ux, uy, uz]:
                continue
            tt = _update(times, known, ux, uy, uz, nx, ny, nz, hx, hy, hz,
                         slowness[ux, uy, uz])
            if tt < times[ux, uy, uz]:
                times[ux, uy, uz] = tt
                heapq.heappush(heap, (tt, (ux * ny + uy) * nz + uz))
    out = np.where(known.astype(bool), times, np.inf)
    return out, known


def _update(times, known, x, y, z, nx, ny, nz, hx, hy, hz, s) -> float:
    # Per-axis upwind value: the smaller finalized neighbor along the axis.
    avals = []
    for axis, h, n, c in ((0, hx, nx, x), (1, hy, ny, y), (2, hz, nz, z)):
        best = np.inf
        for step in (-1, 1):
            q = c + step
            if 0 <= q < n:
                if axis == 0:
                    kk, tv = known[q, y, z], times[q, y, z]
                elif axis == 1:
                    kk, tv = known[x, q, z], times[x, q, z]
                else:
                    kk, tv = known[x, y, q], times[x, y, q]
                if kk and tv < best:
                    best = tv
        if best < np.inf:
            avals.append((best, h))
    avals.sort(key=lambda p: p[0])
    # Godunov solve using the largest consistent upwind subset.
    for m in range(len(avals), 0, -1):
        A = B = C = 0.0
        for a, h in avals[:m]:
            w = 1.0 / (h * h)
            A += w
            B += a * w
            C += a * a * w
        C -= s * s
        disc = B * B - A * C
        if disc < 0.0:
            continue
        t = (B + np.sqrt(disc)) / A
        if m == 1 or t >= avals[m - 1][0]:
            return t
    return np.inf
