"""Binary morphology, connected components and per-slice convex hulls.

Out-of-bounds voxels count as background for every operation.  Box elements
run as separable 1D passes (even extents use the floor-center convention,
center index = size // 2); ball elements use their explicit footprint.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage as ndi

from .errors import ParameterError
from .grid import BinaryMask, LabelMap, StructuringElement

_STRUCT_26 = np.ones((3, 3, 3), dtype=bool)
_STRUCT_6 = ndi.generate_binary_structure(3, 1)


def _check_element(mask: BinaryMask, elem: StructuringElement) -> np.ndarray:
    fp = elem.footprint()
    if any(f > d for f, d in zip(fp.shape, mask.dims)):
        raise ParameterError(
            f"structuring element extent {fp.shape} exceeds volume dims {mask.dims}"
        )
    return fp


def _box_filter(data: np.ndarray, sizes, op: str) -> np.ndarray:
    # Separable 1D passes.  For a full size s with center c = s // 2 the
    # element offsets are [-c, s-1-c]; dilation needs the reflected window,
    # which lands on scipy origin -1 for even sizes and 0 for odd ones.
    out = data.astype(np.uint8)
    for axis, s in enumerate(sizes):
        if s == 1:
            continue
        if op == "dilate":
            out = ndi.maximum_filter1d(out, size=s, axis=axis, mode="constant",
                                       cval=0, origin=-1 if s % 2 == 0 else 0)
        else:
            out = ndi.minimum_filter1d(out, size=s, axis=axis, mode="constant",
                                       cval=0, origin=0)
    return out.astype(bool)


def morphology(mask: BinaryMask, elem: StructuringElement, op: str) -> BinaryMask:
    """Minkowski dilation or erosion of a mask by a structuring element."""
    if op not in ("dilate", "erode"):
        raise ParameterError(f"op must be 'dilate' or 'erode', got {op!r}")
    fp = _check_element(mask, elem)
    if elem.shape == "box":
        sizes = fp.shape
        out = _box_filter(mask.data, sizes, op)
    else:
        if op == "dilate":
            out = ndi.binary_dilation(mask.data, structure=fp)
        else:
            out = ndi.binary_erosion(mask.data, structure=fp, border_value=0)
    return mask.with_data(out)


def dilate(mask: BinaryMask, elem: StructuringElement) -> BinaryMask:
    return morphology(mask, elem, "dilate")


def erode(mask: BinaryMask, elem: StructuringElement) -> BinaryMask:
    return morphology(mask, elem, "erode")


def close(mask: BinaryMask, elem: StructuringElement) -> BinaryMask:
    return erode(dilate(mask, elem), elem)


def open_(mask: BinaryMask, elem: StructuringElement) -> BinaryMask:
    return dilate(erode(mask, elem), elem)


def connected_components(mask: BinaryMask, connectivity: int = 26) -> tuple[LabelMap, np.ndarray]:
    """Label connected components, ordered by decreasing voxel count.

    Ties are broken by the smaller x-fastest linear index of the component's
    first voxel, which makes the labeling fully deterministic.  Returns the
    label map and the per-label voxel counts (counts[0] is label 1).
    """
    if connectivity not in (6, 26):
        raise ParameterError(f"connectivity must be 6 or 26, got {connectivity}")
    structure = _STRUCT_26 if connectivity == 26 else _STRUCT_6
    raw, n = ndi.label(mask.data, structure=structure)
    if n == 0:
        return LabelMap(np.zeros(mask.dims, dtype=np.int32), mask.spacing, mask.origin), np.zeros(0, dtype=np.int64)
    flat = raw.flatten(order="F")
    counts = np.bincount(flat, minlength=n + 1)[1:]
    labels_seen, first_idx = np.unique(flat, return_index=True)
    first = np.zeros(n + 1, dtype=np.int64)
    first[labels_seen] = first_idx
    order = sorted(range(1, n + 1), key=lambda lab: (-counts[lab - 1], first[lab]))
    remap = np.zeros(n + 1, dtype=np.int32)
    for new, old in enumerate(order, start=1):
        remap[old] = new
    out = remap[raw]
    return LabelMap(out, mask.spacing, mask.origin), counts[np.array(order) - 1]


def _hull_ccw(points: np.ndarray) -> np.ndarray:
    """Convex hull of integer 2D points (Andrew monotone chain), CCW order."""
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def _fill_hull_2d(slice_mask: np.ndarray) -> np.ndarray:
    """Fill voxels whose centers lie inside (or on) the hull of the set voxels."""
    pts = np.argwhere(slice_mask)
    if len(pts) == 0:
        return slice_mask.copy()
    hull = _hull_ccw(pts)
    out = np.zeros_like(slice_mask)
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    gx, gy = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1), indexing="ij")
    if len(hull) == 1:
        out[hull[0][0], hull[0][1]] = True
        return out
    if len(hull) == 2:
        # Degenerate (collinear) hull: lattice points exactly on the segment.
        a, b = hull
        d = b - a
        px, py = gx - a[0], gy - a[1]
        on_line = px * d[1] - py * d[0] == 0
        t = px * d[0] + py * d[1]
        inside = on_line & (t >= 0) & (t <= d[0] * d[0] + d[1] * d[1])
    else:
        inside = np.ones(gx.shape, dtype=bool)
        for i in range(len(hull)):
            a = hull[i]
            b = hull[(i + 1) % len(hull)]
            # CCW polygon: interior points satisfy cross >= 0 for every edge
            inside &= (b[0] - a[0]) * (gy - a[1]) - (b[1] - a[1]) * (gx - a[0]) >= 0
    out[x0 : x1 + 1, y0 : y1 + 1] = inside
    return out


def slice_convex_hull(mask: BinaryMask) -> BinaryMask:
    """Replace every axial (fixed-z) slice by the filled 2D convex hull of its set voxels."""
    out = np.zeros(mask.dims, dtype=bool)
    data = mask.data
    for z in range(mask.dims[2]):
        sl = data[:, :, z]
        if sl.any():
            out[:, :, z] = _fill_hull_2d(sl)
    return mask.with_data(out)
