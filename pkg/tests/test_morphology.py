"""Morphology, connected components and hull tests against brute-force oracles."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bronco.errors import ParameterError
from bronco.grid import BinaryMask, StructuringElement
from bronco.morphology import (
    connected_components,
    dilate,
    erode,
    morphology,
    slice_convex_hull,
)

# ---------------------------------------------------------------------------
# Oracles: direct per-voxel definitions, independent of the implementations
# ---------------------------------------------------------------------------


def dilate_oracle(data: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """out[p] = True iff p = q + e for some set q and element offset e."""
    out = np.zeros_like(data)
    dims = data.shape
    for q in np.argwhere(data):
        for e in offsets:
            p = q + e
            if (0 <= p).all() and (p < dims).all():
                out[tuple(p)] = True
    return out


def erode_oracle(data: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """out[p] = True iff p + e is set for every element offset e (outside = background)."""
    out = np.zeros_like(data)
    for p in np.argwhere(data):
        ok = True
        for e in offsets:
            q = p + e
            if not ((0 <= q).all() and (q < data.shape).all() and data[tuple(q)]):
                ok = False
                break
        if ok:
            out[tuple(p)] = True
    return out


def flood_fill_labels(data: np.ndarray, connectivity: int) -> np.ndarray:
    """BFS flood fill, labels in x-fastest first-voxel order."""
    from collections import deque

    if connectivity == 26:
        nbrs = [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
                if (dx, dy, dz) != (0, 0, 0)]
    else:
        nbrs = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    labels = np.zeros(data.shape, dtype=np.int32)
    nx, ny, nz = data.shape
    nxt = 1
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):  # x fastest
                if not data[x, y, z] or labels[x, y, z]:
                    continue
                q = deque([(x, y, z)])
                labels[x, y, z] = nxt
                while q:
                    cx, cy, cz = q.popleft()
                    for dx, dy, dz in nbrs:
                        px, py, pz = cx + dx, cy + dy, cz + dz
                        if (0 <= px < nx and 0 <= py < ny and 0 <= pz < nz
                                and data[px, py, pz] and not labels[px, py, pz]):
                            labels[px, py, pz] = nxt
                            q.append((px, py, pz))
                nxt += 1
    return labels


def reorder_like_spec(labels: np.ndarray) -> np.ndarray:
    """Relabel by decreasing size, ties by smallest x-fastest first index."""
    n = labels.max()
    if n == 0:
        return labels
    flat = labels.flatten(order="F")
    counts = np.bincount(flat, minlength=n + 1)
    first = np.full(n + 1, flat.size, dtype=np.int64)
    for i, lab in enumerate(flat):
        if lab and first[lab] == flat.size:
            first[lab] = i
    order = sorted(range(1, n + 1), key=lambda lab: (-counts[lab], first[lab]))
    remap = np.zeros(n + 1, dtype=np.int32)
    for new, old in enumerate(order, start=1):
        remap[old] = new
    return remap[labels]


def _mask(data):
    return BinaryMask(np.asarray(data, dtype=bool))


def test_single_voxel_box_dilation_gives_27():
    data = np.zeros((7, 7, 7), bool)
    data[3, 3, 3] = True
    out = dilate(_mask(data), StructuringElement.box((3, 3, 3)))
    assert out.count == 27


def test_single_voxel_even_box_dilation_gives_full_block():
    data = np.zeros((30, 30, 30), bool)
    data[15, 15, 15] = True
    out = dilate(_mask(data), StructuringElement.box((20, 20, 20)))
    assert out.count == 20 ** 3


def test_opening_is_anti_extensive():
    rng = np.random.default_rng(0)
    data = rng.random((12, 12, 12)) < 0.6
    elem = StructuringElement.ball(1)
    opened = dilate(erode(_mask(data), elem), elem)
    assert not (opened.data & ~data).any()


def test_erosion_matches_bruteforce_oracle_ball():
    rng = np.random.default_rng(1)
    data = rng.random((16, 16, 16)) < 0.7
    elem = StructuringElement.ball(1)
    got = erode(_mask(data), elem)
    want = erode_oracle(data, elem.offsets())
    assert np.array_equal(got.data, want)


@pytest.mark.parametrize("size", [(3, 3, 3), (4, 4, 4), (2, 3, 5)])
def test_box_morphology_matches_oracle_even_and_odd(size):
    rng = np.random.default_rng(sum(size))
    data = rng.random((16, 16, 16)) < 0.5
    elem = StructuringElement.box(size)
    assert np.array_equal(dilate(_mask(data), elem).data, dilate_oracle(data, elem.offsets()))
    assert np.array_equal(erode(_mask(data), elem).data, erode_oracle(data, elem.offsets()))


def test_large_even_box_dilation_matches_oracle_sparse():
    # A sparse mask keeps the brute-force oracle tractable for the 20^3 box.
    rng = np.random.default_rng(8)
    data = np.zeros((32, 32, 32), bool)
    for p in rng.integers(0, 32, size=(12, 3)):
        data[tuple(p)] = True
    elem = StructuringElement.box((20, 20, 20))
    assert np.array_equal(dilate(_mask(data), elem).data, dilate_oracle(data, elem.offsets()))


def test_2d_elements_apply_per_slice():
    data = np.zeros((7, 7, 3), bool)
    data[3, 3, 1] = True
    out = dilate(_mask(data), StructuringElement.box((3, 3)))
    assert out.count == 9
    assert out.data[:, :, 1].sum() == 9


def test_element_larger_than_volume_rejected():
    with pytest.raises(ParameterError):
        dilate(_mask(np.zeros((4, 4, 4), bool)), StructuringElement.box((5, 3, 3)))


def test_bad_op_rejected():
    with pytest.raises(ParameterError):
        morphology(_mask(np.zeros((4, 4, 4), bool)), StructuringElement.ball(1), "open")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 9))
def test_dilation_extensive_erosion_anti_extensive(seed):
    rng = np.random.default_rng(seed)
    data = rng.random((10, 10, 10)) < rng.uniform(0.2, 0.8)
    elem = StructuringElement.ball(1)
    assert not (data & ~dilate(_mask(data), elem).data).any()
    assert not (erode(_mask(data), elem).data & ~data).any()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 9))
def test_morphology_monotone_in_input(seed):
    rng = np.random.default_rng(seed)
    small = rng.random((10, 10, 10)) < 0.3
    big = small | (rng.random((10, 10, 10)) < 0.2)
    elem = StructuringElement.box((3, 3, 3))
    assert not (dilate(_mask(small), elem).data & ~dilate(_mask(big), elem).data).any()
    assert not (erode(_mask(small), elem).data & ~erode(_mask(big), elem).data).any()


def test_two_isolated_voxels_two_components():
    data = np.zeros((8, 8, 8), bool)
    data[1, 1, 1] = data[6, 6, 6] = True
    labels, counts = connected_components(_mask(data), 26)
    assert len(counts) == 2 and (counts == 1).all()


def test_corner_touch_connectivity_rule():
    data = np.zeros((4, 4, 4), bool)
    data[1, 1, 1] = data[2, 2, 2] = True
    _, counts26 = connected_components(_mask(data), 26)
    _, counts6 = connected_components(_mask(data), 6)
    assert len(counts26) == 1
    assert len(counts6) == 2


def test_empty_mask_empty_label_set():
    labels, counts = connected_components(_mask(np.zeros((4, 4, 4), bool)), 26)
    assert len(counts) == 0 and labels.max_label == 0


@pytest.mark.parametrize("connectivity", [6, 26])
def test_components_match_flood_fill(connectivity):
    rng = np.random.default_rng(4)
    data = rng.random((20, 20, 20)) < 0.35
    got, counts = connected_components(_mask(data), connectivity)
    want = reorder_like_spec(flood_fill_labels(data, connectivity))
    assert np.array_equal(got.data, want)
    assert (np.diff(counts) <= 0).all()


def test_component_partition_property():
    rng = np.random.default_rng(5)
    data = rng.random((16, 16, 16)) < 0.4
    labels, counts = connected_components(_mask(data), 26)
    assert ((labels.data > 0) == data).all()
    assert counts.sum() == data.sum()


# ---------------------------------------------------------------------------
# slice_convex_hull
# ---------------------------------------------------------------------------


def hull_membership_oracle(points: np.ndarray, query: np.ndarray) -> bool:
    """Half-plane test: the query lies in the hull iff it is on the inner
    side of every directed point pair that has the whole set on that side."""
    if len(points) == 1:
        return bool((points[0] == query).all())

    def cross(a, b, p):
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])

    for i in range(len(points)):
        for j in range(len(points)):
            if i == j:
                continue
            a, b = points[i], points[j]
            if all(cross(a, b, p) >= 0 for p in points):  # hull edge candidate
                if cross(a, b, query) < 0:
                    return False
    return True


def test_hull_single_voxel_slice():
    data = np.zeros((5, 5, 2), bool)
    data[2, 3, 0] = True
    out = slice_convex_hull(_mask(data))
    assert np.array_equal(out.data, data)


def test_hull_four_corners_fill_square():
    data = np.zeros((8, 8, 1), bool)
    for x, y in [(1, 1), (1, 5), (5, 1), (5, 5)]:
        data[x, y, 0] = True
    out = slice_convex_hull(_mask(data))
    assert out.data[1:6, 1:6, 0].all()
    assert out.count == 25


def test_hull_matches_half_plane_oracle():
    rng = np.random.default_rng(6)
    data = np.zeros((32, 32, 2), bool)
    pts = rng.integers(2, 30, size=(12, 2))
    for x, y in pts:
        data[x, y, 0] = True
    out = slice_convex_hull(_mask(data))
    points = np.unique(pts, axis=0)
    for x in range(32):
        for y in range(32):
            want = hull_membership_oracle(points, np.array([x, y]))
            assert out.data[x, y, 0] == want, (x, y)


def test_hull_idempotent():
    rng = np.random.default_rng(7)
    data = rng.random((20, 20, 4)) < 0.1
    once = slice_convex_hull(_mask(data))
    twice = slice_convex_hull(once)
    assert np.array_equal(once.data, twice.data)


def test_hull_empty_slices_stay_empty():
    data = np.zeros((6, 6, 3), bool)
    data[2, 2, 1] = data[4, 4, 1] = True
    out = slice_convex_hull(_mask(data))
    assert not out.data[:, :, 0].any() and not out.data[:, :, 2].any()
