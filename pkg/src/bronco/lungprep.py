"""Lung mask acquisition, mediastinum and trachea extraction, mask preprocessing.

The lung mask normally comes from an upstream segmentation supplied as a
file; when none is given, a classical fallback runs: threshold air below
-320 HU, drop the exterior air (components touching all four lateral
borders), keep the one or two largest interior air bodies, and close small
gaps.  The trachea is then found inside the mediastinum (the convex-hull
complement between the lungs) as the air component that scores highest on
size and centrality.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .grid import BinaryMask, ScalarVolume, StructuringElement
from .morphology import close, connected_components, dilate, erode, slice_convex_hull

_AIR_THRESHOLD_HU = -320.0
_MIN_LUNG_ML = 100.0
_SECOND_LUNG_RATIO = 0.3  # second component kept when at least this fraction of the largest


def fallback_lung_segmentation(ct: ScalarVolume) -> BinaryMask:
    """Classical lungs-only segmentation used when no mask file is supplied."""
    air = BinaryMask(ct.data < _AIR_THRESHOLD_HU, ct.spacing, ct.origin)
    labels, counts = connected_components(air, connectivity=26)
    nx, ny, _nz = ct.dims

    interior = []
    for lab in range(1, len(counts) + 1):
        sel = labels.data == lab
        touches = (
            sel[0, :, :].any()
            and sel[nx - 1, :, :].any()
            and sel[:, 0, :].any()
            and sel[:, ny - 1, :].any()
        )
        if not touches:
            interior.append((lab, counts[lab - 1]))

    vox_ml = ct.voxel_volume_mm3 / 1000.0
    candidates = [(lab, c) for lab, c in interior if c * vox_ml >= _MIN_LUNG_ML]
    if not candidates:
        raise ParameterError("no lungs found: no interior air component of at least 100 ml")
    candidates.sort(key=lambda t: -t[1])
    keep = [candidates[0][0]]
    if len(candidates) > 1 and candidates[1][1] >= _SECOND_LUNG_RATIO * candidates[0][1]:
        keep.append(candidates[1][0])
    lungs = np.isin(labels.data, keep)
    mask = BinaryMask(lungs, ct.spacing, ct.origin)
    return close(mask, StructuringElement.ball(2))


def extract_mediastinum(lung_mask: BinaryMask) -> BinaryMask:
    """Per-slice convex hull of the lungs minus the lungs: the inter-lung region."""
    if lung_mask.is_empty():
        raise ParameterError("lung mask is empty")
    hull = slice_convex_hull(lung_mask)
    return lung_mask.with_data(hull.data & ~lung_mask.data)


@dataclass
class TracheaCandidateScore:
    label: int
    area: float  # min-max normalized voxel count
    center_distance: float  # min-max normalized distance to the axial center line
    inverted_distance: float  # |1 - center_distance|
    score: float  # (2 * area + inverted_distance) / 3


def _minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros_like(values, dtype=float)
    return (values - lo) / (hi - lo)


def score_trachea_candidates(counts: np.ndarray, distances: np.ndarray,
                             weights: tuple[float, float] = (2.0, 1.0)) -> list[TracheaCandidateScore]:
    """Weighted size/centrality score per candidate component.

    Both the raw areas and raw distances are min-max normalized, so the
    winner is invariant to any uniform positive rescaling of either.
    """
    wa, wd = float(weights[0]), float(weights[1])
    a = _minmax(np.asarray(counts, dtype=float))
    d = _minmax(np.asarray(distances, dtype=float))
    dr = np.abs(1.0 - d)
    scores = (wa * a + wd * dr) / (wa + wd)
    return [
        TracheaCandidateScore(lab + 1, float(a[lab]), float(d[lab]), float(dr[lab]), float(scores[lab]))
        for lab in range(len(a))
    ]


def segment_trachea(ct: ScalarVolume, mediastinum: BinaryMask,
                    weights: tuple[float, float] = (2.0, 1.0)) -> BinaryMask:
    """Pick the most central large air component of the mediastinum.

    The masked CT is thresholded between its minimum and a third of its
    minimum (about [-1024, -341] for HU data), labeled at 26-connectivity,
    and each component scored on normalized size and inverted distance to
    the axial center line with weights 2 and 1 by default.
    """
    if mediastinum.is_empty():
        raise ParameterError("mediastinum mask is empty")
    masked = ct.data[mediastinum.data]
    lo = float(masked.min())
    hi = lo / 3.0
    air = mediastinum.data & (ct.data >= lo) & (ct.data <= hi)
    if not air.any():
        raise ParameterError("no air in mediastinum after thresholding")
    labels, counts = connected_components(
        BinaryMask(air, ct.spacing, ct.origin), connectivity=26
    )
    n = len(counts)
    if n == 1:
        return labels.mask_of(1)

    nx, ny, _nz = ct.dims
    cx, cy = nx / 2.0, ny / 2.0
    distances = np.zeros(n)
    for lab in range(1, n + 1):
        vox = np.argwhere(labels.data == lab)
        d = np.sqrt((vox[:, 0] - cx) ** 2 + (vox[:, 1] - cy) ** 2)
        distances[lab - 1] = float(d.min())
    scored = score_trachea_candidates(counts, distances, weights)
    best = max(scored, key=lambda s: (s.score, -s.label))
    return labels.mask_of(best.label)


def preprocess_masks(
    lung: BinaryMask,
    trachea: BinaryMask,
    trachea_dilation: tuple[int, int, int] = (20, 20, 20),
    noise_erosion_size: tuple[int, int] = (3, 3),
) -> BinaryMask:
    """Working mask: box-dilated trachea joined to the lungs, then a per-slice
    erosion that removes 1-voxel over-segmentation noise (e.g. rib fragments).
    The prior dilation protects the main bronchus region from the erosion."""
    if not lung.same_geometry(trachea):
        raise ParameterError("lung and trachea masks have different geometry")
    if trachea.is_empty():
        combined = lung
    else:
        grown = dilate(trachea, StructuringElement.box(trachea_dilation))
        combined = lung.with_data(lung.data | grown.data)
    return erode(combined, StructuringElement.box(noise_erosion_size))
