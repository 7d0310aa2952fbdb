"""Synthetic CT phantoms with exact ground truth.

Phantoms are built from capsule segments (cylinders with hemispherical
caps) carrying a tissue class, optional wall shells around air segments,
ellipsoidal parenchyma regions, and injectable defects (specks, nodules,
air pockets, wall holes, consolidation blobs).  Painting order puts walls
under lumens so airway lumens stay open at junctions while remaining
sealed from the parenchyma.  Ground truth is returned as a per-voxel
tissue map, per-segment branch labels, and the analytic centerline
polylines.

The anatomical layout is feet-up: the trachea sits at low z and trees grow
toward high z, so the trachea voxels with the highest axial index are the
ones facing the lungs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .grid import BinaryMask, LabelMap, ScalarVolume

DEFAULT_INTENSITIES = {
    "air": -1000.0,
    "parenchyma": -850.0,
    "vessel": -50.0,
    "wall": -50.0,
    "body": 40.0,
}

_TISSUE_IDS = {"body": 0, "air": 1, "parenchyma": 2, "vessel": 3, "wall": 4}


@dataclass
class Segment:
    start: tuple[float, float, float]  # mm
    end: tuple[float, float, float]  # mm
    radius: float  # mm
    tissue: str = "vessel"
    parent: int | None = None
    wall: float = 0.0  # wall shell thickness in mm (air segments only)


@dataclass
class Sphere:
    center: tuple[float, float, float]  # mm
    radius: float  # mm
    tissue: str = "air"


@dataclass
class PhantomSpec:
    dims: tuple[int, int, int] = (96, 96, 96)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    segments: list[Segment] = field(default_factory=list)
    lungs: list[tuple[tuple[float, float, float], tuple[float, float, float]]] = field(default_factory=list)
    intensities: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_INTENSITIES))
    noise_std: float | dict[str, float] = 0.0
    speck_count: int = 0
    defects: list[Sphere] = field(default_factory=list)
    seed: int = 0

    def to_json_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "spacing": list(self.spacing),
            "segments": [
                {"start": list(s.start), "end": list(s.end), "radius": s.radius,
                 "tissue": s.tissue, "parent": s.parent, "wall": s.wall}
                for s in self.segments
            ],
            "lungs": [[list(c), list(r)] for c, r in self.lungs],
            "intensities": dict(self.intensities),
            "noise_std": self.noise_std,
            "speck_count": self.speck_count,
            "defects": [
                {"center": list(d.center), "radius": d.radius, "tissue": d.tissue}
                for d in self.defects
            ],
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "PhantomSpec":
        return cls(
            dims=tuple(d["dims"]),
            spacing=tuple(d["spacing"]),
            segments=[Segment(tuple(s["start"]), tuple(s["end"]), float(s["radius"]),
                              s.get("tissue", "vessel"), s.get("parent"), float(s.get("wall", 0.0)))
                      for s in d.get("segments", [])],
            lungs=[(tuple(c), tuple(r)) for c, r in d.get("lungs", [])],
            intensities={**DEFAULT_INTENSITIES, **d.get("intensities", {})},
            noise_std=d.get("noise_std", 0.0),
            speck_count=int(d.get("speck_count", 0)),
            defects=[Sphere(tuple(x["center"]), float(x["radius"]), x.get("tissue", "air"))
                     for x in d.get("defects", [])],
            seed=int(d.get("seed", 0)),
        )


@dataclass
class PhantomTruth:
    tissue: LabelMap  # tissue ids per voxel (see _TISSUE_IDS)
    branch_labels: LabelMap  # segment index + 1 inside each capsule, smaller wins
    lung_region: BinaryMask  # union of the parenchyma ellipsoids
    centerlines: list[np.ndarray]  # per segment, (m, 3) voxel-space polyline
    segments: list[Segment]

    def tissue_mask(self, name: str) -> BinaryMask:
        tid = _TISSUE_IDS[name]
        return BinaryMask(self.tissue.data == tid, self.tissue.spacing, self.tissue.origin)


def _grids_mm(dims, spacing):
    ax = [np.arange(n) * s for n, s in zip(dims, spacing)]
    return np.meshgrid(*ax, indexing="ij", sparse=True)


def _capsule_mask(dims, spacing, start, end, radius) -> np.ndarray:
    """Voxels whose centers lie within radius of the segment [start, end] (mm)."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    d = end - start
    L2 = float(d @ d)
    lo = np.maximum(np.floor((np.minimum(start, end) - radius) / spacing).astype(int) - 1, 0)
    hi = np.minimum(np.ceil((np.maximum(start, end) + radius) / spacing).astype(int) + 2,
                    np.asarray(dims))
    out = np.zeros(dims, dtype=bool)
    if (lo >= hi).any():
        return out
    sub = [np.arange(lo[i], hi[i]) * spacing[i] for i in range(3)]
    X, Y, Z = np.meshgrid(*sub, indexing="ij", sparse=True)
    px, py, pz = X - start[0], Y - start[1], Z - start[2]
    if L2 == 0.0:
        dist2 = px * px + py * py + pz * pz
    else:
        t = (px * d[0] + py * d[1] + pz * d[2]) / L2
        t = np.clip(t, 0.0, 1.0)
        cx, cy, cz = px - t * d[0], py - t * d[1], pz - t * d[2]
        dist2 = cx * cx + cy * cy + cz * cz
    out[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] = dist2 <= radius * radius
    return out


def _sphere_mask(dims, spacing, center, radius) -> np.ndarray:
    return _capsule_mask(dims, spacing, center, center, radius)


def _ellipsoid_mask(dims, spacing, center, radii) -> np.ndarray:
    X, Y, Z = _grids_mm(dims, spacing)
    c = np.asarray(center, dtype=float)
    r = np.asarray(radii, dtype=float)
    return ((X - c[0]) / r[0]) ** 2 + ((Y - c[1]) / r[1]) ** 2 + ((Z - c[2]) / r[2]) ** 2 <= 1.0


def _segment_distance(a0, a1, b0, b1) -> float:
    """Minimum distance between two 3D segments."""
    a0, a1, b0, b1 = (np.asarray(v, dtype=float) for v in (a0, a1, b0, b1))
    u, v, w = a1 - a0, b1 - b0, a0 - b0
    a, b, c = u @ u, u @ v, v @ v
    d, e = u @ w, v @ w
    denom = a * c - b * b
    if denom > 1e-12:
        s = np.clip((b * e - c * d) / denom, 0.0, 1.0)
    else:
        s = 0.0
    t = (b * s + e) / c if c > 1e-12 else 0.0
    t = np.clip(t, 0.0, 1.0)
    # refine s for the clamped t
    if a > 1e-12:
        s = np.clip((b * t - d) / a, 0.0, 1.0)
    p = a0 + s * u
    q = b0 + t * v
    return float(np.linalg.norm(p - q))


def centerline_polyline(seg: Segment, spacing, step: float = 0.5) -> np.ndarray:
    """Voxel-space polyline sampled along the segment axis."""
    start = np.asarray(seg.start, dtype=float)
    end = np.asarray(seg.end, dtype=float)
    n = max(2, int(np.ceil(np.linalg.norm(end - start) / step)) + 1)
    ts = np.linspace(0.0, 1.0, n)
    pts = start[None, :] + ts[:, None] * (end - start)[None, :]
    return pts / np.asarray(spacing)


def _validate(spec: PhantomSpec) -> None:
    spacing = np.asarray(spec.spacing)
    lo_mm = 2.0 * spacing  # >= 2-voxel margin to every face
    hi_mm = (np.asarray(spec.dims) - 3) * spacing
    for i, s in enumerate(spec.segments):
        r = s.radius + s.wall
        for p in (s.start, s.end):
            p = np.asarray(p)
            if (p - r < lo_mm).any() or (p + r > hi_mm).any():
                raise ParameterError(f"segment {i} does not fit inside the volume with a 2-voxel margin")
        if s.parent is not None and s.radius > spec.segments[s.parent].radius:
            raise ParameterError(f"segment {i} is thicker than its parent {s.parent}")
    for i, s in enumerate(spec.segments):
        for j, t in enumerate(spec.segments):
            if j <= i:
                continue
            incompatible = {s.tissue, t.tissue} == {"air", "vessel"}
            if incompatible and _segment_distance(s.start, s.end, t.start, t.end) < (
                s.radius + s.wall + t.radius + t.wall
            ):
                raise ParameterError(
                    f"segments {i} ({s.tissue}) and {j} ({t.tissue}) overlap with incompatible tissues"
                )


def generate(spec: PhantomSpec) -> tuple[ScalarVolume, BinaryMask, PhantomTruth]:
    """Rasterize a phantom: returns (ct, lung mask, ground truth)."""
    _validate(spec)
    dims, spacing = tuple(spec.dims), tuple(spec.spacing)
    hu = {**DEFAULT_INTENSITIES, **spec.intensities}

    tissue = np.zeros(dims, dtype=np.int32)  # body
    branch = np.zeros(dims, dtype=np.int32)

    lung_region = np.zeros(dims, dtype=bool)
    for center, radii in spec.lungs:
        lung_region |= _ellipsoid_mask(dims, spacing, center, radii)
    tissue[lung_region] = _TISSUE_IDS["parenchyma"]

    # Wall shells first, lumens afterwards so junctions stay open.
    for s in spec.segments:
        if s.wall > 0.0:
            shell = _capsule_mask(dims, spacing, s.start, s.end, s.radius + s.wall)
            tissue[shell] = _TISSUE_IDS["wall"]
    # Paint segments in reverse so lower segment ids win shared voxels.
    for idx in range(len(spec.segments) - 1, -1, -1):
        s = spec.segments[idx]
        cap = _capsule_mask(dims, spacing, s.start, s.end, s.radius)
        tissue[cap] = _TISSUE_IDS[s.tissue]
        branch[cap] = idx + 1
    for d in spec.defects:
        sph = _sphere_mask(dims, spacing, d.center, d.radius)
        tissue[sph] = _TISSUE_IDS[d.tissue]

    rng = np.random.default_rng(spec.seed)
    if spec.speck_count:
        parench = np.argwhere(tissue == _TISSUE_IDS["parenchyma"])
        pick = rng.choice(len(parench), size=min(spec.speck_count, len(parench)), replace=False)
        for v in parench[pick]:
            tissue[tuple(v)] = _TISSUE_IDS["vessel"]

    ct = np.zeros(dims, dtype=np.float64)
    for name, tid in _TISSUE_IDS.items():
        ct[tissue == tid] = hu[name]

    noise = spec.noise_std
    if isinstance(noise, dict):
        if any(v > 0 for v in noise.values()):
            field_ = rng.standard_normal(dims)
            sigma = np.zeros(dims)
            for name, std in noise.items():
                sigma[tissue == _TISSUE_IDS[name]] = std
            ct = ct + field_ * sigma
    elif noise > 0:
        ct = ct + rng.standard_normal(dims) * noise

    ct_vol = ScalarVolume(ct.astype(np.float32), spacing)
    truth = PhantomTruth(
        tissue=LabelMap(tissue, spacing),
        branch_labels=LabelMap(branch, spacing),
        lung_region=BinaryMask(lung_region, spacing),
        centerlines=[centerline_polyline(s, spacing) for s in spec.segments],
        segments=list(spec.segments),
    )
    return ct_vol, BinaryMask(lung_region, spacing), truth


# ---------------------------------------------------------------------------
# Canned builders used by the test suite, the benchmarks, and the CLI
# ---------------------------------------------------------------------------


def cylinder_mask(dims=(17, 17, 44), radius=3.0, z0=2, z1=42, center=(8.0, 8.0),
                  spacing=(1.0, 1.0, 1.0)) -> BinaryMask:
    """Axis-aligned solid cylinder with flat ends (odd-centered by default)."""
    m = np.zeros(dims, dtype=bool)
    xs = np.arange(dims[0]) * spacing[0]
    ys = np.arange(dims[1]) * spacing[1]
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    disc = (X - center[0]) ** 2 + (Y - center[1]) ** 2 <= radius * radius
    m[:, :, z0 : z1 + 1] = disc[:, :, None]
    return BinaryMask(m, spacing)


def dumbbell_mask(dims=(40, 18, 18), ball_radius=6.5, neck_radius=1.2,
                  spacing=(1.0, 1.0, 1.0)) -> BinaryMask:
    """Two balls joined by a thin neck; splits after one or two erosions."""
    c = (dims[1] - 1) / 2.0
    a = (9.0, c, c)
    b = (dims[0] - 10.0, c, c)
    m = _sphere_mask(dims, spacing, a, ball_radius)
    m |= _sphere_mask(dims, spacing, b, ball_radius)
    m |= _capsule_mask(dims, spacing, a, b, neck_radius)
    return BinaryMask(m, spacing)


def two_parallel_tubes(dims=(40, 26, 40), radius=5.0, gap=8, z0=4, z1=36,
                       spacing=(1.0, 1.0, 1.0)):
    """Two parallel flat-ended z-tubes merged into one blob.

    Integer axis positions keep the geometry mirror-symmetric about the
    integer midplane.  Returns (mask, centerline paths, midplane x).
    """
    cy = dims[1] // 2
    xa = dims[0] // 2 - gap // 2
    xb = xa + gap
    xs = np.arange(dims[0]) * spacing[0]
    ys = np.arange(dims[1]) * spacing[1]
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    disc = ((X - xa) ** 2 + (Y - cy) ** 2 <= radius * radius) | (
        (X - xb) ** 2 + (Y - cy) ** 2 <= radius * radius
    )
    m = np.zeros(dims, dtype=bool)
    m[:, :, z0 : z1 + 1] = disc[:, :, None]
    paths = [
        np.array([[xa, cy, z] for z in range(z0, z1 + 1)]),
        np.array([[xb, cy, z] for z in range(z0, z1 + 1)]),
    ]
    return BinaryMask(m, spacing), paths, (xa + xb) / 2.0


def random_capsule_tree(seed: int, dims=(120, 120, 120), n_branches: int | None = None,
                        spacing=(1.0, 1.0, 1.0)):
    """Random junction-separated capsule tree (binary mask + analytic truth).

    Branches: 3..7; radii 2..4 voxels, children no thicker than parents;
    arm lengths at least 5x radius; segments of different subtrees keep a
    clearance so junctions stay isolated.
    """
    rng = np.random.default_rng(seed)
    if n_branches is None:
        n_branches = int(rng.integers(3, 8))
    dims_mm = np.asarray(dims, dtype=float) * np.asarray(spacing)
    center = dims_mm / 2.0

    def digital_inflation(v: np.ndarray) -> float:
        # Expected length ratio of a 26-connected digital line over the
        # Euclidean distance, for a line in direction v.  Worst (~1.14)
        # when both minor/major component ratios sit near 1/2.
        a, b, c = np.sort(np.abs(v))[::-1]
        if a == 0:
            return 1.0
        t, s = b / a, c / a
        step = (1 - t) * (1 - s) + (t + s - 2 * t * s) * np.sqrt(2.0) + t * s * np.sqrt(3.0)
        return float(step / np.sqrt(1.0 + t * t + s * s))

    def random_dir():
        # Rejection-sample directions whose digital path-length inflation
        # stays small, so step-sum edge lengths track the analytic ones.
        for _ in range(200):
            v = rng.normal(size=3)
            n = np.linalg.norm(v)
            if n == 0:
                continue
            v = v / n
            if digital_inflation(v) <= 1.06:
                return v
        return np.array([0.0, 0.0, 1.0])

    def shared_point(a: Segment, b: Segment):
        for p in (a.start, a.end):
            for q in (b.start, b.end):
                if np.allclose(p, q):
                    return np.asarray(p)
        return None

    def direction_from(seg: Segment, point: np.ndarray) -> np.ndarray:
        s, e = np.asarray(seg.start), np.asarray(seg.end)
        d = e - s if np.allclose(s, point) else s - e
        return d / np.linalg.norm(d)

    for _attempt in range(400):
        segments: list[Segment] = []
        children: dict[int, int] = {}
        radius0 = float(rng.uniform(3.0, 3.8))
        length0 = float(rng.uniform(9.5, 12.0)) * radius0
        d0 = random_dir()
        start0 = center - d0 * length0 / 2.0
        segments.append(Segment(tuple(start0), tuple(start0 + d0 * length0), radius0, "vessel"))
        ok = True
        while len(segments) < n_branches:
            # At most two children per junction: the medial axis of a
            # higher-degree junction generically splits, which would break
            # the analytic topology the tests compare against.
            options = [i for i in range(len(segments)) if children.get(i, 0) < 2]
            pidx = options[int(rng.integers(0, len(options)))]
            parent = segments[pidx]
            radius = float(min(parent.radius, rng.uniform(2.0, min(parent.radius, 3.0))))
            length = float(rng.uniform(9.5, 12.0)) * radius
            base = np.asarray(parent.end)
            placed = False
            for _try in range(60):
                d = random_dir()
                pdir = -direction_from(parent, base)  # parent's continuation direction
                cosang = float(d @ pdir)
                # Wide branch angles keep the medial branch point near the
                # analytic junction.
                if not 0.3 < cosang < 0.6:
                    continue
                end = base + d * length
                if (end < 8.0).any() or (end > dims_mm - 8.0).any():
                    continue
                cand = Segment(tuple(base), tuple(end), radius, "vessel", parent=pidx)
                clear = True
                for other in segments:
                    shared = shared_point(cand, other)
                    if shared is not None:
                        # Same junction: demand a clear angular separation.
                        da = direction_from(cand, shared)
                        db = direction_from(other, shared)
                        if float(da @ db) > 0.5:
                            clear = False
                            break
                    else:
                        dist = _segment_distance(cand.start, cand.end, other.start, other.end)
                        if dist < cand.radius + other.radius + 4.0:
                            clear = False
                            break
                if clear:
                    segments.append(cand)
                    children[pidx] = children.get(pidx, 0) + 1
                    placed = True
                    break
            if not placed:
                ok = False
                break
        if ok:
            break
    else:
        raise ParameterError(f"could not place a clear capsule tree for seed {seed}")

    mask = np.zeros(dims, dtype=bool)
    for s in segments:
        mask |= _capsule_mask(dims, spacing, s.start, s.end, s.radius)
    paths = [centerline_polyline(s, spacing) for s in segments]
    return BinaryMask(mask, spacing), segments, paths


def _airway_tree_segments(x0=48.0, y0=48.0, z_root=26.0, wall=6.0):
    """Five walled air segments growing upward, edge lengths tapering 20/16/14."""
    z1 = z_root + 20.0
    segs = [
        Segment((x0, y0, z_root), (x0, y0, z1), 5.5, "air", wall=wall),
        Segment((x0, y0, z1), (x0 - 13.0, y0, z1 + 9.3), 4.0, "air", parent=0, wall=wall),
        Segment((x0, y0, z1), (x0 + 13.0, y0, z1 + 9.3), 4.0, "air", parent=0, wall=wall),
        Segment((x0 - 13.0, y0, z1 + 9.3), (x0 - 20.0, y0, z1 + 21.4), 3.0, "air", parent=1, wall=wall),
        Segment((x0 + 13.0, y0, z1 + 9.3), (x0 + 20.0, y0, z1 + 21.4), 3.0, "air", parent=2, wall=wall),
    ]
    return segs


def bronchi_phantom(seed: int = 0, hole: bool = False) -> dict:
    """Walled airway-tree phantom for the bronchi stage.

    Layout (feet-up): trachea stub at low z (its own sealed lumen), lung
    ellipsoid above it with the five-segment walled air tree inside.  Edge
    lengths taper down the tree so node sprawls decrease along the walk,
    and the lumen-wall contrast (air -1000, parenchyma -980, wall -960)
    keeps the shell-entry cost inside the per-node stop budget while the
    thick noisy wall stays impassable.  With ``hole`` a channel breaches
    the left grandchild's wall sideways (y direction) into an air pocket
    in the parenchyma, out of the root node's marching range.
    """
    dims = (96, 96, 96)
    segs = _airway_tree_segments(z_root=26.0)
    # The trachea lumen overlaps the root lumen so the airway forms one
    # component whose lowest in-lung node sits right next to the trachea
    # reference point.
    trachea_seg = Segment((48.0, 48.0, 13.0), (48.0, 48.0, 20.0), 4.5, "air", wall=6.0)
    defects = []
    if hole:
        # Walled air pocket (a bulla) beside the left grandchild, breached
        # by a channel through both walls (sideways in y); placed 70%
        # along the branch so the root node's stop budget cannot reach it.
        grand = segs[3]
        p = np.asarray(grand.start) + 0.7 * (np.asarray(grand.end) - np.asarray(grand.start))
        pocket_center = (p[0], p[1] + 17.0, p[2])
        defects.append(Sphere(pocket_center, 11.0, "wall"))
        defects.append(Sphere((p[0], p[1] + 4.5, p[2]), 2.5, "air"))
        defects.append(Sphere((p[0], p[1] + 8.5, p[2]), 2.5, "air"))
        defects.append(Sphere(pocket_center, 8.0, "air"))
    spec = PhantomSpec(
        dims=dims,
        segments=[*segs, trachea_seg],
        lungs=[((48.0, 48.0, 52.0), (38.0, 38.0, 36.0))],
        intensities={**DEFAULT_INTENSITIES, "parenchyma": -980.0, "wall": -960.0},
        noise_std={"air": 0.0, "parenchyma": 2.0, "wall": 3.0, "body": 2.0},
        defects=defects,
        seed=seed,
    )
    ct, lung, truth = generate(spec)
    trachea_mask = BinaryMask(
        _capsule_mask(dims, spec.spacing, trachea_seg.start, trachea_seg.end, trachea_seg.radius),
        spec.spacing,
    )
    air_tree = np.zeros(dims, dtype=bool)
    for s in segs:
        air_tree |= _capsule_mask(dims, spec.spacing, s.start, s.end, s.radius)
    pocket_mask = np.zeros(dims, dtype=bool)
    if hole:
        pocket_mask = _sphere_mask(dims, spec.spacing, defects[3].center, defects[3].radius)
        pocket_mask &= ~air_tree
    return {
        "spec": spec,
        "ct": ct,
        "lung": lung,
        "truth": truth,
        "trachea": trachea_mask,
        "air_tree": BinaryMask(air_tree, spec.spacing),
        "pocket": BinaryMask(pocket_mask, spec.spacing),
        "defects": defects,
    }


def pipeline_phantom(seed: int = 0, consolidation: bool = False,
                     lung_scale: float = 1.0, dims=(128, 128, 128),
                     spacing=(2.2, 2.2, 2.2)) -> PhantomSpec:
    """Two-lung CT phantom exercising the whole pipeline.

    Feet-up layout: trachea between the lungs at low z, a vessel tree
    inside each lung, and a small walled airway stub continuing from the
    trachea.  The default 2.2 mm spacing puts the lung pair in a
    realistic 1-3 liter range.  ``consolidation`` injects a
    high-attenuation blob into the right lung that inflates the
    highest-intensity class (the over-segmentation QA case).
    """
    # Geometry is laid out on a 128-cube reference and scaled to the
    # requested dims, so smaller test volumes keep valid proportions.
    # Coordinates below are in mm (voxel-reference values times spacing).
    gx = dims[0] / 128.0 * spacing[0]
    gy = dims[1] / 128.0 * spacing[1]
    gz = dims[2] / 128.0 * spacing[2]
    g = (gx + gy + gz) / 3.0
    cx = dims[0] * spacing[0] / 2.0
    cy = dims[1] * spacing[1] / 2.0
    s = float(lung_scale)
    lungs = [
        ((cx - 30.0 * gx, cy, 70.0 * gz), (24.0 * s * gx, 26.0 * s * gy, 42.0 * s * gz)),
        ((cx + 30.0 * gx, cy, 70.0 * gz), (24.0 * s * gx, 26.0 * s * gy, 42.0 * s * gz)),
    ]
    trachea = Segment((cx, cy, 22.0 * gz), (cx, cy, 46.0 * gz), 4.5 * g, "air", wall=3.0 * g)
    airway = [
        trachea,
        Segment((cx, cy, 46.0 * gz), (cx - 18.0 * gx, cy, 62.0 * gz), 3.5 * g, "air",
                parent=0, wall=3.0 * g),
        Segment((cx, cy, 46.0 * gz), (cx + 18.0 * gx, cy, 62.0 * gz), 3.5 * g, "air",
                parent=0, wall=3.0 * g),
    ]

    def vessel_tree(x_center):
        base = (x_center, cy, 44.0 * gz)
        return [
            Segment(base, (x_center, cy, 78.0 * gz), 3.6 * g, "vessel"),
            Segment((x_center, cy, 78.0 * gz),
                    (x_center - 11.0 * gx, cy - 6.0 * gy, 95.0 * gz), 2.8 * g, "vessel"),
            Segment((x_center, cy, 78.0 * gz),
                    (x_center + 11.0 * gx, cy + 6.0 * gy, 95.0 * gz), 2.8 * g, "vessel"),
        ]

    segments = [*airway, *vessel_tree(cx - 30.0 * gx), *vessel_tree(cx + 30.0 * gx)]
    defects = []
    if consolidation:
        defects.append(Sphere((cx + 34.0 * gx, cy, 58.0 * gz), 13.0 * g, "vessel"))
    return PhantomSpec(
        dims=dims,
        spacing=tuple(spacing),
        segments=segments,
        lungs=lungs,
        intensities=dict(DEFAULT_INTENSITIES),
        noise_std={"air": 0.5, "parenchyma": 6.0, "wall": 6.0, "vessel": 6.0, "body": 6.0},
        speck_count=25,
        defects=defects,
        seed=seed,
    )
