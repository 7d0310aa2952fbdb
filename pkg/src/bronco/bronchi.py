"""Airway modeling: graph-guided fast marching with leak detection and repair.

The speed image maps the CT gradient magnitude through the bounded
reciprocal 1/(1 + x): close to one inside homogeneous regions, near zero
at edges.  Starting from the node nearest the trachea's far axial end, the
initial-mask graph is walked breadth first; every node seeds a fast march
whose sprawl (sum of speed inside the segmentation) is compared against
its predecessor's.  A sprawl increase suggests a leak, countered by a
controlled erode/dilate split whose separation mask is blocked out of the
speed image; nodes that still sprawl too far are removed and blocked.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._kernels import fast_march as _fast_march_kernel
from .errors import ParameterError, UnrepairableLeakError
from .grid import BinaryMask, LabelMap, ScalarVolume, StructuringElement
from .morphology import connected_components, dilate, erode
from .skeleton import SkeletonGraph, build_graph, skeletonize
from .tree import trachea_reference_mm

BLOCKING_FLOOR = 1e-6
MAX_LEAK_EROSIONS = 5
DEFAULT_STOP_FACTOR = 2.0
DEFAULT_LEAK_RATIO = 1.5  # sprawl must exceed the predecessor's by this factor to count as a leak


@dataclass
class SpeedImage:
    """Front propagation speed per voxel, in (0, 1]; blocked voxels sit at the floor."""

    volume: ScalarVolume
    blocking_floor: float = BLOCKING_FLOOR

    @property
    def values(self) -> np.ndarray:
        return self.volume.data

    def block(self, where: np.ndarray) -> None:
        self.volume.data[where] = self.blocking_floor

    def is_blocked(self, voxel) -> bool:
        return bool(self.values[tuple(int(c) for c in voxel)] <= self.blocking_floor)

    def copy(self) -> "SpeedImage":
        return SpeedImage(self.volume.with_data(self.volume.data.copy()), self.blocking_floor)


def speed_image(ct: ScalarVolume) -> SpeedImage:
    """speed = 1 / (1 + |grad I|), spacing-aware central differences
    (one-sided at the borders)."""
    data = ct.data.astype(np.float64)
    if min(ct.dims) < 2:
        grad_mag = np.zeros(ct.dims)
    else:
        gx, gy, gz = np.gradient(data, *ct.spacing)
        grad_mag = np.sqrt(gx * gx + gy * gy + gz * gz)
    return SpeedImage(ScalarVolume(1.0 / (1.0 + grad_mag), ct.spacing, ct.origin))


@dataclass
class MarchResult:
    node_id: int
    arrival: ScalarVolume  # +inf where the front never arrived
    segmentation: BinaryMask  # arrival <= stop_time
    sprawl: float  # sum of speed values inside the segmentation


def fast_march(speed: SpeedImage, seed, stop_time: float, node_id: int = -1) -> MarchResult:
    """March a front from the seed until the smallest trial time exceeds stop_time."""
    seed = tuple(int(c) for c in seed)
    dims = speed.volume.dims
    if not all(0 <= seed[i] < dims[i] for i in range(3)):
        raise ParameterError(f"seed {seed} lies outside the volume {dims}")
    if speed.is_blocked(seed):
        raise ParameterError(f"seed {seed} is blocked in the speed image")
    times, known = _fast_march_kernel(speed.values, speed.volume.spacing, seed, float(stop_time))
    seg = BinaryMask(known.astype(bool), speed.volume.spacing, speed.volume.origin)
    sprawl = float(speed.values[seg.data].sum()) if not seg.is_empty() else 0.0
    return MarchResult(
        node_id,
        ScalarVolume(times, speed.volume.spacing, speed.volume.origin),
        seg,
        sprawl,
    )


def airway_candidate_region(labels: LabelMap, lung: BinaryMask) -> BinaryMask:
    """Complement of the highest-intensity class within the lungs."""
    k = labels.max_label
    return BinaryMask(lung.data & (labels.data != k), lung.spacing, lung.origin)


def initial_bronchi_mask(labels: LabelMap, lung: BinaryMask) -> BinaryMask:
    """Candidate region eroded by a 1-voxel ball (the skeletonization input)."""
    out = erode(airway_candidate_region(labels, lung), StructuringElement.ball(1))
    if out.is_empty():
        raise ParameterError("no airway candidate region: initial bronchi mask is empty")
    return out


def repair_leak(result: MarchResult, seed, max_erosions: int = MAX_LEAK_EROSIONS
                ) -> tuple[BinaryMask, int]:
    """Split a leaking segmentation by controlled erosion.

    Erodes with a 1-voxel ball (at most ``max_erosions`` times) until the
    26-connectivity component count rises, then dilates the component
    containing (or nearest to) the seed back by the same number of steps.
    The separation mask is the original segmentation minus that dilated
    component.  Raises UnrepairableLeakError when no split happens before
    the mask stops changing, vanishes, or the erosion budget runs out.
    """
    seg = result.segmentation
    if seg.is_empty():
        raise ParameterError("cannot repair an empty segmentation")
    ball = StructuringElement.ball(1)
    _, counts0 = connected_components(seg, connectivity=26)
    base_count = len(counts0)
    cur = seg
    n_eros = 0
    if base_count < 2:
        for i in range(1, max_erosions + 1):
            nxt = erode(cur, ball)
            if nxt.is_empty():
                raise UnrepairableLeakError(i)
            if np.array_equal(nxt.data, cur.data):
                raise UnrepairableLeakError(i)
            cur = nxt
            n_eros = i
            _, counts = connected_components(cur, connectivity=26)
            if len(counts) > base_count:
                break
        else:
            raise UnrepairableLeakError(max_erosions)

    comp, _ = connected_components(cur, connectivity=26)
    seed = tuple(int(c) for c in seed)
    seed_label = int(comp.data[seed])
    if seed_label == 0:
        # Seed eroded away: take the component nearest to it.
        best = (np.inf, 0)
        for lab in range(1, comp.max_label + 1):
            vox = np.argwhere(comp.data == lab)
            d = float(np.min(((vox - np.asarray(seed)) ** 2).sum(axis=1)))
            if d < best[0]:
                best = (d, lab)
        seed_label = best[1]
    seed_side = comp.mask_of(seed_label)
    for _ in range(n_eros):
        seed_side = dilate(seed_side, ball)
    separation = seg.with_data(seg.data & ~seed_side.data)
    return separation, n_eros


@dataclass
class NodeLogEntry:
    node_id: int
    sprawl: float
    action: str  # accepted | repaired | removed
    erosions: int | None = None

    def to_json(self) -> str:
        d = {"node_id": self.node_id, "sprawl": self.sprawl, "action": self.action}
        if self.erosions is not None:
            d["erosions"] = self.erosions
        return json.dumps(d)


@dataclass
class BronchiResult:
    mask: BinaryMask
    node_log: list[NodeLogEntry] = field(default_factory=list)
    starting_node: int = -1

    def node_log_jsonl(self) -> str:
        return "\n".join(e.to_json() for e in self.node_log) + ("\n" if self.node_log else "")


def _node_seed_voxel(graph: SkeletonGraph, node_id: int) -> tuple[int, int, int]:
    """Member voxel closest to the node's center: always a skeleton voxel."""
    node = graph.nodes[node_id]
    d = ((node.voxels - node.center_index) ** 2).sum(axis=1)
    return tuple(int(c) for c in node.voxels[int(np.argmin(d))])


def _node_stop_time(graph: SkeletonGraph, node_id: int, factor: float,
                    spacing) -> float:
    lengths = [graph.edges[bid].length_mm for _, bid in graph.neighbors(node_id)]
    if lengths:
        return factor * max(lengths)
    return factor * 5.0 * max(spacing)


def model_bronchi(
    ct: ScalarVolume,
    labels: LabelMap,
    lung: BinaryMask,
    trachea: BinaryMask,
    stop_factor: float = DEFAULT_STOP_FACTOR,
    max_erosions: int = MAX_LEAK_EROSIONS,
    leak_ratio: float = DEFAULT_LEAK_RATIO,
    flip_axial: bool = False,
) -> BronchiResult:
    """Full airway modeling pass; see the module docstring for the procedure.

    The skeleton graph is built from the eroded initial mask; the marches
    themselves are masked to the pre-erosion candidate region, so the
    lumen's outermost voxel layer stays reachable.
    """
    candidate = airway_candidate_region(labels, lung)
    initial = initial_bronchi_mask(labels, lung)
    graph = build_graph(skeletonize(initial))
    if not graph.nodes:
        raise ParameterError("bronchi modeling failed: initial mask has no skeleton nodes")

    # Starting node: nearest to the trachea end with the highest axial index.
    trachea_skel = skeletonize(trachea)
    ref = trachea_reference_mm(trachea_skel.mask, flip_axial)
    start = min(graph.nodes, key=lambda nid: (float(np.linalg.norm(graph.nodes[nid].center_mm - ref)), nid))

    speed = speed_image(ct)
    speed.block(~candidate.data)  # march only inside the candidate region

    final = np.zeros(ct.dims, dtype=bool)
    log: list[NodeLogEntry] = []
    sprawl_of: dict[int, float] = {}
    removed: set[int] = set()
    visited: set[int] = {start}
    queue: list[tuple[int, int | None]] = [(start, None)]

    while queue:
        nid, pred = queue.pop(0)
        seed = _node_seed_voxel(graph, nid)
        stop = _node_stop_time(graph, nid, stop_factor, ct.spacing)
        if speed.is_blocked(seed):
            removed.add(nid)
            log.append(NodeLogEntry(nid, 0.0, "removed"))
            continue
        res = fast_march(speed, seed, stop, nid)
        action = "accepted"
        erosions = None
        if pred is not None and res.sprawl > sprawl_of[pred] * leak_ratio:
            try:
                separation, erosions = repair_leak(res, seed, max_erosions)
                speed.block(separation.data)
                if speed.is_blocked(seed):
                    raise UnrepairableLeakError(erosions)
                res = fast_march(speed, seed, stop, nid)
                action = "repaired"
            except UnrepairableLeakError as exc:
                erosions = exc.erosions
                res = None
            if res is None or res.sprawl > sprawl_of[pred] * leak_ratio:
                removed.add(nid)
                block = np.zeros(ct.dims, dtype=bool)
                block[seed] = True
                speed.block(dilate(BinaryMask(block, ct.spacing, ct.origin),
                                   StructuringElement.ball(1)).data)
                log.append(NodeLogEntry(nid, res.sprawl if res else 0.0, "removed", erosions))
                continue
        final |= res.segmentation.data
        sprawl_of[nid] = res.sprawl
        log.append(NodeLogEntry(nid, res.sprawl, action, erosions))
        for other, _bid in graph.neighbors(nid):
            if other not in visited:
                visited.add(other)
                queue.append((other, nid))

    return BronchiResult(BinaryMask(final, ct.spacing, ct.origin), log, start)
