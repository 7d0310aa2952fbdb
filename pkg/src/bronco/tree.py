"""Branch directions, label growing over the bundle mask, and the branch hierarchy.

Each branch gets a principal axis: the plane normal (axial, sagittal or
coronal) most aligned with the branch's start-to-end unit vector, chosen
by the largest absolute cosine.  Growth then happens in the plane
orthogonal to that axis, one voxel per iteration along the 8 in-plane
neighbor offsets, clipped to the bundle mask, until no voxel changes.
Voxels reached by two branches in the same iteration go to the smaller
branch id, which makes the result independent of scheduling.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .grid import BinaryMask, LabelMap
from .skeleton import SkeletonGraph

_AXES = (
    ("axial", np.array([0.0, 0.0, 1.0])),
    ("sagittal", np.array([1.0, 0.0, 0.0])),
    ("coronal", np.array([0.0, 1.0, 0.0])),
)

# 8-neighborhoods of the plane orthogonal to each principal axis.
_PLANE_OFFSETS = {
    "axial": [(dx, dy, 0) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)],
    "sagittal": [(0, dy, dz) for dy in (-1, 0, 1) for dz in (-1, 0, 1) if (dy, dz) != (0, 0)],
    "coronal": [(dx, 0, dz) for dx in (-1, 0, 1) for dz in (-1, 0, 1) if (dx, dz) != (0, 0)],
}


@dataclass
class BranchDirection:
    branch_id: int
    unit_vector: np.ndarray  # (3,) mm-space unit vector
    principal: str  # axial | sagittal | coronal
    growth_dirs: list[tuple[int, int, int]]


def main_direction(start_mm, end_mm, branch_id: int = 0) -> BranchDirection:
    """Principal axis and in-plane growth offsets for one branch."""
    start = np.asarray(start_mm, dtype=float)
    end = np.asarray(end_mm, dtype=float)
    delta = end - start
    norm = float(np.linalg.norm(delta))
    if norm == 0.0:
        raise ParameterError("zero-length branch: start equals end")
    u = delta / norm
    best_name = None
    best_val = -1.0
    for name, axis in _AXES:  # tie priority: axial > sagittal > coronal
        val = abs(float(u @ axis))
        if val > best_val:
            best_val = val
            best_name = name
    return BranchDirection(branch_id, u, best_name, _PLANE_OFFSETS[best_name])


def branch_directions(graph: SkeletonGraph) -> dict[int, BranchDirection]:
    """Directions for every branch of a graph.

    Degenerate branches (coinciding node centers, e.g. self-loops) fall
    back to the direction between the first and last path voxel, then to
    the axial axis.
    """
    out: dict[int, BranchDirection] = {}
    for e in graph.edges:
        start = graph.nodes[e.node_a].center_mm
        end = graph.nodes[e.node_b].center_mm
        try:
            out[e.branch_id] = main_direction(start, end, e.branch_id)
            continue
        except ParameterError:
            pass
        walk = [e.end_a, *map(tuple, e.path), e.end_b]
        p0 = np.asarray(walk[0], dtype=float) * graph.spacing
        p1 = np.asarray(walk[-1], dtype=float) * graph.spacing
        if np.linalg.norm(p1 - p0) > 0:
            out[e.branch_id] = main_direction(p0, p1, e.branch_id)
        else:
            out[e.branch_id] = BranchDirection(
                e.branch_id, np.array([0.0, 0.0, 1.0]), "axial", _PLANE_OFFSETS["axial"]
            )
    return out


def _shift(arr: np.ndarray, off) -> np.ndarray:
    """Zero-filled shift: out[p] = arr[p - off]."""
    out = np.zeros_like(arr)
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    for ax, o in enumerate(off):
        if o > 0:
            dst[ax] = slice(o, None)
            src[ax] = slice(None, -o)
        elif o < 0:
            dst[ax] = slice(None, o)
            src[ax] = slice(-o, None)
    out[tuple(dst)] = arr[tuple(src)]
    return out


@dataclass
class GrowResult:
    labels: LabelMap  # branch label = branch_id + 1; 0 = background
    unreached_label: int  # reserved label for bundle voxels no branch reached
    iterations: int


def grow_labels(graph: SkeletonGraph, directions: dict[int, BranchDirection],
                bundle: BinaryMask) -> GrowResult:
    """Assign every bundle voxel to a branch by direction-aware iterative growing.

    Seeds are each branch's skeleton path voxels (including the node
    voxels at its ends).  Each iteration every label expands by its 8
    in-plane offsets, clipped to the bundle and to still-unlabeled voxels;
    simultaneous claims resolve to the smaller branch id.  Remaining
    bundle voxels get the reserved unreached label.
    """
    bundle_data = bundle.data
    labels = np.zeros(bundle.dims, dtype=np.int32)

    # Seed: node voxels are proposed by every incident branch, smaller id wins.
    for e in sorted(graph.edges, key=lambda e: e.branch_id, reverse=True):
        lab = e.branch_id + 1
        for p in e.path:
            labels[tuple(p)] = lab
        for nid in (e.node_a, e.node_b):
            for v in graph.nodes[nid].voxels:
                labels[tuple(v)] = lab
    labels[~bundle_data] = 0

    # Group branches by principal axis so each iteration runs a fixed
    # 24 shifted-array updates regardless of branch count.
    groups: dict[str, list[int]] = {"axial": [], "sagittal": [], "coronal": []}
    for bid, d in directions.items():
        groups[d.principal].append(bid + 1)
    group_luts = {}
    max_lab = len(graph.edges) + 1
    for name, labs in groups.items():
        lut = np.zeros(max_lab + 1, dtype=np.int32)
        lut[labs] = labs
        group_luts[name] = lut

    iterations = 0
    max_iters = int(bundle_data.sum()) + 1
    sentinel = np.iinfo(np.int32).max
    while True:
        free = bundle_data & (labels == 0)
        if not free.any():
            break
        proposal = np.full(bundle.dims, sentinel, dtype=np.int32)
        for name, labs in groups.items():
            if not labs:
                continue
            plane = group_luts[name][labels]
            for off in _PLANE_OFFSETS[name]:
                shifted = _shift(plane, off)
                upd = free & (shifted > 0)
                np.minimum(proposal, np.where(upd, shifted, sentinel), out=proposal)
        grew = proposal < sentinel
        if not grew.any():
            break
        labels[grew] = proposal[grew]
        iterations += 1
        if iterations > max_iters:
            raise AssertionError("label growing exceeded the bundle voxel count")

    unreached = len(graph.edges) + 1
    labels[bundle_data & (labels == 0)] = unreached
    return GrowResult(LabelMap(labels, bundle.spacing, bundle.origin), unreached, iterations)


@dataclass
class BundleTree:
    labels: LabelMap
    unreached_label: int
    parent: dict[int, int | None]  # branch_id -> parent branch_id (None at roots)
    roots: list[int]  # root node ids, one per connected component
    cross_links: list[int]  # branch ids dropped from the spanning forest
    order: list[int]  # branch ids in BFS discovery order

    def to_json_dict(self, graph: SkeletonGraph, directions: dict[int, BranchDirection]) -> dict:
        counts = np.bincount(self.labels.data.ravel(), minlength=self.unreached_label + 1)
        branches = []
        for e in graph.edges:
            branches.append({
                "branch_id": e.branch_id,
                "label": e.branch_id + 1,
                "parent_id": self.parent.get(e.branch_id),
                "direction": directions[e.branch_id].principal,
                "voxel_count": int(counts[e.branch_id + 1]),
                "length_mm": float(e.length_mm),
            })
        return {
            "unreached_label": self.unreached_label,
            "unreached_voxels": int(counts[self.unreached_label]),
            "root_nodes": self.roots,
            "cross_links": self.cross_links,
            "branches": branches,
        }


def trachea_reference_mm(trachea: BinaryMask, flip_axial: bool = False) -> np.ndarray:
    """Reference point at the trachea's extreme axial slice (largest z by
    default; smallest with flip_axial), at the centroid of that slice."""
    coords = np.argwhere(trachea.data)
    if len(coords) == 0:
        raise ParameterError("trachea mask is empty")
    zs = coords[:, 2]
    z_ref = zs.min() if flip_axial else zs.max()
    sl = coords[zs == z_ref]
    centroid = sl.mean(axis=0)
    return np.asarray(trachea.origin) + centroid * np.asarray(trachea.spacing)


def build_hierarchy(graph: SkeletonGraph, grow: GrowResult, trachea: BinaryMask,
                    flip_axial: bool = False) -> BundleTree:
    """Breadth-first spanning forest rooted nearest the trachea.

    The root of each connected component is its node closest (mm) to the
    trachea reference point; a branch's parent is the branch by which BFS
    first reached its start node.  Edges that would close a cycle are
    recorded as cross links.
    """
    if not graph.nodes:
        raise ParameterError("cannot build a hierarchy from an empty graph")
    ref = trachea_reference_mm(trachea, flip_axial)

    def dist(nid: int) -> float:
        return float(np.linalg.norm(graph.nodes[nid].center_mm - ref))

    visited_nodes: set[int] = set()
    used_edges: set[int] = set()
    parent: dict[int, int | None] = {}
    roots: list[int] = []
    order: list[int] = []

    all_ids = sorted(graph.nodes)
    while len(visited_nodes) < len(all_ids):
        candidates = [nid for nid in all_ids if nid not in visited_nodes]
        root = min(candidates, key=lambda nid: (dist(nid), nid))
        roots.append(root)
        entering: dict[int, int | None] = {root: None}
        queue = [root]
        visited_nodes.add(root)
        while queue:
            nid = queue.pop(0)
            for other, branch_id in graph.neighbors(nid):
                if branch_id in used_edges:
                    continue
                if other in visited_nodes:
                    continue
                used_edges.add(branch_id)
                parent[branch_id] = entering[nid]
                entering[other] = branch_id
                order.append(branch_id)
                visited_nodes.add(other)
                queue.append(other)

    cross = [e.branch_id for e in graph.edges if e.branch_id not in used_edges]
    for bid in cross:
        parent.setdefault(bid, None)
    return BundleTree(grow.labels, grow.unreached_label, parent, roots, cross, order)


def hierarchy_json(tree: BundleTree, graph: SkeletonGraph,
                   directions: dict[int, BranchDirection], indent: int | None = None) -> str:
    return json.dumps(tree.to_json_dict(graph, directions), indent=indent)
