"""Skeletonization and skeleton-to-graph conversion.

``skeletonize`` reduces a mask to a 1-voxel-wide, connectivity-preserving
medial representation (6-subiteration thinning with simple-point checks;
see bronco._kernels).  ``build_graph`` classifies skeleton voxels by their
26-neighbor count: more than two neighbors makes a junction voxel, exactly
one an endpoint, zero an isolated voxel; everything else is an edge voxel.
Adjacent junction voxels merge into one node whose center is the mean of
its member coordinates; endpoints and isolated voxels become single-voxel
nodes.  Edge voxels are traced into paths between nodes; a closed loop
with no node voxel gets one promoted node carrying a self-loop edge.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage as ndi

from ._kernels import thin_image
from .errors import ParameterError
from .grid import BinaryMask, flat_index

_OFFSETS_26 = [
    (dx, dy, dz)
    for dx in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dz in (-1, 0, 1)
    if (dx, dy, dz) != (0, 0, 0)
]


@dataclass
class Skeleton:
    """A thinned mask: every branch is one voxel wide."""

    mask: BinaryMask


def _prune_spurs(data: np.ndarray, max_len: int) -> np.ndarray:
    """Remove tiny endpoint spurs hanging off junctions.

    Staircase bends of thick branches leave 1-2 voxel spurs after
    thinning; they are sub-resolution artifacts, not branches.  Only
    chains that reach a junction voxel within max_len steps are deleted,
    so isolated lines and real terminal branches survive and the
    component count is unchanged (endpoint deletions are always
    topology-preserving).
    """
    data = data.copy()

    def neighbors(p):
        out = []
        for dx, dy, dz in _OFFSETS_26:
            q = (p[0] + dx, p[1] + dy, p[2] + dz)
            if (0 <= q[0] < data.shape[0] and 0 <= q[1] < data.shape[1]
                    and 0 <= q[2] < data.shape[2] and data[q]):
                out.append(q)
        return out

    changed = True
    while changed:
        changed = False
        coords = np.argwhere(data)
        order = np.argsort(flat_index(data.shape, coords), kind="stable")
        for v in coords[order]:
            p = tuple(int(c) for c in v)
            if not data[p]:
                continue
            nbs = neighbors(p)
            if len(nbs) != 1:
                continue
            # Walk inward from the endpoint while the chain stays simple.
            chain = [p]
            prev, cur = p, nbs[0]
            hit_junction = False
            while len(chain) <= max_len:
                cur_nbs = neighbors(cur)
                if len(cur_nbs) > 2:
                    hit_junction = True
                    break
                if len(cur_nbs) <= 1:
                    break
                chain.append(cur)
                nxt = cur_nbs[0] if cur_nbs[0] != prev else cur_nbs[1]
                prev, cur = cur, nxt
            if hit_junction and len(chain) <= max_len:
                for q in chain:
                    data[q] = False
                changed = True
    return data


def skeletonize(mask: BinaryMask, prune_spur_len: int = 4) -> Skeleton:
    """Thin a mask to its skeleton; preserves the 26-connected component count.

    ``prune_spur_len`` removes endpoint spurs of at most that many voxels
    hanging off junctions (0 disables pruning).
    """
    if mask.is_empty():
        raise ParameterError("cannot skeletonize an empty mask")
    thin = thin_image(np.ascontiguousarray(mask.data.astype(np.uint8)))
    if prune_spur_len > 0:
        thin = _prune_spurs(thin.astype(bool), prune_spur_len)
    return Skeleton(mask.with_data(thin.astype(bool)))


@dataclass
class GraphNode:
    id: int
    voxels: np.ndarray  # (k, 3) int indices
    center_index: np.ndarray  # (3,) float
    center_mm: np.ndarray  # (3,) float


@dataclass
class GraphEdge:
    branch_id: int
    node_a: int
    node_b: int
    path: np.ndarray  # (m, 3) int indices of edge-class voxels, a-to-b order
    length_mm: float
    end_a: tuple[int, int, int]  # node member voxel where the trace attaches
    end_b: tuple[int, int, int]


@dataclass
class SkeletonGraph:
    nodes: dict[int, GraphNode]
    edges: list[GraphEdge]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    dims: tuple[int, int, int]
    _adj: dict[int, list[tuple[int, int]]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._adj:
            adj: dict[int, list[tuple[int, int]]] = {nid: [] for nid in self.nodes}
            for e in self.edges:
                adj[e.node_a].append((e.node_b, e.branch_id))
                if e.node_a != e.node_b:
                    adj[e.node_b].append((e.node_a, e.branch_id))
            for nid in adj:
                adj[nid].sort()
            self._adj = adj

    def neighbors(self, node_id: int) -> list[tuple[int, int]]:
        """(other_node, branch_id) pairs, ascending."""
        return self._adj[node_id]

    def edge_by_branch(self, branch_id: int) -> GraphEdge:
        return self.edges[branch_id]

    def to_json_dict(self) -> dict:
        return {
            "spacing": list(self.spacing),
            "origin": list(self.origin),
            "dims": list(self.dims),
            "nodes": [
                {
                    "id": n.id,
                    "center_index": [float(c) for c in n.center_index],
                    "center_mm": [float(c) for c in n.center_mm],
                    "voxels": n.voxels.tolist(),
                }
                for n in sorted(self.nodes.values(), key=lambda n: n.id)
            ],
            "edges": [
                {
                    "branch_id": e.branch_id,
                    "node_a": e.node_a,
                    "node_b": e.node_b,
                    "length_mm": float(e.length_mm),
                    "path": e.path.tolist(),
                    "end_a": list(e.end_a),
                    "end_b": list(e.end_b),
                }
                for e in self.edges
            ],
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_json_dict(), indent=indent)

    def to_graphml(self) -> str:
        """GraphML export: nodes with centers, edges with lengths, no voxel paths."""
        out = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            '<graphml xmlns="http://graphml.graphdrawing.org/xmlns">',
            '  <key id="d0" for="node" attr.name="center_mm" attr.type="string"/>',
            '  <key id="d1" for="edge" attr.name="length_mm" attr.type="double"/>',
            '  <key id="d2" for="edge" attr.name="branch_id" attr.type="int"/>',
            '  <graph id="skeleton" edgedefault="undirected">',
        ]
        for n in sorted(self.nodes.values(), key=lambda n: n.id):
            c = " ".join(f"{v:.6f}" for v in n.center_mm)
            out.append(f'    <node id="n{n.id}"><data key="d0">{c}</data></node>')
        for e in self.edges:
            out.append(
                f'    <edge id="e{e.branch_id}" source="n{e.node_a}" target="n{e.node_b}">'
                f'<data key="d1">{e.length_mm:.6f}</data>'
                f'<data key="d2">{e.branch_id}</data></edge>'
            )
        out.append("  </graph>")
        out.append("</graphml>")
        return "\n".join(out)


def _step_length(a, b, spacing) -> float:
    d = (np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) * spacing
    return float(np.sqrt((d * d).sum()))


def _path_length(points, spacing) -> float:
    pts = np.asarray(points, dtype=float) * spacing
    if len(pts) < 2:
        return 0.0
    diffs = np.diff(pts, axis=0)
    return float(np.sqrt((diffs * diffs).sum(axis=1)).sum())


def build_graph(skel: Skeleton) -> SkeletonGraph:
    mask = skel.mask
    data = mask.data
    spacing = np.asarray(mask.spacing)
    origin = np.asarray(mask.origin)

    coords = np.argwhere(data)
    if len(coords) == 0:
        return SkeletonGraph({}, [], mask.spacing, mask.origin, mask.dims)

    # 26-neighbor counts over skeleton voxels
    padded = np.zeros(tuple(s + 2 for s in data.shape), dtype=np.int8)
    padded[1:-1, 1:-1, 1:-1] = data
    nb = np.zeros(data.shape, dtype=np.int8)
    for dx, dy, dz in _OFFSETS_26:
        nb += padded[1 + dx : data.shape[0] + 1 + dx,
                     1 + dy : data.shape[1] + 1 + dy,
                     1 + dz : data.shape[2] + 1 + dz]

    junction = data & (nb > 2)
    node_voxel = data & (nb != 2)

    # Junction clusters: adjacent junction voxels merge into one node.
    clusters, n_clusters = ndi.label(junction, structure=np.ones((3, 3, 3)))
    members: list[np.ndarray] = []
    for lab in range(1, n_clusters + 1):
        members.append(np.argwhere(clusters == lab))
    # Endpoint / isolated voxels are singleton nodes.
    for v in np.argwhere(data & (nb < 2)):
        members.append(v[None, :])

    # Deterministic node ids: order by smallest x-fastest flat index of members.
    def key(vox: np.ndarray) -> int:
        return int(flat_index(mask.dims, vox).min())

    members.sort(key=key)
    nodes: dict[int, GraphNode] = {}
    node_of: dict[tuple[int, int, int], int] = {}
    for nid, vox in enumerate(members):
        order = np.argsort(flat_index(mask.dims, vox), kind="stable")
        vox = vox[order]
        center = vox.mean(axis=0)
        nodes[nid] = GraphNode(nid, vox, center, origin + center * spacing)
        for v in vox:
            node_of[tuple(int(c) for c in v)] = nid

    edge_class = data & (nb == 2) & ~node_voxel
    visited = np.zeros(data.shape, dtype=bool)
    raw_edges: list[tuple[int, int, list, tuple, tuple]] = []

    def skeleton_neighbors(p):
        out = []
        for dx, dy, dz in _OFFSETS_26:
            q = (p[0] + dx, p[1] + dy, p[2] + dz)
            if 0 <= q[0] < data.shape[0] and 0 <= q[1] < data.shape[1] and 0 <= q[2] < data.shape[2]:
                if data[q]:
                    out.append(q)
        return out

    def trace(start_node: int, attach: tuple, first: tuple):
        """Walk an edge-voxel chain from a node member voxel into the chain."""
        path = [first]
        visited[first] = True
        prev, cur = attach, first
        while True:
            nxt = None
            for q in skeleton_neighbors(cur):
                if q != prev and (edge_class[q] or q in node_of):
                    # Edge voxels have exactly two skeleton neighbors, so
                    # the one that is not prev continues the chain.
                    if edge_class[q] and visited[q] and q != attach:
                        continue
                    nxt = q
                    break
            if nxt is None or nxt == attach:
                # Closed back onto the starting node.
                return start_node, path, attach
            if nxt in node_of:
                return node_of[nxt], path, nxt
            visited[nxt] = True
            path.append(nxt)
            prev, cur = cur, nxt

    # Trace chains hanging off each node, in deterministic order.
    for nid in sorted(nodes):
        for v in nodes[nid].voxels:
            attach = tuple(int(c) for c in v)
            for q in skeleton_neighbors(attach):
                if edge_class[q] and not visited[q]:
                    other, path, end_b = trace(nid, attach, q)
                    raw_edges.append((nid, other, path, attach, end_b))

    # Direct node-to-node contacts (no edge voxels in between).
    seen_pairs: set[tuple[int, int]] = set()
    for nid in sorted(nodes):
        for v in nodes[nid].voxels:
            attach = tuple(int(c) for c in v)
            for q in skeleton_neighbors(attach):
                other = node_of.get(q)
                if other is None or other == nid:
                    continue
                pair = (min(nid, other), max(nid, other))
                if pair in seen_pairs:
                    continue
                seen_pairs.add(pair)
                if nid < other:
                    raw_edges.append((nid, other, [], attach, q))
                else:
                    raw_edges.append((other, nid, [], q, attach))

    # Pure cycles: loops made entirely of edge-class voxels get a promoted node.
    remaining = np.argwhere(edge_class & ~visited)
    if len(remaining):
        order = np.argsort(flat_index(mask.dims, remaining), kind="stable")
        for v in remaining[order]:
            p = tuple(int(c) for c in v)
            if visited[p]:
                continue
            nid = len(nodes)
            vox = np.array([p])
            nodes[nid] = GraphNode(nid, vox, vox[0].astype(float),
                                   origin + vox[0] * spacing)
            node_of[p] = nid
            edge_class[p] = False
            nbrs = sorted(skeleton_neighbors(p), key=lambda q: key(np.array([q])))
            start = next((q for q in nbrs if edge_class[q] and not visited[q]), None)
            if start is None:
                continue
            other, path, end_b = trace(nid, p, start)
            raw_edges.append((nid, other, path, p, end_b))

    # Canonical edge records: path runs from the lower node id to the higher.
    canon = []
    for a, b, path, ea, eb in raw_edges:
        if b < a:
            a, b = b, a
            path = list(reversed(path))
            ea, eb = eb, ea
        canon.append((a, b, path, ea, eb))
    canon.sort(key=lambda t: (t[0], t[1],
                              flat_index(mask.dims, np.array(t[3]))
                              if t[2] == [] else flat_index(mask.dims, np.array(t[2][0]))))

    edges: list[GraphEdge] = []
    for branch_id, (a, b, path, ea, eb) in enumerate(canon):
        walk = [ea, *path, eb]
        length = _path_length(walk, spacing)
        edges.append(GraphEdge(branch_id, a, b, np.array(path, dtype=int).reshape(-1, 3),
                               length, ea, eb))
    return SkeletonGraph(nodes, edges, mask.spacing, mask.origin, mask.dims)


def graph_from_paths(paths: list[np.ndarray], spacing, origin, dims) -> SkeletonGraph:
    """Build a graph from explicit voxel polyline paths (one per branch).

    Endpoints that coincide across paths become shared nodes.  Used for
    ground-truth graphs and for driving the label growing directly.
    """
    spacing = np.asarray(spacing, dtype=float)
    origin = np.asarray(origin, dtype=float)
    node_of: dict[tuple, int] = {}
    nodes: dict[int, GraphNode] = {}

    def node_for(p: tuple) -> int:
        if p not in node_of:
            nid = len(nodes)
            node_of[p] = nid
            vox = np.array([p], dtype=int)
            nodes[nid] = GraphNode(nid, vox, np.asarray(p, dtype=float),
                                   origin + np.asarray(p) * spacing)
        return node_of[p]

    edges = []
    for branch_id, path in enumerate(paths):
        path = np.asarray(path, dtype=int)
        a = node_for(tuple(int(c) for c in path[0]))
        b = node_for(tuple(int(c) for c in path[-1]))
        interior = path[1:-1]
        edges.append(GraphEdge(branch_id, a, b, interior.reshape(-1, 3),
                               _path_length(path, spacing),
                               tuple(int(c) for c in path[0]),
                               tuple(int(c) for c in path[-1])))
    return SkeletonGraph(nodes, edges, tuple(spacing), tuple(origin), tuple(int(d) for d in dims))
