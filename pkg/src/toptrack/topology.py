"""Topological maps: nodes with metric coordinates joined by undirected edges.

The map is immutable once built. Everything downstream (particle motion,
robot navigation, error metrics) queries it through the cached arrays
computed in :class:`TopologicalMap.__init__`.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path


class MapError(ValueError):
    """Raised when a map document violates the topology invariants."""


class TopologicalMap:
    """Undirected graph with 2-D node coordinates.

    Parameters
    ----------
    coords : (N, 2) array of node positions in meters; row index is the node id.
    edges : iterable of (j, k) pairs. Each pair is added in both directions.
    """

    def __init__(self, coords, edges: Iterable[tuple[int, int]]):
        coords = np.asarray(coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 2 or len(coords) == 0:
            raise MapError("coords must be a non-empty (N, 2) array")
        if not np.all(np.isfinite(coords)):
            raise MapError("node coordinates must be finite")
        n = len(coords)
        adj = np.zeros((n, n), dtype=bool)
        for j, k in edges:
            j, k = int(j), int(k)
            if not (0 <= j < n and 0 <= k < n):
                raise MapError(f"edge ({j}, {k}) references an unknown node")
            if j == k:
                raise MapError(f"self-loop on node {j}")
            adj[j, k] = adj[k, j] = True
        self._init_from_adjacency(coords, adj)

    @classmethod
    def from_adjacency(cls, coords, adjacency) -> "TopologicalMap":
        """Build from a dense adjacency matrix, which must already be symmetric."""
        coords = np.asarray(coords, dtype=float)
        adj = np.asarray(adjacency).astype(bool)
        if adj.shape != (len(coords), len(coords)):
            raise MapError("adjacency shape does not match node count")
        if not np.array_equal(adj, adj.T):
            raise MapError("adjacency is asymmetric")
        if np.any(np.diag(adj)):
            raise MapError("adjacency has self-loops")
        obj = cls.__new__(cls)
        obj._init_from_adjacency(coords, adj)
        return obj

    def _init_from_adjacency(self, coords: np.ndarray, adj: np.ndarray) -> None:
        n = len(coords)
        diff = coords[:, None, :] - coords[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        off_diag = dist[~np.eye(n, dtype=bool)]
        if n > 1 and np.min(off_diag) <= 0.0:
            raise MapError("two nodes share identical coordinates")
        if n > 1:
            n_comp, _ = connected_components(csr_matrix(adj), directed=False)
            if n_comp != 1:
                raise MapError(f"graph is disconnected ({n_comp} components)")

        self.coords = coords
        self.coords.setflags(write=False)
        self.adjacency = adj
        self.adjacency.setflags(write=False)
        self.node_distance = dist

        # Padded neighbour table used by the vectorised particle motion model.
        degree = adj.sum(axis=1)
        self.max_degree = int(degree.max()) if n > 1 else 0
        width = max(self.max_degree, 1)
        self.neighbor_table = np.full((n, width), -1, dtype=np.int64)
        self.neighbor_mask = np.zeros((n, width), dtype=bool)
        for j in range(n):
            nb = np.flatnonzero(adj[j])
            self.neighbor_table[j, : len(nb)] = nb
            self.neighbor_mask[j, : len(nb)] = True
        safe = np.where(self.neighbor_mask, self.neighbor_table, np.arange(n)[:, None])
        vec = coords[safe] - coords[:, None, :]
        length = np.hypot(vec[..., 0], vec[..., 1])
        self.edge_length = np.where(self.neighbor_mask, length, 1.0)
        self.edge_unit = np.where(self.neighbor_mask[..., None], vec / self.edge_length[..., None], 0.0)

        weighted = csr_matrix(np.where(adj, dist, 0.0))
        self.hops = shortest_path(csr_matrix(adj.astype(float)), unweighted=True, directed=False).astype(np.int64)
        self.path_length, self._pred = shortest_path(weighted, directed=False, return_predecessors=True)

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def num_nodes(self) -> int:
        return len(self.coords)

    @property
    def edges(self) -> list[tuple[int, int]]:
        j, k = np.nonzero(np.triu(self.adjacency))
        return [(int(a), int(b)) for a, b in zip(j, k)]

    def neighbors(self, n: int) -> set[int]:
        return {int(k) for k in np.flatnonzero(self.adjacency[n])}

    def edge_vector(self, j: int, k: int) -> tuple[np.ndarray, float]:
        """Unit direction from node j to node k and the edge length."""
        if not self.adjacency[j, k]:
            raise MapError(f"no edge between {j} and {k}")
        vec = self.coords[k] - self.coords[j]
        d = float(np.hypot(*vec))
        return vec / d, d

    def shortest_path_hops(self, a: int, b: int) -> int:
        return int(self.hops[a, b])

    def shortest_path(self, a: int, b: int) -> list[int]:
        """Node sequence of the metric shortest path from a to b, inclusive."""
        path = [b]
        while path[-1] != a:
            prev = self._pred[a, path[-1]]
            if prev < 0:
                raise MapError(f"no path from {a} to {b}")
            path.append(int(prev))
        return path[::-1]

    def closest_node(self, p) -> int:
        """Nearest node to metric point p; ties go to the lowest node id."""
        p = np.asarray(p, dtype=float)
        d2 = np.sum((self.coords - p) ** 2, axis=1)
        # argmin returns the first minimum, which is the lowest id.
        return int(np.argmin(d2))

    def distances_to(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.hypot(self.coords[:, 0] - p[0], self.coords[:, 1] - p[1])

    def to_document(self) -> dict:
        return {
            "nodes": [{"id": i, "x": float(x), "y": float(y)} for i, (x, y) in enumerate(self.coords)],
            "edges": [[j, k] for j, k in self.edges],
        }


def load_map(source: IO | str | bytes) -> TopologicalMap:
    """Parse a map JSON document from a stream, string or bytes.

    Edges are listed once; the adjacency is made symmetric on load. An
    optional ``directed_edges`` list is accepted only if it is already
    symmetric, so asymmetric documents are rejected instead of silently fixed.
    """
    if hasattr(source, "read"):
        source = source.read()
    try:
        doc = json.loads(source)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MapError(f"cannot parse map document: {exc}") from exc
    try:
        nodes = sorted(doc["nodes"], key=lambda nd: int(nd["id"]))
        ids = [int(nd["id"]) for nd in nodes]
        if ids != list(range(len(ids))):
            raise MapError("node ids must be dense in [0, N)")
        coords = [[float(nd["x"]), float(nd["y"])] for nd in nodes]
        edges = [tuple(e) for e in doc.get("edges", [])]
        directed = [tuple(e) for e in doc.get("directed_edges", [])]
    except (KeyError, TypeError) as exc:
        raise MapError(f"malformed map document: {exc}") from exc
    if directed:
        pairs = {(int(j), int(k)) for j, k in directed}
        for j, k in pairs:
            if (k, j) not in pairs:
                raise MapError(f"asymmetric adjacency: edge ({j}, {k}) has no reverse")
        edges += [(j, k) for j, k in pairs if j < k]
    return TopologicalMap(coords, edges)


def dump_map(tmap: TopologicalMap, fp: IO[str]) -> None:
    json.dump(tmap.to_document(), fp, indent=1)


@dataclass
class PolytunnelLayout:
    """Generator parameters for a Riseholme-like polytunnel map.

    Defaults give 2 tunnels x 5 lanes x 10 nodes = 100 lane nodes, 20
    headland nodes at the lane ends, 2 + 2 connector nodes between the
    tunnels and a 13-node spur towards the storage area: 137 nodes total.
    """

    tunnels: int = 2
    rows: int = 5
    nodes_per_row: int = 10
    lane_length: float = 30.0
    lane_spacing: float = 1.5
    headland_offset: float = 2.0
    tunnel_gap: float = 6.0
    connector_nodes: int = 2
    storage_nodes: int = 13
    storage_spacing: float = 3.0
    headlands: bool = True

    def validate(self) -> None:
        if self.tunnels < 1 or self.rows < 1 or self.nodes_per_row < 1:
            raise MapError("tunnels, rows and nodes_per_row must be >= 1")
        if self.nodes_per_row > 1 and self.lane_length <= 0:
            raise MapError("lane_length must be > 0")
        for name in ("lane_spacing", "headland_offset", "tunnel_gap", "storage_spacing"):
            if getattr(self, name) <= 0:
                raise MapError(f"{name} must be > 0")
        if self.connector_nodes < 0 or self.storage_nodes < 0:
            raise MapError("connector_nodes and storage_nodes must be >= 0")

    @property
    def node_spacing(self) -> float:
        return self.lane_length / max(self.nodes_per_row - 1, 1)


@dataclass
class PolytunnelMap:
    """A generated map plus the bookkeeping the simulator needs.

    ``lanes[t][r]`` is the left-to-right node list of lane r in tunnel t;
    ``left_headland[t][r]`` / ``right_headland[t][r]`` are the end nodes
    hanging off that lane (``None`` when headlands are disabled).
    """

    tmap: TopologicalMap
    layout: PolytunnelLayout
    lanes: list[list[list[int]]]
    left_headland: list[list[int | None]]
    right_headland: list[list[int | None]]
    storage: list[int]

    def bed_rectangles(self, corridor_half_width: float = 0.4) -> np.ndarray:
        """Axis-aligned (xmin, ymin, xmax, ymax) boxes for the raised beds.

        Beds fill the space between adjacent lanes and the strip outside the
        outermost lanes, over the lane's x extent; a lane corridor stays
        free within ``corridor_half_width`` of its centre line.
        """
        lay = self.layout
        x0, x1 = 0.0, lay.node_spacing * (lay.nodes_per_row - 1)
        boxes = []
        for tunnel in self.lanes:
            ys = [float(self.tmap.coords[lane[0], 1]) for lane in tunnel]
            edges = [ys[0] - lay.lane_spacing] + ys + [ys[-1] + lay.lane_spacing]
            for lo, hi in zip(edges[:-1], edges[1:]):
                boxes.append((x0, lo + corridor_half_width, x1, hi - corridor_half_width))
        return np.array(boxes, dtype=float).reshape(-1, 4)

    def lane_of(self, node: int) -> tuple[int, int] | None:
        for t, tunnel in enumerate(self.lanes):
            for r, lane in enumerate(tunnel):
                if node in lane:
                    return t, r
        return None


def generate_polytunnels(layout: PolytunnelLayout | None = None) -> PolytunnelMap:
    """Build the polytunnel topology described by ``layout``.

    Tunnels are stacked along +y. Each lane runs along +x. Headland nodes
    sit ``headland_offset`` beyond both lane ends and are chained across
    the lanes of a tunnel, so changing lane means leaving it at an end.
    Connector nodes join neighbouring tunnels' outermost headlands on both
    sides; the storage spur leaves the first left connector towards -x.
    With one tunnel, rows=1, nodes_per_row=2, no headlands and no storage
    spur the result is the 2-node test map.
    """
    layout = layout or PolytunnelLayout()
    layout.validate()
    coords: list[tuple[float, float]] = []
    edges: list[tuple[int, int]] = []

    def add(x: float, y: float) -> int:
        coords.append((x, y))
        return len(coords) - 1

    tunnel_width = (layout.rows - 1) * layout.lane_spacing
    xs = [i * layout.node_spacing for i in range(layout.nodes_per_row)]
    x_left = -layout.headland_offset
    x_right = xs[-1] + layout.headland_offset
    lanes, lefts, rights = [], [], []
    for t in range(layout.tunnels):
        y0 = t * (tunnel_width + layout.tunnel_gap)
        t_lanes, t_left, t_right = [], [], []
        for r in range(layout.rows):
            y = y0 + r * layout.lane_spacing
            lane = [add(x, y) for x in xs]
            edges += list(zip(lane[:-1], lane[1:]))
            hl = hr = None
            if layout.headlands:
                hl = add(x_left, y)
                hr = add(x_right, y)
                edges += [(hl, lane[0]), (lane[-1], hr)]
                if r > 0:
                    edges += [(t_left[-1], hl), (t_right[-1], hr)]
            t_lanes.append(lane)
            t_left.append(hl)
            t_right.append(hr)
        lanes.append(t_lanes)
        lefts.append(t_left)
        rights.append(t_right)

    first_left_connector = None
    if layout.tunnels > 1 and not layout.headlands:
        raise MapError("joining tunnels requires headlands")
    for t in range(layout.tunnels - 1):
        y_top = t * (tunnel_width + layout.tunnel_gap) + tunnel_width
        for side, heads, x in (("L", lefts, x_left), ("R", rights, x_right)):
            prev = heads[t][-1]
            for c in range(layout.connector_nodes):
                y = y_top + (c + 1) * layout.tunnel_gap / (layout.connector_nodes + 1)
                node = add(x, y)
                edges.append((prev, node))
                if side == "L" and first_left_connector is None:
                    first_left_connector = node
                prev = node
            edges.append((prev, heads[t + 1][0]))

    storage = []
    anchor = first_left_connector if first_left_connector is not None else (lefts[0][0] or lanes[0][0][0])
    prev = anchor
    for s in range(layout.storage_nodes):
        node = add(coords[anchor][0] - (s + 1) * layout.storage_spacing, coords[anchor][1])
        edges.append((prev, node))
        storage.append(node)
        prev = node

    tmap = TopologicalMap(np.array(coords), edges)
    return PolytunnelMap(tmap, layout, lanes, lefts, rights, storage)


def segment_blocked(a, b, boxes: np.ndarray) -> bool:
    """True if segment a-b passes through the interior of any box (Liang-Barsky clip)."""
    if len(boxes) == 0:
        return False
    a = np.asarray(a, dtype=float)
    d = np.asarray(b, dtype=float) - a
    t0 = np.zeros(len(boxes))
    t1 = np.ones(len(boxes))
    for axis in (0, 1):
        lo, hi = boxes[:, axis], boxes[:, axis + 2]
        if abs(d[axis]) < 1e-12:
            inside = (a[axis] > lo) & (a[axis] < hi)
            t1 = np.where(inside, t1, -1.0)
            continue
        ta = (lo - a[axis]) / d[axis]
        tb = (hi - a[axis]) / d[axis]
        t0 = np.maximum(t0, np.minimum(ta, tb))
        t1 = np.minimum(t1, np.maximum(ta, tb))
    return bool(np.any(t1 - t0 > 1e-9))


def bfs_hops(tmap: TopologicalMap, a: int) -> np.ndarray:
    """Plain breadth-first hop counts from node a (reference implementation)."""
    dist = np.full(tmap.num_nodes, -1, dtype=np.int64)
    dist[a] = 0
    queue = deque([a])
    while queue:
        u = queue.popleft()
        for w in np.flatnonzero(tmap.adjacency[u]):
            if dist[w] < 0:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist
