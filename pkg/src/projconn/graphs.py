"""Centerline annotation graphs and the SWC interchange format."""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

AXES = ("x", "y", "z")


class SWCError(ValueError):
    """Unparseable SWC content. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class GraphError(ValueError):
    """Structurally invalid annotation graph (dangling edge, bad bounds, ...)."""


@dataclass(frozen=True)
class AnnotationGraph:
    """Polyline centerline graph with node positions in voxel units.

    2D graphs keep a zero third coordinate so one representation, parser and
    validator serve both cases.
    """

    ids: np.ndarray         # (n,) int64, unique
    positions: np.ndarray   # (n, 3) float64
    edges: np.ndarray       # (m, 2) int64, node ids
    dimensionality: int = 3

    def __post_init__(self):
        ids = np.atleast_1d(np.asarray(self.ids, dtype=np.int64))
        positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if ids.shape[0] != positions.shape[0]:
            raise GraphError("ids and positions disagree in length")
        if ids.shape[0] != np.unique(ids).shape[0]:
            raise GraphError("duplicate node ids")
        if self.dimensionality not in (2, 3):
            raise GraphError(f"dimensionality must be 2 or 3, got {self.dimensionality}")
        if self.dimensionality == 2 and positions.shape[0] and np.any(positions[:, 2] != 0.0):
            raise GraphError("2D graph has nonzero third coordinate")
        known = set(ids.tolist())
        for a, b in edges.tolist():
            if a == b:
                raise GraphError(f"self-edge on node {a}")
            if a not in known or b not in known:
                raise GraphError(f"edge ({a}, {b}) references a missing node")
        for arr in (ids, positions, edges):
            arr.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "edges", edges)

    @property
    def n_nodes(self) -> int:
        return int(self.ids.shape[0])

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    def index_of(self) -> dict[int, int]:
        """Map node id to row index."""
        return {int(i): k for k, i in enumerate(self.ids)}

    def segments(self) -> np.ndarray:
        """Edge endpoint positions, shape (n_edges, 2, 3)."""
        if self.n_edges == 0:
            return np.zeros((0, 2, 3))
        idx = self.index_of()
        rows = np.array([[idx[int(a)], idx[int(b)]] for a, b in self.edges])
        return self.positions[rows]

    def degrees(self) -> dict[int, int]:
        deg = {int(i): 0 for i in self.ids}
        for a, b in self.edges.tolist():
            deg[a] += 1
            deg[b] += 1
        return deg


def _check_bounds(positions: np.ndarray, dims: tuple[int, ...]) -> int | None:
    """Return the row of the first out-of-bounds node, or None."""
    for k, size in enumerate(dims):
        bad = np.nonzero((positions[:, k] < 0) | (positions[:, k] > size - 1))[0]
        if bad.size:
            return int(bad[0])
    return None


def load_graph(path: str | Path, expected_dims: tuple[int, ...]) -> AnnotationGraph:
    """Parse an SWC file into a validated AnnotationGraph.

    ``expected_dims`` is (X, Y, Z) for a 3D graph or (X, Y) for a 2D one; in
    the 2D case every z coordinate must be exactly zero. Node positions must
    lie inside the voxel grid, i.e. within [0, dim-1] per axis. The radius
    column is ignored; parent pointers become undirected edges.
    """
    path = Path(path)
    dims = tuple(int(d) for d in expected_dims)
    if len(dims) not in (2, 3):
        raise GraphError(f"expected_dims must have 2 or 3 entries, got {len(dims)}")

    ids: list[int] = []
    positions: list[tuple[float, float, float]] = []
    parents: list[int] = []
    seen: set[int] = set()
    with path.open("r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            fields = text.split()
            if len(fields) != 7:
                raise SWCError(f"expected 7 fields, got {len(fields)}", lineno)
            try:
                nid = int(fields[0])
                x, y, z = (float(v) for v in fields[2:5])
                parent = int(fields[6])
            except ValueError as exc:
                raise SWCError(str(exc), lineno) from None
            if nid in seen:
                raise SWCError(f"duplicate node id {nid}", lineno)
            seen.add(nid)
            ids.append(nid)
            positions.append((x, y, z))
            parents.append(parent)

    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    edges = [(nid, parent) for nid, parent in zip(ids, parents) if parent != -1]
    for nid, parent in edges:
        if parent not in seen:
            raise GraphError(f"node {nid} has dangling parent {parent}")

    dimensionality = 3 if len(dims) == 3 else 2
    if dimensionality == 2 and pos.shape[0] and np.any(pos[:, 2] != 0.0):
        raise GraphError("2D graph must have z == 0 on every node")
    bad = _check_bounds(pos, dims)
    if bad is not None:
        raise GraphError(
            f"node {ids[bad]} at {tuple(pos[bad])} lies outside dims {dims}"
        )
    return AnnotationGraph(
        ids=np.asarray(ids, dtype=np.int64),
        positions=pos,
        edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2),
        dimensionality=dimensionality,
    )


def save_graph(graph: AnnotationGraph, path: str | Path) -> None:
    """Write a graph as SWC, radius fixed at 1.0.

    SWC encodes a forest, so a spanning forest of the graph is written; any
    cycle-closing edges are dropped.
    """
    adj: dict[int, list[int]] = defaultdict(list)
    for a, b in graph.edges.tolist():
        adj[a].append(b)
        adj[b].append(a)
    for nbrs in adj.values():
        nbrs.sort()

    parent: dict[int, int] = {}
    for root in sorted(int(i) for i in graph.ids):
        if root in parent:
            continue
        parent[root] = -1
        queue = deque([root])
        while queue:
            cur = queue.popleft()
            for nxt in adj[cur]:
                if nxt not in parent:
                    parent[nxt] = cur
                    queue.append(nxt)

    idx = graph.index_of()
    path = Path(path)
    with path.open("w") as fh:
        for nid in sorted(idx):
            x, y, z = (float(v) for v in graph.positions[idx[nid]])
            fh.write(f"{nid} 0 {x!r} {y!r} {z!r} 1.0 {parent[nid]}\n")


def project_graph(graph: AnnotationGraph, axis: str) -> AnnotationGraph:
    """Drop one coordinate, producing the 2D graph seen along ``axis``.

    Remaining coordinates keep their original order, matching the layout of
    2D maps produced by min-intensity projection along the same axis.
    """
    if graph.dimensionality != 3:
        raise GraphError("can only project a 3D graph")
    k = AXES.index(axis)
    keep = [i for i in range(3) if i != k]
    pos = np.zeros_like(graph.positions)
    pos[:, 0] = graph.positions[:, keep[0]]
    pos[:, 1] = graph.positions[:, keep[1]]
    return AnnotationGraph(
        ids=graph.ids.copy(),
        positions=pos,
        edges=graph.edges.copy(),
        dimensionality=2,
    )


def rasterize_graph(graph: AnnotationGraph, dims: tuple[int, ...], step: float = 0.25) -> np.ndarray:
    """Boolean centerline mask: edges sampled every ``step`` voxels, rounded."""
    nd = len(dims)
    mask = np.zeros(dims, dtype=bool)
    segs = graph.segments()[:, :, :nd]
    for a, b in segs:
        length = float(np.linalg.norm(b - a))
        n = max(2, int(np.ceil(length / step)) + 1)
        t = np.linspace(0.0, 1.0, n)[:, None]
        pts = np.rint(a[None, :] + t * (b - a)[None, :]).astype(np.int64)
        pts = np.clip(pts, 0, np.array(dims) - 1)
        mask[tuple(pts.T)] = True
    return mask
