"""Prediction post-processing and topology-aware evaluation metrics.

The evaluation pipeline mirrors how delineation results are scored: threshold
the distance map, thin it to a skeleton, turn the skeleton into a spatial
graph by voxel connectivity, then compare against the ground-truth graph with
tolerance-based voxel scores (CCQ) and shortest-path scores (APLS, TLTS).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .skeleton import skeletonize
from .volume import DistanceVolume

_NEIGHBOR_OFFSETS = [
    (dx, dy, dz)
    for dx in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dz in (-1, 0, 1)
    if (dx, dy, dz) != (0, 0, 0)
]


@dataclass(frozen=True)
class ExtractionConfig:
    threshold: float = 2.0
    connectivity: int = 26

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if self.connectivity != 26:
            raise ValueError("only 26-connectivity is supported for skeleton adjacency")


@dataclass(frozen=True)
class MetricConfig:
    ccq_tolerance: float = 3.0
    tlts_band: float = 0.15
    apls_pairs: int = 500
    snap_radius: float = 5.0
    rng_seed: int = 0
    # When True, sample path endpoints only among degree-<=1 nodes (graph
    # leaves) instead of all nodes.
    sample_leaves: bool = False

    def __post_init__(self):
        if not self.ccq_tolerance > 0:
            raise ValueError(f"ccq_tolerance must be positive, got {self.ccq_tolerance}")
        if not 0 < self.tlts_band < 1:
            raise ValueError(f"tlts_band must be in (0, 1), got {self.tlts_band}")
        if self.apls_pairs < 1:
            raise ValueError(f"apls_pairs must be >= 1, got {self.apls_pairs}")


@dataclass(frozen=True)
class SpatialGraph:
    """Graph of skeleton voxels: node ids are row indices into ``positions``."""

    positions: np.ndarray  # (n, 3) int64 voxel coordinates
    edges: np.ndarray      # (m, 2) int64 node indices, u < v
    lengths: np.ndarray    # (m,) float64 Euclidean polyline lengths
    provenance: str = "extracted"

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.int64).reshape(-1, 3)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        lengths = np.asarray(self.lengths, dtype=np.float64).reshape(-1)
        if edges.shape[0] != lengths.shape[0]:
            raise ValueError("edges and lengths disagree in length")
        if edges.size:
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self-loops are not allowed")
            keys = {(int(a), int(b)) for a, b in np.sort(edges, axis=1)}
            if len(keys) != edges.shape[0]:
                raise ValueError("duplicate edges are not allowed")
            if edges.min() < 0 or edges.max() >= positions.shape[0]:
                raise ValueError("edge references a missing node")
        if self.provenance not in ("extracted", "annotation"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        for arr in (positions, edges, lengths):
            arr.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "lengths", lengths)

    @property
    def n_nodes(self) -> int:
        return int(self.positions.shape[0])

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        for a, b in self.edges.tolist():
            deg[a] += 1
            deg[b] += 1
        return deg

    def adjacency_matrix(self) -> csr_matrix:
        n = self.n_nodes
        if self.edges.size == 0:
            return csr_matrix((n, n))
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        data = np.concatenate([self.lengths, self.lengths])
        return csr_matrix((data, (rows, cols)), shape=(n, n))


def voxel_graph(mask: np.ndarray, provenance: str = "extracted") -> SpatialGraph:
    """Convert a thin voxel set into a spatial graph by 26-connectivity.

    Voxels with a neighbor count other than 2 become nodes (junctions,
    endpoints, isolated voxels); maximal chains of degree-2 voxels become
    edges whose length accumulates the Euclidean step lengths. An isolated
    cycle contributes its lexicographically smallest voxel as an anchor node
    and no edge (self-loops are excluded by the graph invariants).
    """
    mask = np.asarray(mask, dtype=bool)
    voxels = np.argwhere(mask)
    if voxels.shape[0] == 0:
        return SpatialGraph(
            positions=np.zeros((0, 3), dtype=np.int64),
            edges=np.zeros((0, 2), dtype=np.int64),
            lengths=np.zeros(0),
            provenance=provenance,
        )
    index = {tuple(v): i for i, v in enumerate(voxels.tolist())}
    neighbors: list[list[int]] = []
    for v in voxels.tolist():
        nbrs = []
        for off in _NEIGHBOR_OFFSETS:
            j = index.get((v[0] + off[0], v[1] + off[1], v[2] + off[2]))
            if j is not None:
                nbrs.append(j)
        neighbors.append(sorted(nbrs))
    degree = np.array([len(n) for n in neighbors])

    node_voxels = set(np.nonzero(degree != 2)[0].tolist())
    touched: set[int] = set()
    step_seen: set[tuple[int, int]] = set()
    raw_edges: dict[tuple[int, int], float] = {}

    def step_length(i: int, j: int) -> float:
        return float(np.linalg.norm(voxels[i] - voxels[j]))

    for start in sorted(node_voxels):
        for first in neighbors[start]:
            if (start, first) in step_seen:
                continue
            length = step_length(start, first)
            prev, cur = start, first
            step_seen.add((start, first))
            step_seen.add((first, start))
            while cur not in node_voxels:
                touched.add(cur)
                nxt = [k for k in neighbors[cur] if k != prev]
                # Degree-2 interior voxel has exactly one way forward.
                nxt = nxt[0]
                step_seen.add((cur, nxt))
                step_seen.add((nxt, cur))
                length += step_length(cur, nxt)
                prev, cur = cur, nxt
            if cur == start:
                continue
            key = (min(start, cur), max(start, cur))
            if key not in raw_edges or length < raw_edges[key]:
                raw_edges[key] = length

    cycle_anchors: list[int] = []
    for i in range(voxels.shape[0]):
        if degree[i] != 2 or i in touched or i in node_voxels:
            continue
        cycle_anchors.append(i)
        prev, cur = i, neighbors[i][0]
        while cur != i:
            touched.add(cur)
            nxt = [k for k in neighbors[cur] if k != prev][0]
            prev, cur = cur, nxt
        touched.add(i)

    all_nodes = sorted(node_voxels | set(cycle_anchors))
    remap = {old: new for new, old in enumerate(all_nodes)}
    edges = np.array([[remap[a], remap[b]] for a, b in sorted(raw_edges)], dtype=np.int64)
    lengths = np.array([raw_edges[k] for k in sorted(raw_edges)], dtype=np.float64)
    return SpatialGraph(
        positions=voxels[all_nodes],
        edges=edges.reshape(-1, 2),
        lengths=lengths,
        provenance=provenance,
    )


def extract_graph(pred: DistanceVolume, cfg: ExtractionConfig | None = None) -> SpatialGraph:
    """Threshold, skeletonize, and trace a prediction into a spatial graph."""
    cfg = cfg or ExtractionConfig()
    return voxel_graph(skeletonize(pred.values < cfg.threshold), provenance="extracted")


def spatial_to_annotation(graph: SpatialGraph):
    """Re-id a spatial graph as an annotation graph for SWC interchange.

    Node ids become 1..n in position order. Cycle-closing edges do not
    survive SWC's forest encoding when the result is written out.
    """
    from .graphs import AnnotationGraph

    return AnnotationGraph(
        ids=np.arange(1, graph.n_nodes + 1),
        positions=graph.positions.astype(np.float64),
        edges=graph.edges + 1,
        dimensionality=3,
    )


def spatial_from_annotation(graph) -> SpatialGraph:
    """Convert an annotation graph to a spatial graph with voxel node positions.

    Node positions are rounded to the lattice; edge lengths keep the exact
    segment geometry. Nodes collapsing onto the same voxel are merged, and
    the resulting self-loops or parallel edges are dropped (keeping the
    shortest length), preserving the simple-graph invariants.
    """
    rounded = np.rint(graph.positions).astype(np.int64)
    idx = graph.index_of()
    voxel_to_node: dict[tuple[int, int, int], int] = {}
    positions: list[tuple[int, int, int]] = []
    row_to_node: dict[int, int] = {}
    for row in range(graph.n_nodes):
        key = tuple(rounded[row])
        if key not in voxel_to_node:
            voxel_to_node[key] = len(positions)
            positions.append(key)
        row_to_node[row] = voxel_to_node[key]
    edges: dict[tuple[int, int], float] = {}
    for a, b in graph.edges.tolist():
        ra, rb = idx[a], idx[b]
        u, v = row_to_node[ra], row_to_node[rb]
        if u == v:
            continue
        length = float(np.linalg.norm(graph.positions[ra] - graph.positions[rb]))
        key = (min(u, v), max(u, v))
        if key not in edges or length < edges[key]:
            edges[key] = length
    keys = sorted(edges)
    return SpatialGraph(
        positions=np.asarray(positions, dtype=np.int64).reshape(-1, 3),
        edges=np.asarray(keys, dtype=np.int64).reshape(-1, 2),
        lengths=np.asarray([edges[k] for k in keys], dtype=np.float64),
        provenance="annotation",
    )


def skeleton_voxels(pred: DistanceVolume, cfg: ExtractionConfig | None = None) -> np.ndarray:
    """Centerline voxel coordinates of a prediction, shape (n, 3)."""
    cfg = cfg or ExtractionConfig()
    return np.argwhere(skeletonize(pred.values < cfg.threshold))


def ccq(
    pred_voxels: np.ndarray, gt_voxels: np.ndarray, cfg: MetricConfig | None = None
) -> tuple[float, float, float]:
    """Correctness, completeness, quality of centerline voxel sets.

    A predicted voxel is a true positive when strictly closer than
    ``ccq_tolerance`` to some ground-truth voxel, and a ground-truth voxel is
    matched when strictly closer than the tolerance to some prediction.
    Empty prediction scores (0, 0, 0) against a non-empty ground truth;
    two empty sets score (1, 1, 1).
    """
    cfg = cfg or MetricConfig()
    pred = np.asarray(pred_voxels, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt_voxels, dtype=np.float64).reshape(-1, 3)
    if pred.shape[0] == 0 and gt.shape[0] == 0:
        return 1.0, 1.0, 1.0
    if pred.shape[0] == 0:
        return 0.0, 0.0, 0.0
    if gt.shape[0] == 0:
        return 0.0, 1.0, 0.0
    d_pred, _ = cKDTree(gt).query(pred)
    tp = int(np.sum(d_pred < cfg.ccq_tolerance))
    fp = pred.shape[0] - tp
    d_gt, _ = cKDTree(pred).query(gt)
    matched = int(np.sum(d_gt < cfg.ccq_tolerance))
    fn = gt.shape[0] - matched
    correctness = tp / (tp + fp)
    completeness = matched / (matched + fn)
    quality = tp / (tp + fp + fn) if (tp + fp + fn) else 1.0
    return float(correctness), float(completeness), float(quality)


def _components(graph: SpatialGraph) -> np.ndarray:
    parent = list(range(graph.n_nodes))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in graph.edges.tolist():
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra
    return np.array([find(i) for i in range(graph.n_nodes)])


def sample_path_pairs(gt: SpatialGraph, cfg: MetricConfig) -> list[tuple[int, int]]:
    """Seeded uniform sample of connected, distinct ground-truth node pairs."""
    if gt.n_nodes < 2:
        raise ValueError("ground-truth graph needs at least 2 nodes")
    comp = _components(gt)
    eligible = np.ones(gt.n_nodes, dtype=bool)
    if cfg.sample_leaves:
        eligible = gt.degrees() <= 1
    sizes = {}
    for i in range(gt.n_nodes):
        if eligible[i]:
            sizes[comp[i]] = sizes.get(comp[i], 0) + 1
    if not any(s >= 2 for s in sizes.values()):
        raise ValueError("ground-truth graph has no connected eligible node pair")
    rng = np.random.default_rng(cfg.rng_seed)
    pairs: list[tuple[int, int]] = []
    while len(pairs) < cfg.apls_pairs:
        u, v = (int(k) for k in rng.integers(0, gt.n_nodes, size=2))
        if u == v or not (eligible[u] and eligible[v]) or comp[u] != comp[v]:
            continue
        pairs.append((u, v))
    return pairs


def _snap_nodes(gt: SpatialGraph, pred: SpatialGraph, nodes: list[int], radius: float) -> dict[int, int | None]:
    snapped: dict[int, int | None] = {}
    if pred.n_nodes == 0:
        return {u: None for u in nodes}
    pred_pos = pred.positions.astype(np.float64)
    for u in nodes:
        d = np.linalg.norm(pred_pos - gt.positions[u].astype(np.float64), axis=1)
        best = int(np.argmin(d))
        snapped[u] = best if d[best] <= radius else None
    return snapped


def _pair_lengths(
    pred: SpatialGraph, gt: SpatialGraph, cfg: MetricConfig
) -> list[tuple[float, float | None]]:
    """(gt length, pred length or None) per sampled pair; shared by APLS/TLTS."""
    pairs = sample_path_pairs(gt, cfg)
    endpoints = sorted({u for p in pairs for u in p})
    snapped = _snap_nodes(gt, pred, endpoints, cfg.snap_radius)

    gt_sources = sorted({u for u, _ in pairs})
    gt_dist = {}
    if gt_sources:
        rows = dijkstra(gt.adjacency_matrix(), directed=False, indices=gt_sources)
        gt_dist = {u: rows[i] for i, u in enumerate(gt_sources)}
    pred_sources = sorted({snapped[u] for u, _ in pairs if snapped[u] is not None})
    pred_dist = {}
    if pred_sources and pred.n_nodes:
        rows = dijkstra(pred.adjacency_matrix(), directed=False, indices=pred_sources)
        pred_dist = {u: rows[i] for i, u in enumerate(pred_sources)}

    samples: list[tuple[float, float | None]] = []
    for u, v in pairs:
        lg = float(gt_dist[u][v])
        su, sv = snapped[u], snapped[v]
        lp: float | None = None
        if su is not None and sv is not None:
            raw = float(pred_dist[su][sv])
            lp = raw if np.isfinite(raw) else None
        samples.append((lg, lp))
    return samples


def apls(pred: SpatialGraph, gt: SpatialGraph, cfg: MetricConfig | None = None) -> float:
    """1 minus the mean capped relative shortest-path length difference.

    Pairs whose endpoints fail to snap to a prediction node within
    ``snap_radius``, or that are disconnected in the prediction, score the
    maximal penalty of 1.
    """
    cfg = cfg or MetricConfig()
    samples = _pair_lengths(pred, gt, cfg)
    scores = [
        1.0 if lp is None else min(1.0, abs(lg - lp) / lg)
        for lg, lp in samples
    ]
    return float(1.0 - sum(scores) / len(scores))


def tlts(pred: SpatialGraph, gt: SpatialGraph, cfg: MetricConfig | None = None) -> float:
    """Fraction of sampled paths within ±tlts_band of the ground-truth length."""
    cfg = cfg or MetricConfig()
    samples = _pair_lengths(pred, gt, cfg)
    correct = sum(
        1 for lg, lp in samples if lp is not None and abs(lp - lg) < cfg.tlts_band * lg
    )
    return float(correct / len(samples))


def metrics_csv(values: dict[str, float]) -> str:
    """CSV in the fixed metric order expected by downstream tooling."""
    lines = ["metric,value"]
    for key in ("correctness", "completeness", "quality", "apls", "tlts"):
        lines.append(f"{key},{values[key]!r}")
    return "\n".join(lines) + "\n"
