"""Exact truncated distance maps from centerline graphs."""

from __future__ import annotations

import numpy as np

from .graphs import AnnotationGraph
from .volume import DistanceVolume, GenConfig

# Voxel block size for the per-segment distance sweep; bounds peak memory.
_CHUNK = 1 << 21


def point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance from each row of ``points`` to segment a-b.

    Closed form: project onto the segment's supporting line, clamp the
    parameter to [0, 1], measure to the foot point. Degenerate segments
    (a == b) fall back to point distance.
    """
    points = np.asarray(points, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=-1)
    t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0)
    foot = a + t[:, None] * ab
    return np.linalg.norm(points - foot, axis=-1)


def _distance_grid(segments: np.ndarray, dims: tuple[int, ...], d_max: float) -> np.ndarray:
    """Min distance-to-any-segment on the integer lattice, clamped at d_max."""
    nd = len(dims)
    out = np.full(dims, d_max, dtype=np.float64)
    if segments.shape[0] == 0:
        return out
    coords = np.indices(dims).reshape(nd, -1).T.astype(np.float64)
    flat = out.reshape(-1)
    for start in range(0, coords.shape[0], _CHUNK):
        block = coords[start : start + _CHUNK]
        best = flat[start : start + _CHUNK]
        for a, b in segments:
            np.minimum(best, point_segment_distance(block, a, b), out=best)
    return out


def gen_distance_map(
    graph: AnnotationGraph,
    dims: tuple[int, int, int],
    cfg: GenConfig | None = None,
) -> DistanceVolume:
    """Ground-truth distance volume for a 3D annotation graph.

    Each voxel center receives its exact Euclidean distance to the nearest
    graph edge, truncated at ``cfg.d_max``. An empty edge set yields a
    uniform d_max volume.
    """
    cfg = cfg or GenConfig()
    if graph.dimensionality != 3:
        raise ValueError("graph dimensionality must be 3; use gen_distance_map_2d")
    if len(dims) != 3:
        raise ValueError(f"dims must be (X, Y, Z), got {dims}")
    values = _distance_grid(graph.segments(), tuple(int(d) for d in dims), cfg.d_max)
    return DistanceVolume(values=values, kind="ground-truth")


def gen_distance_map_2d(
    graph: AnnotationGraph,
    dims: tuple[int, int],
    cfg: GenConfig | None = None,
) -> np.ndarray:
    """2D variant for 2D graphs: returns the bare (X, Y) map."""
    cfg = cfg or GenConfig()
    if graph.dimensionality != 2:
        raise ValueError("graph dimensionality must be 2")
    if len(dims) != 2:
        raise ValueError(f"dims must be (X, Y), got {dims}")
    segments = graph.segments()[:, :, :2]
    return _distance_grid(segments, tuple(int(d) for d in dims), cfg.d_max)
