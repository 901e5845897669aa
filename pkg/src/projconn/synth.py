"""Synthetic tube scenes: ground truth plus scripted corruptions.

A scene is a JSON-friendly description of tube centerlines and a list of
edits applied to a copy of the ground truth to fake a defective prediction.
Supported edits:

* ``gap``: raise every voxel inside a ball to d_max (breaks the tube)
* ``bridge``: zero every voxel near a segment (falsely joins structures)
* ``noise``: add seeded Gaussian noise, clipped back to [0, d_max]
* ``offset``: add a constant, clipped back to [0, d_max]
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distance import gen_distance_map, point_segment_distance
from .graphs import AnnotationGraph
from .volume import DistanceVolume, GenConfig


class SceneError(ValueError):
    """Invalid scene description."""


@dataclass(frozen=True)
class Tube:
    points: np.ndarray  # (k, 3) float64 polyline
    radius: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if pts.shape[0] < 2:
            raise SceneError("a tube needs at least 2 polyline points")
        if not self.radius > 0:
            raise SceneError(f"tube radius must be positive, got {self.radius}")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class Scene:
    dims: tuple[int, int, int]
    tubes: tuple[Tube, ...]
    corruptions: tuple[dict, ...] = ()
    cfg: GenConfig = field(default_factory=GenConfig)

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(d) <= 0 for d in self.dims):
            raise SceneError(f"dims must be 3 positive integers, got {self.dims}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        bound = np.asarray(self.dims, dtype=np.float64) - 1
        for tube in self.tubes:
            if np.any(tube.points < 0) or np.any(tube.points > bound):
                raise SceneError(f"tube leaves the volume bounds {self.dims}")


def load_scene(source: str | Path | dict) -> Scene:
    """Build a Scene from a JSON file path or an already-parsed dict."""
    if isinstance(source, (str, Path)):
        with Path(source).open("r") as fh:
            doc = json.load(fh)
    else:
        doc = source
    try:
        dims = tuple(doc["dims"])
        tubes = tuple(
            Tube(points=np.asarray(t["points"], dtype=np.float64), radius=float(t["radius"]))
            for t in doc["tubes"]
        )
    except KeyError as exc:
        raise SceneError(f"scene is missing required key {exc}") from None
    cfg = GenConfig(
        d_max=float(doc.get("d_max", 15.0)),
        step=float(doc.get("step", 0.25)),
    )
    corruptions = tuple(dict(c) for c in doc.get("corruptions", ()))
    return Scene(dims=dims, tubes=tubes, corruptions=corruptions, cfg=cfg)


def _subdivide(points: np.ndarray, step: float) -> np.ndarray:
    """Resample a polyline so consecutive vertices are at most ``step`` apart."""
    out = [points[0]]
    for a, b in zip(points[:-1], points[1:]):
        length = float(np.linalg.norm(b - a))
        n = max(1, int(np.ceil(length / step)))
        for i in range(1, n + 1):
            out.append(a + (b - a) * (i / n))
    return np.asarray(out)


def scene_graph(scene: Scene) -> AnnotationGraph:
    """Annotation graph of the scene's centerlines, subdivided at cfg.step."""
    ids: list[int] = []
    positions: list[np.ndarray] = []
    edges: list[tuple[int, int]] = []
    next_id = 1
    for tube in scene.tubes:
        pts = _subdivide(tube.points, scene.cfg.step)
        first = next_id
        for p in pts:
            ids.append(next_id)
            positions.append(p)
            next_id += 1
        edges.extend((i, i + 1) for i in range(first, next_id - 1))
    return AnnotationGraph(
        ids=np.asarray(ids, dtype=np.int64),
        positions=np.asarray(positions, dtype=np.float64).reshape(-1, 3),
        edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2),
        dimensionality=3,
    )


def _voxel_coords(dims: tuple[int, int, int]) -> np.ndarray:
    return np.indices(dims).reshape(3, -1).T.astype(np.float64)


def apply_corruption(values: np.ndarray, op: dict, d_max: float) -> np.ndarray:
    """Apply one corruption op to a (writable) value grid, in place."""
    kind = op.get("op")
    coords = None
    if kind == "gap":
        center = np.asarray(op["center"], dtype=np.float64)
        radius = float(op["length"]) / 2.0
        coords = _voxel_coords(values.shape)
        inside = np.linalg.norm(coords - center, axis=1) <= radius
        values.reshape(-1)[inside] = d_max
    elif kind == "bridge":
        a = np.asarray(op["from"], dtype=np.float64)
        b = np.asarray(op["to"], dtype=np.float64)
        radius = float(op.get("radius", 1.0))
        coords = _voxel_coords(values.shape)
        near = point_segment_distance(coords, a, b) <= radius
        values.reshape(-1)[near] = 0.0
    elif kind == "noise":
        rng = np.random.default_rng(int(op.get("seed", 0)))
        values += rng.normal(0.0, float(op["sigma"]), size=values.shape)
        np.clip(values, 0.0, d_max, out=values)
    elif kind == "offset":
        values += float(op["value"])
        np.clip(values, 0.0, d_max, out=values)
    else:
        raise SceneError(f"unknown corruption op {kind!r}")
    return values


def synth_volume(scene: Scene) -> tuple[DistanceVolume, AnnotationGraph, DistanceVolume]:
    """Generate (ground truth, annotation graph, corrupted prediction)."""
    graph = scene_graph(scene)
    gt = gen_distance_map(graph, scene.dims, scene.cfg)
    pred = np.array(gt.values)
    for op in scene.corruptions:
        apply_corruption(pred, op, scene.cfg.d_max)
    return gt, graph, DistanceVolume(values=pred, kind="predicted")
