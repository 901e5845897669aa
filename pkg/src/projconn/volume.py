"""Dense distance volumes, min-intensity projections, and raw-file IO."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphs import AXES

KINDS = ("predicted", "ground-truth")


@dataclass(frozen=True)
class GenConfig:
    """Ground-truth generation settings.

    ``d_max`` is the truncation distance in voxels. ``step`` is the polyline
    sampling interval used by the synthetic scene generator and by graph
    rasterization; exact distance maps do not depend on it.
    """

    d_max: float = 15.0
    step: float = 0.25

    def __post_init__(self):
        if not self.d_max > 0:
            raise ValueError(f"d_max must be positive, got {self.d_max}")
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")


@dataclass(frozen=True)
class DistanceVolume:
    """3D scalar grid of truncated distances, shape (X, Y, Z), voxel units."""

    values: np.ndarray
    kind: str = "predicted"

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, order="C")
        if values.ndim != 3:
            raise ValueError(f"expected a 3D grid, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("volume contains non-finite values")
        if np.any(values < 0):
            raise ValueError("volume contains negative values")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class ProjectedMap:
    """Column-wise minima of a volume along one axis, plus argmin depths.

    ``values[u, v]`` is the smallest value of the source column and
    ``argmin[u, v]`` the smallest depth index achieving it. The 2D axes keep
    the original order of the two non-projected volume axes.
    """

    axis: str
    values: np.ndarray
    argmin: np.ndarray


def min_projection(vol: DistanceVolume, axis: str) -> ProjectedMap:
    """Minimum-intensity projection along ``axis`` (one of x, y, z)."""
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    k = AXES.index(axis)
    values = vol.values.min(axis=k)
    argmin = vol.values.argmin(axis=k).astype(np.int64)
    return ProjectedMap(axis=axis, values=values, argmin=argmin)


def _basename(path: str | Path) -> Path:
    path = Path(path)
    return path.with_suffix("") if path.suffix in (".vol", ".json") else path


def save_raw_grid(values: np.ndarray, path: str | Path, kind: str = "predicted") -> tuple[Path, Path]:
    """Write any (X, Y, Z) grid as ``<base>.vol`` + sidecar, without range checks.

    The raw file holds little-endian float32 in x-fastest order; gradient
    volumes (which may be negative) share this format.
    """
    base = _basename(path)
    vol_path = base.with_suffix(".vol")
    json_path = base.with_suffix(".json")
    raw = np.ascontiguousarray(np.asarray(values).transpose(2, 1, 0), dtype="<f4")
    raw.tofile(vol_path)
    with json_path.open("w") as fh:
        json.dump({"dims": list(values.shape), "kind": kind}, fh)
        fh.write("\n")
    return vol_path, json_path


def load_raw_grid(path: str | Path) -> tuple[np.ndarray, str]:
    """Read a raw grid written by :func:`save_raw_grid`; returns (values, kind)."""
    base = _basename(path)
    vol_path = base.with_suffix(".vol")
    json_path = base.with_suffix(".json")
    with json_path.open("r") as fh:
        meta = json.load(fh)
    dims = tuple(int(d) for d in meta["dims"])
    if len(dims) != 3:
        raise ValueError(f"sidecar dims must have 3 entries, got {meta['dims']}")
    raw = np.fromfile(vol_path, dtype="<f4")
    expected = dims[0] * dims[1] * dims[2]
    if raw.size != expected:
        raise ValueError(
            f"{vol_path} holds {raw.size} values, dims {dims} require {expected}"
        )
    values = raw.reshape(dims[2], dims[1], dims[0]).transpose(2, 1, 0)
    return values.astype(np.float64), meta.get("kind", "predicted")


def save_volume(vol: DistanceVolume, path: str | Path) -> tuple[Path, Path]:
    """Write a distance volume as ``<base>.vol`` + JSON sidecar."""
    return save_raw_grid(vol.values, path, kind=vol.kind)


def load_volume(path: str | Path) -> DistanceVolume:
    """Read a volume written by :func:`save_volume`."""
    values, kind = load_raw_grid(path)
    return DistanceVolume(values=values, kind=kind)


def write_pgm(values: np.ndarray, path: str | Path, d_max: float = 15.0) -> None:
    """Export a 2D map as 16-bit PGM scaled by 4096/d_max, for inspection only."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"expected a 2D map, got shape {values.shape}")
    scaled = np.clip(np.rint(values * (4096.0 / d_max)), 0, 65535).astype(">u2")
    h, w = scaled.shape
    with Path(path).open("wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(scaled.tobytes())
