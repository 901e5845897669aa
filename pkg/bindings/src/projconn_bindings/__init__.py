"""Array-boundary bindings for the projconn loss engine.

Exposes a single entry point, :func:`loss_forward_backward`, so training
loops can evaluate the composite loss and its gradient on in-memory arrays.
Buffers cross the boundary as contiguous 32-bit floats in x-fastest
(column-major) layout, matching the engine's raw volume format; every call
validates shape, dtype, layout, and aliasing before touching the engine and
returns the gradient as a fresh buffer.

Results are bit-identical to the ``projconn loss`` command run on the same
data: the boundary performs exactly the float32-to-float64 widening the
volume loader performs, then delegates to the same loss implementation.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

import projconn
from projconn.composite import CompositeConfig, loss_2d, loss_3d
from projconn.graphs import AXES
from projconn.topo import TopoConfig
from projconn.volume import DistanceVolume

__version__ = "0.1.0"

__all__ = ["BoundaryError", "engine_version", "loss_forward_backward", "__version__"]


class BoundaryError(ValueError):
    """Rejected at the array boundary, before any engine execution."""


def engine_version() -> str:
    """Version of the underlying loss engine."""
    return projconn.__version__


def _check_handle(arr, ndim: int, name: str) -> np.ndarray:
    if not isinstance(arr, np.ndarray):
        raise BoundaryError(f"{name} must be a numpy array, got {type(arr).__name__}")
    if arr.dtype != np.float32:
        raise BoundaryError(f"{name} must be float32, got {arr.dtype}")
    if arr.ndim != ndim:
        raise BoundaryError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise BoundaryError(f"{name} is empty")
    if not arr.flags.f_contiguous:
        raise BoundaryError(
            f"{name} must be contiguous in x-fastest (column-major) layout"
        )
    return arr


def _widen(arr: np.ndarray) -> np.ndarray:
    # identical widening to the raw-volume loader, so results match the CLI
    return arr.astype(np.float64)


def loss_forward_backward(
    pred: np.ndarray,
    targets: np.ndarray | Sequence[np.ndarray],
    alpha: float = 1e-3,
    beta: float = 0.1,
    window: int = 48,
) -> tuple[float, Mapping, np.ndarray]:
    """Loss value, component breakdown, and gradient for a prediction.

    ``pred`` is an (X, Y, Z) float32 buffer of predicted truncated distances.
    ``targets`` selects the mode: a single (X, Y, Z) buffer evaluates the 3D
    composite loss against a volumetric ground truth; a sequence of three 2D
    buffers (ordered x, y, z, each shaped like the corresponding projection
    of ``pred``) evaluates the projected 2D composite loss. Returns
    ``(total, components, grad)`` where ``components`` carries the same
    fields as the CLI loss report and ``grad`` is a fresh float32 buffer in
    the same layout as ``pred``.
    """
    pred = _check_handle(pred, 3, "pred")

    if isinstance(targets, np.ndarray):
        gt = _check_handle(targets, 3, "gt")
        if gt.shape != pred.shape:
            raise BoundaryError(f"gt shape {gt.shape} != pred shape {pred.shape}")
        if np.shares_memory(pred, gt):
            raise BoundaryError("pred and gt must not alias the same buffer")
        cfg = CompositeConfig(
            alpha=alpha, mode="loss-3d", topo=TopoConfig(window=window, beta=beta)
        )
        report = loss_3d(DistanceVolume(_widen(pred)), DistanceVolume(_widen(gt)), cfg)
    else:
        maps = list(targets)
        if len(maps) != 3:
            raise BoundaryError(f"expected three 2D targets (x, y, z), got {len(maps)}")
        widened = {}
        for k, (axis, arr) in enumerate(zip(AXES, maps)):
            arr = _check_handle(arr, 2, f"gt2d_{axis}")
            expected = tuple(d for i, d in enumerate(pred.shape) if i != k)
            if arr.shape != expected:
                raise BoundaryError(
                    f"gt2d_{axis} shape {arr.shape} != projection shape {expected}"
                )
            if np.shares_memory(pred, arr):
                raise BoundaryError(f"pred and gt2d_{axis} must not alias the same buffer")
            widened[axis] = _widen(arr)
        cfg = CompositeConfig(
            alpha=alpha, mode="loss-2d", topo=TopoConfig(window=window, beta=beta)
        )
        report = loss_2d(
            DistanceVolume(_widen(pred)), widened["x"], widened["y"], widened["z"], cfg
        )

    components = report.to_json_dict()
    grad = np.asfortranarray(report.gradient.astype(np.float32))
    return float(report.total), components, grad
