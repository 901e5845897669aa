"""Composite losses over axis projections, with gradients routed back to 3D.

The connectivity term evaluates the 2D topological loss on min-intensity
projections of the predicted and target distance maps along each requested
axis. Because a projection is a column-wise min, its subgradient routes every
2D gradient entry to the single voxel recorded in the projection's argmin
(smallest depth index at ties). Two composite modes exist:

* loss-3d: voxel-wise MSE against a 3D ground truth plus the projected
  connectivity terms weighted by alpha
* loss-2d: per-axis MSE between projections and 2D ground-truth maps plus
  the same connectivity terms; both parts route through the argmin
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .graphs import AXES
from .runtime import thread_count
from .topo import TopoConfig, TopoLossResult, topo_loss
from .volume import DistanceVolume, ProjectedMap, min_projection

MODES = ("loss-3d", "loss-2d")


class OptimizeDiverged(RuntimeError):
    """Non-finite loss during descent; ``step`` is the offending iteration."""

    def __init__(self, step: int):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step


@dataclass(frozen=True)
class CompositeConfig:
    alpha: float = 1e-3
    axes: tuple[str, ...] = AXES
    mode: str = "loss-3d"
    topo: TopoConfig = field(default_factory=TopoConfig)

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        axes = tuple(self.axes)
        if not axes or any(a not in AXES for a in axes) or len(set(axes)) != len(axes):
            raise ValueError(f"axes must be a non-empty subset of {AXES}, got {self.axes}")
        object.__setattr__(self, "axes", axes)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class LossReport:
    """Loss decomposition. ``axes`` maps axis name to (l_conn, l_disc)."""

    total: float
    mse: float
    axes: dict[str, tuple[float, float]]
    alpha: float
    beta: float
    gradient: np.ndarray | None = None

    def to_json_dict(self) -> dict:
        return {
            "total": self.total,
            "mse": self.mse,
            "axes": {
                axis: {"l_conn": lc, "l_disc": ld}
                for axis, (lc, ld) in self.axes.items()
            },
            "alpha": self.alpha,
            "beta": self.beta,
        }

    def without_gradient(self) -> "LossReport":
        return LossReport(self.total, self.mse, dict(self.axes), self.alpha, self.beta, None)


def route_gradient(grad2d: np.ndarray, proj: ProjectedMap, out3d: np.ndarray) -> None:
    """Add a projected-map gradient into ``out3d`` at the argmin voxels.

    Every (u, v) column owns a distinct voxel, so fancy-indexed += is safe.
    """
    k = AXES.index(proj.axis)
    nu, nv = grad2d.shape
    u = np.arange(nu)[:, None]
    v = np.arange(nv)[None, :]
    if k == 0:
        out3d[proj.argmin, u, v] += grad2d
    elif k == 1:
        out3d[u, proj.argmin, v] += grad2d
    else:
        out3d[u, v, proj.argmin] += grad2d


def _map_axes(fn, axes):
    workers = min(thread_count(), len(axes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, axes))
    return [fn(a) for a in axes]


def conn_loss(
    pred: DistanceVolume, gt: DistanceVolume, cfg: CompositeConfig | None = None
) -> tuple[dict[str, TopoLossResult], np.ndarray]:
    """Topological loss of each axis projection plus the routed 3D gradient.

    The target projections come from the 3D ground truth; gradients of the
    per-axis results are routed through the prediction projections' argmin
    and summed in axis order.
    """
    cfg = cfg or CompositeConfig()
    if pred.dims != gt.dims:
        raise ValueError(f"shape mismatch: {pred.dims} vs {gt.dims}")

    def one_axis(axis: str) -> tuple[str, ProjectedMap, TopoLossResult]:
        proj = min_projection(pred, axis)
        target = min_projection(gt, axis)
        return axis, proj, topo_loss(proj.values, target.values, cfg.topo)

    grad3d = np.zeros(pred.dims, dtype=np.float64)
    results: dict[str, TopoLossResult] = {}
    for axis, proj, res in _map_axes(one_axis, cfg.axes):
        results[axis] = res
        route_gradient(res.gradient, proj, grad3d)
    return results, grad3d


def _topo_total(results: dict[str, TopoLossResult], cfg: CompositeConfig) -> float:
    return sum(results[a].l_conn + cfg.topo.beta * results[a].l_disc for a in cfg.axes)


def loss_3d(
    pred: DistanceVolume,
    gt: DistanceVolume,
    cfg: CompositeConfig | None = None,
    mse_mask: np.ndarray | None = None,
) -> LossReport:
    """Voxel MSE plus alpha-weighted projected connectivity terms.

    ``mse_mask``, when given, zeroes the masked voxels' contribution to the
    MSE term (withheld supervision); the connectivity terms are unaffected.
    """
    cfg = cfg or CompositeConfig()
    if cfg.mode != "loss-3d":
        raise ValueError(f"loss_3d requires mode 'loss-3d', got {cfg.mode!r}")
    if pred.dims != gt.dims:
        raise ValueError(f"shape mismatch: {pred.dims} vs {gt.dims}")
    diff = pred.values - gt.values
    if mse_mask is not None:
        diff = diff * np.asarray(mse_mask, dtype=np.float64)
    n = diff.size
    mse = float(np.sum(diff * diff) / n)
    results, topo_grad = conn_loss(pred, gt, cfg)
    total = mse + cfg.alpha * _topo_total(results, cfg)
    gradient = (2.0 / n) * diff + cfg.alpha * topo_grad
    return LossReport(
        total=float(total),
        mse=mse,
        axes={a: (results[a].l_conn, results[a].l_disc) for a in cfg.axes},
        alpha=cfg.alpha,
        beta=cfg.topo.beta,
        gradient=gradient,
    )


def loss_2d(
    pred: DistanceVolume,
    gt2d_x: np.ndarray | None,
    gt2d_y: np.ndarray | None,
    gt2d_z: np.ndarray | None,
    cfg: CompositeConfig | None = None,
    mse_masks: dict[str, np.ndarray] | None = None,
) -> LossReport:
    """Projected MSE plus connectivity terms against 2D ground-truth maps.

    Each requested axis needs its 2D map, shaped like the prediction's
    projection along that axis. Both loss parts are functions of the
    projections, so both route their gradients through the argmin.
    """
    cfg = cfg or CompositeConfig(mode="loss-2d")
    if cfg.mode != "loss-2d":
        raise ValueError(f"loss_2d requires mode 'loss-2d', got {cfg.mode!r}")
    gts = {"x": gt2d_x, "y": gt2d_y, "z": gt2d_z}

    def one_axis(axis: str):
        target = gts[axis]
        if target is None:
            raise ValueError(f"axis {axis!r} requested but its 2D ground truth is missing")
        target = np.asarray(target, dtype=np.float64)
        proj = min_projection(pred, axis)
        if proj.values.shape != target.shape:
            raise ValueError(
                f"axis {axis!r}: projection shape {proj.values.shape} != gt shape {target.shape}"
            )
        diff = proj.values - target
        if mse_masks is not None and mse_masks.get(axis) is not None:
            diff = diff * np.asarray(mse_masks[axis], dtype=np.float64)
        n = diff.size
        mse = float(np.sum(diff * diff) / n)
        res = topo_loss(proj.values, target, cfg.topo)
        grad2d = (2.0 / n) * diff + cfg.alpha * res.gradient
        return axis, proj, mse, res, grad2d

    gradient = np.zeros(pred.dims, dtype=np.float64)
    results: dict[str, TopoLossResult] = {}
    mse_total = 0.0
    for axis, proj, mse, res, grad2d in _map_axes(one_axis, cfg.axes):
        results[axis] = res
        mse_total += mse
        route_gradient(grad2d, proj, gradient)
    total = mse_total + cfg.alpha * _topo_total(results, cfg)
    return LossReport(
        total=float(total),
        mse=float(mse_total),
        axes={a: (results[a].l_conn, results[a].l_disc) for a in cfg.axes},
        alpha=cfg.alpha,
        beta=cfg.topo.beta,
        gradient=gradient,
    )


def composite_loss(
    pred: DistanceVolume,
    targets,
    cfg: CompositeConfig,
    mse_mask=None,
) -> LossReport:
    """Dispatch on cfg.mode; targets is a volume, an axis->2D-map mapping,
    or a 3-sequence of 2D maps in x, y, z order."""
    if cfg.mode == "loss-3d":
        return loss_3d(pred, targets, cfg, mse_mask=mse_mask)
    gts = targets if isinstance(targets, dict) else dict(zip(AXES, targets))
    return loss_2d(
        pred,
        gts.get("x"),
        gts.get("y"),
        gts.get("z"),
        cfg,
        mse_masks=mse_mask,
    )


def optimize(
    pred0: DistanceVolume,
    targets,
    cfg: CompositeConfig,
    steps: int,
    rate: float,
    d_max: float = 15.0,
    mse_mask=None,
) -> tuple[list[LossReport], DistanceVolume]:
    """Plain gradient descent on voxel values, clamped to [0, d_max].

    Returns one gradient-free LossReport per step (evaluated before that
    step's update) and the final volume. Raises OptimizeDiverged when the
    loss stops being finite.
    """
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    values = np.array(pred0.values)
    trajectory: list[LossReport] = []
    for step in range(steps):
        report = composite_loss(DistanceVolume(values=values), targets, cfg, mse_mask=mse_mask)
        if not np.isfinite(report.total):
            raise OptimizeDiverged(step)
        trajectory.append(report.without_gradient())
        values = np.clip(values - rate * report.gradient, 0.0, d_max)
    return trajectory, DistanceVolume(values=values, kind="predicted")
