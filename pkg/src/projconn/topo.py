"""Connectivity loss on 2D maps via maximin critical pixels.

The loss treats low values of a predicted distance map as foreground. Inside
each window, pixels outside the dilated annotation fall into background
regions; a break in a structure lets a high-valued path sneak between regions
that the annotation says are separated. For every pair of background pixels
the maximin path (the path whose smallest pixel is largest) has a bottleneck
pixel; cross-region pairs penalize that pixel's squared value, same-region
pairs penalize its squared deviation from the ground truth.

All pair terms are aggregated in one pass of Kruskal's algorithm on the
4-connected pixel graph, processed in descending bottleneck order, with a
union-find structure carrying per-region pixel counts. When two clusters u, v
merge through bottleneck pixel q*, every pixel pair joining the clusters has
q* as its maximin bottleneck: cross pairs number sum_{A != B} cnt_u[A]*cnt_v[B]
and same pairs sum_A cnt_u[A]*cnt_v[A].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy import ndimage

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

# Threshold below which a ground-truth pixel counts as annotation. Annotation
# values are zero after rasterization; 0.5 tolerates off-lattice geometry.
ANNOTATION_CUTOFF = 0.5


@dataclass(frozen=True)
class TopoConfig:
    window: int = 48
    dilation_radius: int = 3
    beta: float = 0.1
    normalize_pairs: bool = True

    def __post_init__(self):
        if self.window < 8:
            raise ValueError(f"window must be >= 8, got {self.window}")
        if self.dilation_radius < 1:
            raise ValueError(f"dilation_radius must be >= 1, got {self.dilation_radius}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")


@dataclass(frozen=True)
class RegionLabeling:
    """Pixel labels: 0 inside the dilated annotation, 1..region_count outside.

    Background regions are maximal 4-connected components of the complement
    of the dilated annotation. ``region_sizes[k]`` is the pixel count of
    region k; index 0 counts the dilated-annotation pixels.
    """

    mask: np.ndarray
    region_count: int
    region_sizes: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape  # type: ignore[return-value]

    def total_cross_pairs(self) -> int:
        sizes = [int(s) for s in self.region_sizes[1:]]
        total = sum(sizes)
        return (total * total - sum(s * s for s in sizes)) // 2

    def total_same_pairs(self) -> int:
        return sum(s * (s - 1) // 2 for s in self.region_sizes[1:].tolist())


@dataclass(frozen=True)
class MaximinEvent:
    """Aggregated pair counts for one critical pixel.

    ``pixel`` is in local coordinates of the map handed to maximin_events,
    ``value`` is the predicted value there. Emitted only when at least one
    pixel pair has this bottleneck.
    """

    pixel: tuple[int, int]
    value: float
    cross_pairs: int
    same_pairs: int


@dataclass(frozen=True)
class TopoLossResult:
    l_conn: float
    l_disc: float
    gradient: np.ndarray


def disc_element(radius: int) -> np.ndarray:
    """Boolean disc structuring element of the given pixel radius."""
    r = int(radius)
    di, dj = np.ogrid[-r : r + 1, -r : r + 1]
    return di * di + dj * dj <= r * r


def label_regions(gt2d: np.ndarray, cfg: TopoConfig) -> RegionLabeling:
    """Dilate the annotation of a ground-truth map, label the complement.

    Annotation pixels are those with ``gt2d < 0.5``; they are dilated by a
    disc of ``cfg.dilation_radius`` and the remaining pixels are labeled by
    4-connected components. A map without annotation yields one region
    covering everything.
    """
    gt2d = np.asarray(gt2d, dtype=np.float64)
    annotation = gt2d < ANNOTATION_CUTOFF
    if annotation.any():
        dilated = ndimage.binary_dilation(annotation, structure=disc_element(cfg.dilation_radius))
    else:
        dilated = annotation
    labels, count = ndimage.label(~dilated, structure=_CROSS)
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    return RegionLabeling(mask=labels.astype(np.int32), region_count=int(count), region_sizes=sizes)


def _grid_edges(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """4-neighbor edges (p, q), p < q, in lexicographic (p, q) order."""
    idx = np.arange(h * w).reshape(h, w)
    right_p = idx[:, :-1].ravel()
    down_p = idx[:-1, :].ravel()
    p = np.concatenate([right_p, down_p])
    q = np.concatenate([right_p + 1, down_p + w])
    order = np.lexsort((q, p))
    return p[order], q[order]


def maximin_events(pred2d: np.ndarray, labeling: RegionLabeling) -> list[MaximinEvent]:
    """All maximin bottleneck events between background pixels of ``labeling``.

    Equivalent to enumerating every pair of background pixels, finding the
    pair's maximin path in the 4-connected grid, and grouping pairs by the
    path's smallest pixel. Edges score min(pred[p], pred[q]); the critical
    pixel of an edge is its smaller endpoint, ties broken toward the
    lexicographically smaller pixel; equal-scoring edges merge in
    lexicographic edge order.
    """
    pred2d = np.asarray(pred2d, dtype=np.float64)
    if pred2d.shape != labeling.shape:
        raise ValueError(f"shape mismatch: {pred2d.shape} vs {labeling.shape}")
    h, w = pred2d.shape
    n = h * w
    if n == 1:
        return []
    v = pred2d.ravel()
    labels = labeling.mask.ravel()

    parent = list(range(n))
    size = [1] * n
    totals = [1 if labels[i] > 0 else 0 for i in range(n)]
    counts: list[dict[int, int] | None] = [
        {int(labels[i]): 1} if labels[i] > 0 else {} for i in range(n)
    ]

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    ep, eq = _grid_edges(h, w)
    weights = np.minimum(v[ep], v[eq])
    crit = np.where(v[ep] <= v[eq], ep, eq)
    order = np.argsort(-weights, kind="stable")

    events: dict[int, list] = {}
    for e in order.tolist():
        p, q = int(ep[e]), int(eq[e])
        rp, rq = find(p), find(q)
        if rp == rq:
            continue
        tp, tq = totals[rp], totals[rq]
        if tp and tq:
            cp, cq = counts[rp], counts[rq]
            small, big = (cp, cq) if len(cp) <= len(cq) else (cq, cp)
            same = 0
            for lbl, c in small.items():
                other = big.get(lbl)
                if other:
                    same += c * other
            cross = tp * tq - same
            if cross or same:
                cpix = int(crit[e])
                ev = events.get(cpix)
                if ev is None:
                    events[cpix] = [cross, same]
                else:
                    ev[0] += cross
                    ev[1] += same
        # union by size; merge the smaller count dict into the larger
        if size[rp] < size[rq]:
            rp, rq = rq, rp
        parent[rq] = rp
        size[rp] += size[rq]
        totals[rp] += totals[rq]
        cp, cq = counts[rp], counts[rq]
        if len(cq) > len(cp):
            cp, cq = cq, cp
        for lbl, c in cq.items():
            cp[lbl] = cp.get(lbl, 0) + c
        counts[rp] = cp
        counts[rq] = None

    return [
        MaximinEvent(
            pixel=(pix // w, pix % w),
            value=float(v[pix]),
            cross_pairs=cross,
            same_pairs=same,
        )
        for pix, (cross, same) in events.items()
    ]


def _window_spans(extent: int, window: int) -> list[tuple[int, int]]:
    return [(start, min(start + window, extent)) for start in range(0, extent, window)]


def iter_window_events(
    pred2d: np.ndarray, gt2d: np.ndarray, cfg: TopoConfig
) -> Iterator[tuple[int, int, RegionLabeling, list[MaximinEvent]]]:
    """Yield (u0, v0, labeling, events) for each non-overlapping window.

    Windows tile the map with side ``cfg.window``; the last window along each
    dimension may be smaller. Labelings are computed per window from the
    ground truth, events from the prediction.
    """
    pred2d = np.asarray(pred2d, dtype=np.float64)
    gt2d = np.asarray(gt2d, dtype=np.float64)
    if pred2d.shape != gt2d.shape:
        raise ValueError(f"shape mismatch: {pred2d.shape} vs {gt2d.shape}")
    for u0, u1 in _window_spans(pred2d.shape[0], cfg.window):
        for v0, v1 in _window_spans(pred2d.shape[1], cfg.window):
            labeling = label_regions(gt2d[u0:u1, v0:v1], cfg)
            events = maximin_events(pred2d[u0:u1, v0:v1], labeling)
            yield u0, v0, labeling, events


def topo_loss(pred2d: np.ndarray, gt2d: np.ndarray, cfg: TopoConfig | None = None) -> TopoLossResult:
    """Windowed connectivity loss and its sparse gradient.

    Per window, ``l_conn = sum_e cross_e * pred[q*]^2`` and ``l_disc =
    sum_e same_e * (pred[q*] - gt[q*])^2``. With ``cfg.normalize_pairs`` each
    window's sums are divided by the window's total cross (resp. same) pair
    count, making the terms weighted averages. The gradient accumulates, at
    each critical pixel, the derivative of ``l_conn + beta * l_disc`` so that
    it is directly the gradient of the weighted topological loss.
    """
    cfg = cfg or TopoConfig()
    pred2d = np.asarray(pred2d, dtype=np.float64)
    gt2d = np.asarray(gt2d, dtype=np.float64)
    l_conn = 0.0
    l_disc = 0.0
    gradient = np.zeros_like(pred2d)
    for u0, v0, labeling, events in iter_window_events(pred2d, gt2d, cfg):
        if not events:
            continue
        if cfg.normalize_pairs:
            total_cross = labeling.total_cross_pairs()
            total_same = labeling.total_same_pairs()
            cross_scale = 1.0 / total_cross if total_cross else 0.0
            same_scale = 1.0 / total_same if total_same else 0.0
        else:
            cross_scale = 1.0
            same_scale = 1.0
        for ev in events:
            u, vv = ev.pixel
            pv = pred2d[u0 + u, v0 + vv]
            gv = gt2d[u0 + u, v0 + vv]
            wc = ev.cross_pairs * cross_scale
            ws = ev.same_pairs * same_scale
            l_conn += wc * pv * pv
            l_disc += ws * (pv - gv) * (pv - gv)
            gradient[u0 + u, v0 + vv] += 2.0 * wc * pv + cfg.beta * 2.0 * ws * (pv - gv)
    return TopoLossResult(l_conn=float(l_conn), l_disc=float(l_disc), gradient=gradient)


def events_csv(pred2d: np.ndarray, gt2d: np.ndarray, cfg: TopoConfig | None = None) -> str:
    """Debug dump of per-window events; q coordinates are window-local."""
    cfg = cfg or TopoConfig()
    lines = ["window_x,window_y,qx,qy,value,cross_pairs,same_pairs"]
    for u0, v0, _, events in iter_window_events(pred2d, gt2d, cfg):
        for ev in events:
            lines.append(
                f"{u0},{v0},{ev.pixel[0]},{ev.pixel[1]},{ev.value!r},{ev.cross_pairs},{ev.same_pairs}"
            )
    return "\n".join(lines) + "\n"
