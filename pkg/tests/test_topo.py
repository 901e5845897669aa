import numpy as np
import pytest
from scipy import ndimage

import projconn as pc
from projconn.topo import RegionLabeling
from conftest import gp_volume


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------

def bfs_connected_at(vals, w, h, p, q, t):
    """4-connected reachability within {pixel value >= t}."""
    if vals[p] < t or vals[q] < t:
        return False
    seen = {p}
    stack = [p]
    while stack:
        cur = stack.pop()
        if cur == q:
            return True
        r, c = divmod(cur, w)
        for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= rr < h and 0 <= cc < w:
                nxt = rr * w + cc
                if nxt not in seen and vals[nxt] >= t:
                    seen.add(nxt)
                    stack.append(nxt)
    return False


def oracle_events(pred, labeling):
    """All-pairs maximin by descending-threshold BFS; general position only.

    Completely independent of the Kruskal implementation: for each pair of
    background pixels it finds the largest threshold at which the pair is
    connected (= the maximin bottleneck value) and identifies the critical
    pixel as the unique pixel carrying that value.
    """
    h, w = pred.shape
    vals = pred.ravel()
    labels = labeling.mask.ravel()
    background = [i for i in range(h * w) if labels[i] > 0]
    thresholds = sorted(set(vals.tolist()), reverse=True)
    agg = {}
    for i in range(len(background)):
        for j in range(i + 1, len(background)):
            p, q = background[i], background[j]
            for t in thresholds:
                if bfs_connected_at(vals, w, h, p, q, t):
                    crit = int(np.nonzero(vals == t)[0][0])
                    cross = labels[p] != labels[q]
                    c, s = agg.get(crit, (0, 0))
                    agg[crit] = (c + (1 if cross else 0), s + (0 if cross else 1))
                    break
    return agg


def random_labeling(rng, h, w, max_regions=3):
    mask = rng.integers(0, max_regions + 1, size=(h, w)).astype(np.int32)
    present = np.unique(mask[mask > 0])
    remap = np.zeros(int(mask.max()) + 1, dtype=np.int32)
    for new, old in enumerate(present, start=1):
        remap[old] = new
    mask = np.where(mask > 0, remap[mask], 0).astype(np.int32)
    k = len(present)
    return RegionLabeling(
        mask=mask, region_count=k, region_sizes=np.bincount(mask.ravel(), minlength=k + 1)
    )


def events_as_dict(events, w):
    return {ev.pixel[0] * w + ev.pixel[1]: (ev.cross_pairs, ev.same_pairs) for ev in events}


# ---------------------------------------------------------------------------
# label_regions
# ---------------------------------------------------------------------------

def vertical_line_map(size=20, col=10, d_max=15.0):
    gt = np.full((size, size), d_max)
    gt[:, col] = 0.0
    return gt


def test_vertical_line_two_regions():
    lab = pc.label_regions(vertical_line_map(), pc.TopoConfig(window=20))
    assert lab.region_count == 2


def test_no_annotation_single_region():
    lab = pc.label_regions(np.full((12, 12), 15.0), pc.TopoConfig(window=12))
    assert lab.region_count == 1
    assert lab.region_sizes[1] == 144


def test_cross_shape_four_regions():
    gt = np.full((24, 24), 15.0)
    gt[12, :] = 0.0
    gt[:, 12] = 0.0
    cfg = pc.TopoConfig(window=24)
    lab = pc.label_regions(gt, cfg)
    assert lab.region_count == 4
    # oracle: label the complement of the brute-force dilated cross
    ann = gt < 0.5
    r = cfg.dilation_radius
    dilated = np.zeros_like(ann)
    for i, j in np.argwhere(ann):
        for di in range(-r, r + 1):
            for dj in range(-r, r + 1):
                if di * di + dj * dj <= r * r and 0 <= i + di < 24 and 0 <= j + dj < 24:
                    dilated[i + di, j + dj] = True
    _, expected = ndimage.label(~dilated, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
    assert lab.region_count == expected
    assert np.array_equal(lab.mask == 0, dilated)


def test_labels_contiguous():
    lab = pc.label_regions(vertical_line_map(), pc.TopoConfig(window=20))
    present = np.unique(lab.mask)
    assert set(present.tolist()) <= set(range(lab.region_count + 1))
    assert lab.region_sizes[1:].min() > 0


# ---------------------------------------------------------------------------
# maximin_events
# ---------------------------------------------------------------------------

def test_perfect_map_zero_bottlenecks():
    gt = vertical_line_map()
    lab = pc.label_regions(gt, pc.TopoConfig(window=20))
    events = pc.maximin_events(gt, lab)
    cross = [ev for ev in events if ev.cross_pairs > 0]
    assert cross
    assert all(ev.value == 0.0 for ev in cross)


def test_gap_pixel_is_critical():
    gt = vertical_line_map()
    pred = gt.copy()
    pred[7, 10] = 7.0  # unique gap pixel, below background level
    lab = pc.label_regions(gt, pc.TopoConfig(window=20))
    events = pc.maximin_events(pred, lab)
    top = max((ev for ev in events if ev.cross_pairs > 0), key=lambda ev: ev.value)
    assert top.pixel == (7, 10)
    assert top.value == 7.0


def test_oracle_equivalence_random_maps(rng):
    for _ in range(60):
        h, w = (int(v) for v in rng.integers(2, 7, size=2))
        pred = gp_volume((h, w), rng, lo=0.1, hi=14.9)
        lab = random_labeling(rng, h, w)
        got = events_as_dict(pc.maximin_events(pred, lab), w)
        assert got == oracle_events(pred, lab)


def test_oracle_equivalence_with_real_labelings(rng):
    cfg = pc.TopoConfig(window=8, dilation_radius=1)
    for _ in range(20):
        gt = np.full((6, 6), 15.0)
        col = int(rng.integers(1, 5))
        gt[:, col] = 0.0
        pred = gp_volume((6, 6), rng)
        lab = pc.label_regions(gt, cfg)
        got = events_as_dict(pc.maximin_events(pred, lab), 6)
        assert got == oracle_events(pred, lab)


def test_transpose_invariance(rng):
    # aggregation must not depend on pixel iteration order (general position)
    for _ in range(10):
        pred = gp_volume((5, 6), rng)
        lab = random_labeling(rng, 5, 6)
        base = {ev.pixel: (ev.value, ev.cross_pairs, ev.same_pairs) for ev in pc.maximin_events(pred, lab)}
        lab_t = RegionLabeling(
            mask=np.ascontiguousarray(lab.mask.T),
            region_count=lab.region_count,
            region_sizes=lab.region_sizes,
        )
        flipped = {
            (p[1], p[0]): (ev.value, ev.cross_pairs, ev.same_pairs)
            for ev in pc.maximin_events(np.ascontiguousarray(pred.T), lab_t)
            for p in [ev.pixel]
        }
        assert base == flipped


def test_event_counts_cover_all_pairs(rng):
    pred = gp_volume((6, 6), rng)
    gt = vertical_line_map(6, 3)
    lab = pc.label_regions(gt, pc.TopoConfig(window=8, dilation_radius=1))
    events = pc.maximin_events(pred, lab)
    assert sum(ev.cross_pairs for ev in events) == lab.total_cross_pairs()
    assert sum(ev.same_pairs for ev in events) == lab.total_same_pairs()
    assert all(ev.cross_pairs + ev.same_pairs >= 1 for ev in events)


# ---------------------------------------------------------------------------
# topo_loss
# ---------------------------------------------------------------------------

def test_zero_at_truth():
    gt = vertical_line_map()
    res = pc.topo_loss(gt, gt, pc.TopoConfig(window=20))
    assert res.l_conn == 0.0
    assert res.l_disc == 0.0
    assert not res.gradient.any()


def test_single_gap_normalized_l_conn_is_225():
    gt = vertical_line_map()
    pred = gt.copy()
    pred[7, 10] = 15.0
    res = pc.topo_loss(pred, gt, pc.TopoConfig(window=20, normalize_pairs=True))
    # every cross pair bottlenecks at value 15 -> normalized sum is 15^2
    assert res.l_conn == pytest.approx(225.0, abs=1e-9)


def test_monotone_response_in_bottleneck():
    gt = vertical_line_map()
    lab_cfg = pc.TopoConfig(window=20)
    values = []
    for g in (3.0, 5.0, 9.0):
        pred = gt.copy()
        pred[7, 10] = g
        values.append(pc.topo_loss(pred, gt, lab_cfg).l_conn)
    assert values[0] < values[1] < values[2]


def test_gradient_sparsity(rng):
    pred = gp_volume((20, 20), rng)
    gt = vertical_line_map()
    res = pc.topo_loss(pred, gt, pc.TopoConfig(window=20))
    nonzero = int(np.count_nonzero(res.gradient))
    assert 0 < nonzero <= 400


def test_finite_difference_gradient(rng):
    size = 48
    gt = np.full((size, size), 15.0)
    gt[:, 23] = 0.0
    n = size * size
    flat = np.linspace(0.5, 14.5, n)
    rng.shuffle(flat)
    pred = flat.reshape(size, size)
    cfg = pc.TopoConfig(window=48)
    res = pc.topo_loss(pred, gt, cfg)
    h = 1e-3
    max_rel = 0.0
    for _ in range(60):
        i, j = (int(v) for v in rng.integers(0, size, size=2))
        plus = pred.copy()
        plus[i, j] += h
        minus = pred.copy()
        minus[i, j] -= h
        rp = pc.topo_loss(plus, gt, cfg)
        rm = pc.topo_loss(minus, gt, cfg)
        fd = ((rp.l_conn + cfg.beta * rp.l_disc) - (rm.l_conn + cfg.beta * rm.l_disc)) / (2 * h)
        an = res.gradient[i, j]
        rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
        max_rel = max(max_rel, rel)
    assert max_rel < 1e-3


def test_windowing_partitions_domain():
    # 70x30 map with window 48: 2x1 windows, second one 22 wide
    gt = np.full((70, 30), 15.0)
    gt[:, 15] = 0.0
    pred = gt.copy()
    pred[10, 15] = 6.0
    pred[60, 15] = 4.0
    res = pc.topo_loss(pred, gt, pc.TopoConfig(window=48))
    assert res.l_conn == pytest.approx(36.0 + 16.0, abs=1e-9)


def test_no_annotation_window_contributes_only_disc(rng):
    gt = np.full((10, 10), 15.0)
    pred = gp_volume((10, 10), rng)
    res = pc.topo_loss(pred, gt, pc.TopoConfig(window=10))
    assert res.l_conn == 0.0
    assert res.l_disc > 0.0


def test_events_csv_schema():
    gt = vertical_line_map(10, 5)
    pred = gt.copy()
    pred[4, 5] = 7.0
    text = pc.events_csv(pred, gt, pc.TopoConfig(window=10, dilation_radius=1))
    lines = text.strip().splitlines()
    assert lines[0] == "window_x,window_y,qx,qy,value,cross_pairs,same_pairs"
    assert len(lines) > 1
    assert all(len(line.split(",")) == 7 for line in lines[1:])


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        pc.topo_loss(np.zeros((4, 4)), np.zeros((4, 5)), pc.TopoConfig(window=8))


def test_config_validation():
    with pytest.raises(ValueError):
        pc.TopoConfig(window=4)
    with pytest.raises(ValueError):
        pc.TopoConfig(dilation_radius=0)
    with pytest.raises(ValueError):
        pc.TopoConfig(beta=-0.1)
