import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import projconn as pc
from conftest import line_graph


def brute_force_segment_distance(p, a, b, step=1e-3):
    """Min distance to densely sampled segment points; independent oracle."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    n = int(np.ceil(np.linalg.norm(b - a) / step)) + 1
    t = np.linspace(0.0, 1.0, n)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    return float(np.linalg.norm(pts - np.asarray(p, float), axis=1).min())


def test_empty_graph_uniform_dmax():
    g = pc.AnnotationGraph(ids=np.array([1]), positions=np.array([[2.0, 2.0, 0.0]]), edges=np.zeros((0, 2)))
    vol = pc.gen_distance_map(g, (5, 5, 3))
    assert np.all(vol.values == 15.0)
    assert vol.kind == "ground-truth"


def test_perpendicular_foot():
    g = line_graph([0, 0, 0], [4, 0, 0])
    vol = pc.gen_distance_map(g, (8, 8, 1))
    assert vol.values[2, 3, 0] == pytest.approx(3.0, abs=1e-12)


def test_endpoint_distance_vs_brute_force():
    g = line_graph([0, 0, 0], [4, 0, 0])
    vol = pc.gen_distance_map(g, (8, 8, 1))
    expected = brute_force_segment_distance([6, 2, 0], [0, 0, 0], [4, 0, 0])
    assert vol.values[6, 2, 0] == pytest.approx(expected, abs=1e-3)
    assert vol.values[6, 2, 0] == pytest.approx(2.8284271, abs=1e-6)


def test_random_voxels_vs_brute_force(rng):
    g = line_graph([1.2, 0.7, 2.9], [6.3, 5.1, 0.4])
    vol = pc.gen_distance_map(g, (8, 8, 4))
    for _ in range(20):
        idx = tuple(int(v) for v in (rng.integers(0, 8), rng.integers(0, 8), rng.integers(0, 4)))
        expected = min(15.0, brute_force_segment_distance(idx, [1.2, 0.7, 2.9], [6.3, 5.1, 0.4]))
        assert vol.values[idx] == pytest.approx(expected, abs=1e-3)


def test_truncation():
    g = line_graph([0, 0, 0], [0, 0, 2])
    vol = pc.gen_distance_map(g, (40, 4, 4))
    assert vol.values.max() == 15.0
    assert vol.values[39, 3, 3] == 15.0


def test_point_degenerate_segment():
    d = pc.point_segment_distance(np.array([[3.0, 4.0, 0.0]]), np.zeros(3), np.zeros(3))
    assert d[0] == pytest.approx(5.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_monotone_in_graph_growth(seed):
    # adding an edge can only decrease distances
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    pos = rng.random((n, 3)) * 7
    ids = np.arange(1, n + 1)
    all_edges = [(int(ids[i]), int(ids[j])) for i in range(n) for j in range(i + 1, n)]
    rng.shuffle(all_edges)
    k = int(rng.integers(1, len(all_edges) + 1)) if all_edges else 0
    edges = all_edges[:k]
    if len(edges) < 2:
        edges = all_edges[: max(2, len(all_edges))]
    g_small = pc.AnnotationGraph(ids=ids, positions=pos, edges=np.array(edges[:-1]).reshape(-1, 2))
    g_big = pc.AnnotationGraph(ids=ids, positions=pos, edges=np.array(edges).reshape(-1, 2))
    v_small = pc.gen_distance_map(g_small, (8, 8, 8)).values
    v_big = pc.gen_distance_map(g_big, (8, 8, 8)).values
    assert np.all(v_big <= v_small + 1e-12)


def test_2d_distance_map():
    g2 = pc.AnnotationGraph(
        ids=np.array([1, 2]),
        positions=np.array([[0.0, 3.0, 0.0], [7.0, 3.0, 0.0]]),
        edges=np.array([[1, 2]]),
        dimensionality=2,
    )
    m = pc.gen_distance_map_2d(g2, (8, 8))
    assert m.shape == (8, 8)
    assert np.all(m[:, 3] == 0.0)
    assert m[4, 6] == pytest.approx(3.0)


def test_dimensionality_mismatch():
    g = line_graph([0, 0, 0], [4, 0, 0])
    with pytest.raises(ValueError):
        pc.gen_distance_map_2d(g, (8, 8))  # type: ignore[arg-type]
    g2 = pc.AnnotationGraph(
        ids=np.array([1, 2]),
        positions=np.array([[0.0, 3.0, 0.0], [7.0, 3.0, 0.0]]),
        edges=np.array([[1, 2]]),
        dimensionality=2,
    )
    with pytest.raises(ValueError):
        pc.gen_distance_map(g2, (8, 8, 8))
