import numpy as np
from scipy import ndimage

import projconn as pc
from projconn.skeleton import skeletonize
from conftest import straight_tube_scene

S26 = np.ones((3, 3, 3), bool)


def n_components(mask):
    return ndimage.label(mask, structure=S26)[1]


def test_thin_line_unchanged():
    line = np.zeros((3, 3, 12), dtype=bool)
    line[1, 1, 1:11] = True
    assert np.array_equal(skeletonize(line), line)


def test_diagonal_line_unchanged():
    line = np.zeros((10, 10, 10), dtype=bool)
    for i in range(1, 9):
        line[i, i, i] = True
    assert np.array_equal(skeletonize(line), line)


def test_solid_bar_thins_to_curve():
    bar = np.zeros((9, 9, 24), dtype=bool)
    bar[2:7, 2:7, 2:22] = True
    sk = skeletonize(bar)
    assert n_components(sk) == 1
    graph = pc.voxel_graph(sk)
    deg = graph.degrees()
    assert int((deg == 1).sum()) == 2
    assert graph.edges.shape[0] == 1


def test_two_bars_stay_two_components():
    two = np.zeros((20, 9, 9), dtype=bool)
    two[1:9, 3:6, 3:6] = True
    two[12:19, 3:6, 3:6] = True
    sk = skeletonize(two)
    assert n_components(two) == 2
    assert n_components(sk) == 2


def test_isolated_voxel_survives():
    one = np.zeros((5, 5, 5), dtype=bool)
    one[2, 2, 2] = True
    assert skeletonize(one).sum() == 1


def test_empty_mask():
    assert skeletonize(np.zeros((4, 4, 4), dtype=bool)).sum() == 0


def test_component_count_preserved_on_tube_scenes():
    for seed, gap in ((0, None), (1, 4.0), (2, 6.0)):
        scene = straight_tube_scene(dims=(24, 24, 24), offset=12, gap_length=gap)
        _, _, pred = pc.synth_volume(scene)
        mask = pred.values < 2.0
        sk = skeletonize(mask)
        assert n_components(sk) == n_components(mask)
        assert sk.sum() <= mask.sum()
        assert np.all(mask[sk])  # skeleton is a subset


def test_loop_is_not_broken():
    ring = np.zeros((12, 12, 3), dtype=bool)
    ring[2:10, 2:10, 1] = True
    ring[4:8, 4:8, 1] = False
    sk = skeletonize(ring)
    assert n_components(sk) == 1
    # still a loop: no endpoints
    graph = pc.voxel_graph(sk)
    assert not (graph.degrees() == 1).any()
