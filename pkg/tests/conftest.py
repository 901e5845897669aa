"""Shared fixture builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

import projconn as pc


def gp_volume(shape: tuple[int, ...], rng: np.random.Generator, lo: float = 0.5, hi: float = 14.5) -> np.ndarray:
    """General-position grid: shuffled evenly spaced values.

    All pairwise value gaps are at least (hi - lo) / (n - 1), which keeps the
    maximin structure stable under +-1e-3 finite-difference probes.
    """
    n = int(np.prod(shape))
    vals = np.linspace(lo, hi, n)
    rng.shuffle(vals)
    return vals.reshape(shape)


def straight_tube_scene(dims=(32, 32, 32), radius=2.0, gap_length=None, axis=0, offset=16):
    """Axis-aligned spanning tube, optionally broken by a central gap."""
    a = [0.0, 0.0, 0.0]
    b = [0.0, 0.0, 0.0]
    a[axis] = 0.0
    b[axis] = dims[axis] - 1.0
    for k in range(3):
        if k != axis:
            a[k] = b[k] = float(offset)
    doc = {"dims": list(dims), "tubes": [{"points": [a, b], "radius": radius}]}
    if gap_length is not None:
        center = [(ai + bi) / 2.0 for ai, bi in zip(a, b)]
        doc["corruptions"] = [{"op": "gap", "center": center, "length": gap_length}]
    return pc.load_scene(doc)


def line_graph(p0, p1, ids=(1, 2)) -> pc.AnnotationGraph:
    return pc.AnnotationGraph(
        ids=np.asarray(ids),
        positions=np.asarray([p0, p1], dtype=np.float64),
        edges=np.asarray([[ids[0], ids[1]]]),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
