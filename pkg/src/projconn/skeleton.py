"""Topology-preserving 3D thinning by sequential simple-point removal.

A voxel is *simple* when deleting it changes neither the object's 26-connected
components nor the background's 6-connected structure in its 3x3x3
neighborhood (Malandain-Bertrand characterization for (26, 6) digital
topology). The thinner repeatedly sweeps the six axis directions, peeling
border voxels that are simple and are not curve endpoints, until stable.
Deletion is sequential with re-checks against the current mask, so topology
preservation holds by construction; iteration order is fixed (lexicographic),
making the result deterministic.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import ndimage

_OFFSETS = [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)]
_CENTER = _OFFSETS.index((0, 0, 0))
_N18 = [i for i, (dx, dy, dz) in enumerate(_OFFSETS) if 1 <= abs(dx) + abs(dy) + abs(dz) <= 2]
_FACES = [i for i, (dx, dy, dz) in enumerate(_OFFSETS) if abs(dx) + abs(dy) + abs(dz) == 1]

_ADJ26: list[list[int]] = []
_ADJ6: list[list[int]] = []
for i, a in enumerate(_OFFSETS):
    adj26 = []
    adj6 = []
    for j, b in enumerate(_OFFSETS):
        if i == j:
            continue
        d = (abs(a[0] - b[0]), abs(a[1] - b[1]), abs(a[2] - b[2]))
        if max(d) == 1:
            adj26.append(j)
        if sum(d) == 1:
            adj6.append(j)
    _ADJ26.append(adj26)
    _ADJ6.append(adj6)

# Sweep order for the six peel directions.
_DIRECTIONS = [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)]


def _components(members: int, adjacency: list[list[int]], seeds: list[int]) -> int:
    """Count components of the bit set ``members`` reachable from ``seeds``."""
    seen = 0
    count = 0
    for s in seeds:
        bit = 1 << s
        if not (members & bit) or (seen & bit):
            continue
        count += 1
        stack = [s]
        seen |= bit
        while stack:
            cur = stack.pop()
            for nxt in adjacency[cur]:
                nbit = 1 << nxt
                if (members & nbit) and not (seen & nbit):
                    seen |= nbit
                    stack.append(nxt)
    return count


@lru_cache(maxsize=1 << 20)
def _is_simple(bits: int) -> bool:
    """Simple-point test on a packed 3x3x3 neighborhood (center excluded).

    Requires exactly one 26-component of object neighbors and exactly one
    6-component of background voxels in the 18-neighborhood touching a face
    neighbor of the center.
    """
    objects = [i for i in range(27) if i != _CENTER and (bits >> i) & 1]
    if not objects:
        return False
    if _components(bits & ~(1 << _CENTER), _ADJ26, objects) != 1:
        return False
    background18 = 0
    for i in _N18:
        if not (bits >> i) & 1:
            background18 |= 1 << i
    face_bg = [i for i in _FACES if (background18 >> i) & 1]
    if not face_bg:
        return False
    return _components(background18, _ADJ6, face_bg) == 1


_POW2 = (1 << np.arange(27, dtype=np.int64))


def _pack_neighborhood(work: np.ndarray, x: int, y: int, z: int) -> int:
    cube = work[x - 1 : x + 2, y - 1 : y + 2, z - 1 : z + 2]
    return int(cube.ravel() @ _POW2)


def skeletonize(mask: np.ndarray) -> np.ndarray:
    """Reduce a boolean 3D mask to a one-voxel-wide, topology-equivalent set.

    Preserves the number of 26-connected components exactly; keeps curve
    endpoints (voxels with at most one object neighbor).
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 3:
        raise ValueError(f"expected a 3D mask, got shape {mask.shape}")
    if not mask.any():
        return mask.copy()
    work = np.pad(mask, 1)
    kernel = np.ones((3, 3, 3), dtype=np.uint8)
    while True:
        deleted = 0
        for dx, dy, dz in _DIRECTIONS:
            # shifted[p] = work[p + d], so border voxels see background along d
            shifted = np.roll(work, (-dx, -dy, -dz), axis=(0, 1, 2))
            border = work & ~shifted
            neighbor_count = ndimage.convolve(work.astype(np.uint8), kernel, mode="constant") - work
            candidates = np.argwhere(border & (neighbor_count >= 2))
            for x, y, z in candidates:
                if not work[x, y, z]:
                    continue
                bits = _pack_neighborhood(work, x, y, z)
                if (bits & ~(1 << _CENTER)).bit_count() < 2:
                    continue
                if _is_simple(bits):
                    work[x, y, z] = False
                    deleted += 1
        if deleted == 0:
            break
    return work[1:-1, 1:-1, 1:-1]
