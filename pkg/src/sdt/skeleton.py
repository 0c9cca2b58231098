"""Topology-preserving thinning and the per-instance local skeleton.

Thinning removes simple points (foreground 8-connectivity, background
4-connectivity) one border layer per pass. A pass selects its deletable
points on a snapshot of the image: border pixels (some 4-neighbour is
background) that are simple and are not end points (at most one 8-neighbour).
Selecting on the snapshot peels all sides at once, so shapes with a centre
pixel thin symmetrically. The selected pixels are then deleted in raster
order, each re-tested for simplicity against the current image, so every
single deletion preserves topology.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numba
import numpy as np

from .geometry import NEIGHBORS_8, count_components, instance_window, smooth_mask
from .raster import BinaryMask, LabelMap, PixelSet

log = logging.getLogger(__name__)

_OFFSETS = np.array(NEIGHBORS_8, dtype=np.int64)


def _neighbour_components(bits: tuple[int, ...], adjacency) -> list[set[int]]:
    comps: list[set[int]] = []
    seen: set[int] = set()
    for i in range(8):
        if not bits[i] or i in seen:
            continue
        comp, stack = set(), [i]
        while stack:
            j = stack.pop()
            if j in comp:
                continue
            comp.add(j)
            stack.extend(k for k in range(8) if bits[k] and k not in comp and adjacency(j, k))
        seen |= comp
        comps.append(comp)
    return comps


def _simple_table() -> np.ndarray:
    """simple[code] for every 8-neighbourhood configuration.

    Bit i of ``code`` is neighbour ``NEIGHBORS_8[i]``. A point is simple when
    its foreground neighbours form exactly one 8-component and exactly one
    4-component of background neighbours touches it 4-adjacently.
    """
    def adj8(a, b):
        (ra, ca), (rb, cb) = NEIGHBORS_8[a], NEIGHBORS_8[b]
        return max(abs(ra - rb), abs(ca - cb)) == 1

    def adj4(a, b):
        (ra, ca), (rb, cb) = NEIGHBORS_8[a], NEIGHBORS_8[b]
        return abs(ra - rb) + abs(ca - cb) == 1

    four = {i for i, (r, c) in enumerate(NEIGHBORS_8) if abs(r) + abs(c) == 1}
    table = np.zeros(256, dtype=np.bool_)
    for code in range(256):
        fg = tuple((code >> i) & 1 for i in range(8))
        bg = tuple(1 - b for b in fg)
        c8 = len(_neighbour_components(fg, adj8))
        t4 = sum(1 for comp in _neighbour_components(bg, adj4) if comp & four)
        table[code] = c8 == 1 and t4 == 1
    return table


SIMPLE = _simple_table()


@numba.njit(cache=True)
def _code(img, r, c, offsets):
    code = 0
    for i in range(8):
        if img[r + offsets[i, 0], c + offsets[i, 1]]:
            code |= 1 << i
    return code


@numba.njit(cache=True)
def _degree(img, r, c, offsets):
    n = 0
    for i in range(8):
        if img[r + offsets[i, 0], c + offsets[i, 1]]:
            n += 1
    return n


@numba.njit(cache=True)
def _thin(img, simple, offsets):
    # img is zero-padded by one pixel on every side
    h, w = img.shape
    cand_r = np.empty(h * w, dtype=np.int64)
    cand_c = np.empty(h * w, dtype=np.int64)
    changed = True
    while changed:
        changed = False
        n = 0
        for r in range(1, h - 1):
            for c in range(1, w - 1):
                if not img[r, c]:
                    continue
                if img[r - 1, c] and img[r + 1, c] and img[r, c - 1] and img[r, c + 1]:
                    continue
                if _degree(img, r, c, offsets) > 1 and simple[_code(img, r, c, offsets)]:
                    cand_r[n] = r
                    cand_c[n] = c
                    n += 1
        for i in range(n):
            r = cand_r[i]
            c = cand_c[i]
            if simple[_code(img, r, c, offsets)]:
                img[r, c] = 0
                changed = True
    return img


def thin(bits: np.ndarray) -> np.ndarray:
    padded = np.pad(np.asarray(bits, dtype=np.uint8), 1)
    return _thin(padded, SIMPLE, _OFFSETS)[1:-1, 1:-1].astype(bool)


def foreground_components(bits: np.ndarray) -> int:
    return count_components(bits, 8)


def background_components(bits: np.ndarray) -> int:
    """4-connected background components, counting the grid exterior as background."""
    return count_components(~np.pad(bits, 1, constant_values=False), 4)


@dataclass(frozen=True)
class SkeletonResult:
    skeleton: PixelSet
    source_components: int
    skeleton_components: int


def skeletonize(mask: BinaryMask) -> SkeletonResult:
    skel = thin(mask.bits)
    return SkeletonResult(
        skeleton=PixelSet.from_mask(skel),
        source_components=foreground_components(mask.bits),
        skeleton_components=foreground_components(skel),
    )


def local_skeleton(labels: LabelMap, instance_id: int, sigma: float = 2.0, level: float = 0.5) -> PixelSet:
    """Skeleton of the instance as it is visible in ``labels``.

    The mask is smoothed, clipped back to the instance so smoothing never
    spreads into neighbours, then thinned. If smoothing erases the instance
    the raw mask is thinned instead.
    """
    if not labels.has(instance_id):
        raise KeyError(f"instance id {instance_id} not present in label map")
    # work on the bounding box plus the kernel reach: identical to the full grid
    win = instance_window(labels, instance_id, math.ceil(3 * sigma) + 1)
    inst = BinaryMask(labels.labels[win] == instance_id)
    smoothed = smooth_mask(inst, sigma, level) & inst
    if not smoothed.any():
        log.debug("instance %d vanished under smoothing (sigma=%g); using raw mask", instance_id, sigma)
        smoothed = inst
    rc = np.argwhere(thin(smoothed.bits)) + (win[0].start, win[1].start)
    return PixelSet(rc, labels.shape)
