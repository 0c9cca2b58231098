"""Energy map -> instances.

SDT (and normalized DT) maps decode by thresholding into seeds, flooding the
reversed energy from those seeds, then filling holes and dropping specks.
Boundary maps and skeleton-with-scales have their own baseline decoders.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass

import numba
import numpy as np

from .geometry import (
    NEIGHBORS_8,
    connected_components,
    dilate_with_radii,
    distance_to_set,
    fill_holes,
    remove_small,
)
from .raster import BACKGROUND, BinaryMask, EnergyMap, LabelMap, PixelSet
from .representations import SkeletonScales

log = logging.getLogger(__name__)

DEFAULT_THETA = 0.7
DEFAULT_MIN_SIZE = 16

_OFFSETS = np.array(NEIGHBORS_8, dtype=np.int64)


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class DecodeParams:
    theta: float = DEFAULT_THETA
    min_size: int = DEFAULT_MIN_SIZE
    fill_holes: bool = True

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if self.min_size < 0:
            raise ValueError(f"min_size must be >= 0, got {self.min_size}")


def extract_seeds(energy: EnergyMap, theta: float = DEFAULT_THETA) -> LabelMap:
    v = energy.values
    return connected_components(BinaryMask((v != BACKGROUND) & (v > theta)), 8)


@numba.njit(cache=True)
def _flood(elevation, foreground, labels, offsets):
    h, w = labels.shape
    heap = [(0.0, np.int64(0), np.int64(0))]
    heap.pop()
    seq = 0
    for r in range(h):
        for c in range(w):
            if labels[r, c] > 0:
                heapq.heappush(heap, (elevation[r, c], np.int64(seq), np.int64(r * w + c)))
                seq += 1
    while len(heap) > 0:
        _, _, idx = heapq.heappop(heap)
        r = idx // w
        c = idx % w
        lab = labels[r, c]
        for i in range(8):
            rr = r + offsets[i, 0]
            cc = c + offsets[i, 1]
            if rr < 0 or rr >= h or cc < 0 or cc >= w:
                continue
            if foreground[rr, cc] and labels[rr, cc] == 0:
                labels[rr, cc] = lab
                heapq.heappush(heap, (elevation[rr, cc], np.int64(seq), np.int64(rr * w + cc)))
                seq += 1
    return labels


def watershed(energy: EnergyMap, seeds: LabelMap) -> LabelMap:
    """Seeded priority flood over elevation ``1 - energy``, foreground only.

    A pixel takes the label of the neighbour that first pushes it onto the
    queue; equal elevations pop in push order. Foreground pixels with no path
    to a seed stay 0.
    """
    if seeds.shape != energy.shape:
        raise DecodeError(f"seed grid {seeds.shape} does not match energy grid {energy.shape}")
    fg = energy.values != BACKGROUND
    s = seeds.labels
    if not (s > 0).any():
        raise DecodeError("watershed needs at least one seed")
    if ((s > 0) & ~fg).any():
        raise DecodeError("seeds must lie inside the foreground")
    elevation = 1.0 - energy.values.astype(np.float64)
    out = _flood(elevation, fg, s.copy(), _OFFSETS)
    lost = int((fg & (out == 0)).sum())
    if lost:
        log.debug("watershed: %d foreground pixels unreachable from any seed", lost)
    return LabelMap(out)


def fill_instance_holes(labels: LabelMap) -> LabelMap:
    """Fill each instance's enclosed holes.

    A hole is filled only if it holds no other instance, so a ring around a
    separately labelled core keeps the background gap between them.
    """
    a = labels.labels.copy()
    for i in labels.ids:
        inst = a == i
        holes = fill_holes(BinaryMask(inst)).bits & ~inst
        if not holes.any():
            continue
        comps = connected_components(BinaryMask(holes), 4).labels
        occupied = np.unique(comps[(comps > 0) & (a != 0)])
        a[(comps > 0) & ~np.isin(comps, occupied)] = i
    return LabelMap(a)


def decode_sdt(energy: EnergyMap, params: DecodeParams = DecodeParams()) -> LabelMap:
    seeds = extract_seeds(energy, params.theta)
    if not len(seeds):
        log.warning("no energy above theta=%g; decoded map is empty", params.theta)
        return LabelMap.empty(*energy.shape)
    out = watershed(energy, seeds)
    if params.fill_holes:
        out = fill_instance_holes(out)
    return remove_small(out, params.min_size)


def _majority(labels: np.ndarray, r: int, c: int) -> int:
    h, w = labels.shape
    votes: dict[int, int] = {}
    for dr, dc in NEIGHBORS_8:
        rr, cc = r + dr, c + dc
        if 0 <= rr < h and 0 <= cc < w and labels[rr, cc] > 0:
            votes[labels[rr, cc]] = votes.get(labels[rr, cc], 0) + 1
    if not votes:
        return 0
    best = max(votes.values())
    return min(k for k, n in votes.items() if n == best)


def decode_boundary(boundary: BinaryMask, foreground: BinaryMask, params: DecodeParams = DecodeParams()) -> LabelMap:
    """Components of foreground minus boundary; boundary pixels then join the
    neighbouring component most represented in their 8-neighbourhood (ties go
    to the lower label), decided in one step against the component map."""
    if boundary.shape != foreground.shape:
        raise DecodeError(f"boundary grid {boundary.shape} does not match foreground {foreground.shape}")
    comps = connected_components(foreground - boundary, 8).labels
    out = comps.copy()
    for r, c in np.argwhere(boundary.bits & foreground.bits):
        out[r, c] = _majority(comps, r, c)
    return remove_small(LabelMap(out), params.min_size)


def decode_ss(ss: SkeletonScales, params: DecodeParams = DecodeParams()) -> LabelMap:
    """Dilate each skeleton component by its per-pixel scales; where disks of
    different components overlap the pixel goes to the nearer skeleton."""
    shape = ss.skeleton.shape
    if not len(ss.skeleton):
        return LabelMap.empty(*shape)
    comps = connected_components(ss.skeleton.to_mask(), 8).labels
    coords = ss.skeleton.coords
    comp_of = comps[coords[:, 0], coords[:, 1]]
    out = np.zeros(shape, dtype=np.int64)
    best = np.full(shape, np.inf)
    for k in range(1, int(comp_of.max()) + 1):
        sel = comp_of == k
        part = PixelSet(coords[sel], shape)
        disk = dilate_with_radii(part, ss.scales[sel])
        d = distance_to_set(disk, part).values
        # strict '<' keeps the lower label on ties since labels ascend
        win = disk.bits & (d < best)
        out[win] = k
        best[win] = d[win]
    return remove_small(LabelMap(out), params.min_size)
