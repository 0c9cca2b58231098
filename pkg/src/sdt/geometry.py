"""Grid geometry: exact Euclidean distance transform, connected components,
instance boundaries, disk dilation, hole filling, small-object removal and
Gaussian mask smoothing.
"""

from __future__ import annotations

import math

import numba
import numpy as np
from scipy import ndimage

from .raster import BinaryMask, LabelMap, PixelSet, RasterError

# 8-neighbourhood offsets in raster order
NEIGHBORS_8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
NEIGHBORS_4 = ((-1, 0), (0, -1), (0, 1), (1, 0))

_STRUCT = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


class DistanceField:
    """Euclidean distances in pixel units; NaN marks pixels outside the domain."""

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        v = np.array(values, dtype=np.float64)
        v.setflags(write=False)
        self.values = v

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    def defined(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def __getitem__(self, rc) -> float:
        return float(self.values[rc])

    def __repr__(self) -> str:
        return f"DistanceField({self.shape[1]}x{self.shape[0]})"


# -- exact EDT ---------------------------------------------------------------------


@numba.njit(cache=True)
def _column_pass(src):
    h, w = src.shape
    big = h + w + 1
    g = np.empty((h, w), dtype=np.float64)
    d = np.empty(h, dtype=np.int64)
    for c in range(w):
        run = big
        for r in range(h):
            if src[r, c]:
                run = 0
            elif run < big:
                run += 1
            d[r] = run
        run = big
        for r in range(h - 1, -1, -1):
            if src[r, c]:
                run = 0
            elif run < big:
                run += 1
            if run < d[r]:
                d[r] = run
        for r in range(h):
            if d[r] >= big:
                g[r, c] = np.inf
            else:
                g[r, c] = float(d[r] * d[r])
    return g


@numba.njit(cache=True)
def _row_envelope(f, out):
    # lower envelope of parabolas (q - v)^2 + f[v] over the finite entries of f
    n = f.shape[0]
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1, dtype=np.float64)
    k = -1
    for q in range(n):
        fq = f[q]
        if fq == np.inf:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -np.inf
            z[1] = np.inf
            continue
        s = ((fq + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((fq + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    if k < 0:
        for q in range(n):
            out[q] = np.inf
        return
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        dq = q - v[k]
        out[q] = dq * dq + f[v[k]]


@numba.njit(cache=True)
def _edt_squared(src):
    g = _column_pass(src)
    h, w = g.shape
    out = np.empty((h, w), dtype=np.float64)
    for r in range(h):
        _row_envelope(g[r], out[r])
    return out


def squared_distance_to(source: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distance from every pixel to the nearest True pixel.

    Two separable passes: 1-D nearest-source distances down each column, then
    the lower envelope of parabolas along each row. All intermediate values are
    integers, so the result is exact.
    """
    src = np.ascontiguousarray(source, dtype=np.bool_)
    if src.ndim != 2:
        raise RasterError(f"source must be 2-D, got shape {src.shape}")
    if not src.any():
        raise ValueError("distance to an empty set is undefined")
    return _edt_squared(src)


def distance_to_set(domain: BinaryMask, source: PixelSet) -> DistanceField:
    if source.shape != domain.shape:
        raise RasterError(f"source grid {source.shape} does not match domain {domain.shape}")
    if len(source) == 0:
        raise ValueError("distance to an empty source set is undefined")
    d = np.sqrt(squared_distance_to(source.to_array()))
    return DistanceField(np.where(domain.bits, d, np.nan))


# -- labelling ---------------------------------------------------------------------


def relabel_first_encounter(labels: np.ndarray) -> np.ndarray:
    """Renumber positive labels 1..n in row-major order of first appearance."""
    flat = labels.ravel()
    ids, first = np.unique(flat, return_index=True)
    keep = ids > 0
    ids, first = ids[keep], first[keep]
    order = ids[np.argsort(first, kind="stable")]
    lut = np.zeros(int(flat.max(initial=0)) + 1, dtype=np.int64)
    lut[order] = np.arange(1, len(order) + 1)
    return lut[labels]


def connected_components(mask: BinaryMask, connectivity: int = 8) -> LabelMap:
    if connectivity not in _STRUCT:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    lab, _ = ndimage.label(mask.bits, structure=_STRUCT[connectivity])
    return LabelMap(relabel_first_encounter(lab))


def count_components(bits: np.ndarray, connectivity: int) -> int:
    return int(ndimage.label(bits, structure=_STRUCT[connectivity])[1])


# -- boundaries --------------------------------------------------------------------


def _shifted_differs(labels: np.ndarray) -> np.ndarray:
    """True where some in-bounds 8-neighbour carries a different label."""
    h, w = labels.shape
    out = np.zeros((h, w), dtype=bool)
    for dr, dc in NEIGHBORS_8:
        r0, r1 = max(0, -dr), min(h, h - dr)
        c0, c1 = max(0, -dc), min(w, w - dc)
        if r0 >= r1 or c0 >= c1:
            continue
        here = labels[r0:r1, c0:c1]
        there = labels[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
        out[r0:r1, c0:c1] |= here != there
    return out


def boundary_mask(labels: LabelMap) -> np.ndarray:
    """Union of all instance boundaries; out-of-grid neighbours never count."""
    return _shifted_differs(labels.labels) & (labels.labels > 0)


def boundary_set(labels: LabelMap, instance_id: int) -> PixelSet:
    if not labels.has(instance_id):
        raise KeyError(f"instance id {instance_id} not present in label map")
    inst = labels.labels == instance_id
    return PixelSet.from_mask(_shifted_differs(inst.view(np.int8)) & inst)


def contour(bits: np.ndarray) -> np.ndarray:
    """Mask pixels with an 8-neighbour outside the mask, the grid exterior included."""
    padded = np.pad(bits, 1, constant_values=False)
    return _shifted_differs(padded.view(np.int8))[1:-1, 1:-1] & bits


def instance_window(labels: LabelMap, instance_id: int, margin: int = 0) -> tuple[slice, slice]:
    """Bounding box of an instance grown by ``margin`` and clipped to the grid."""
    rows, cols = np.nonzero(labels.labels == instance_id)
    h, w = labels.shape
    return (
        slice(max(0, rows.min() - margin), min(h, rows.max() + 1 + margin)),
        slice(max(0, cols.min() - margin), min(w, cols.max() + 1 + margin)),
    )


# -- morphology --------------------------------------------------------------------


def disk_offsets(radius: float) -> np.ndarray:
    """Integer offsets (dr, dc) with dr^2 + dc^2 <= radius^2."""
    r = int(math.floor(radius))
    dr, dc = np.mgrid[-r:r + 1, -r:r + 1]
    keep = dr * dr + dc * dc <= radius * radius
    return np.stack([dr[keep], dc[keep]], axis=1)


def dilate_with_radii(skeleton: PixelSet, radii) -> BinaryMask:
    radii = np.asarray(radii, dtype=np.float64).ravel()
    if len(radii) != len(skeleton):
        raise ValueError(f"{len(radii)} radii for {len(skeleton)} skeleton pixels")
    if (radii < 0).any():
        raise ValueError("radii must be non-negative")
    h, w = skeleton.shape
    out = np.zeros((h, w), dtype=bool)
    for (r, c), rad in zip(skeleton.coords, radii):
        off = disk_offsets(rad)
        rr, cc = off[:, 0] + r, off[:, 1] + c
        ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        out[rr[ok], cc[ok]] = True
    return BinaryMask(out)


def fill_holes(mask: BinaryMask) -> BinaryMask:
    bg = connected_components(BinaryMask(~mask.bits), 4).labels
    border = np.unique(np.concatenate([bg[0], bg[-1], bg[:, 0], bg[:, -1]]))
    outside = np.isin(bg, border[border > 0])
    return BinaryMask(mask.bits | ((bg > 0) & ~outside))


def remove_small(labels: LabelMap, min_size: int) -> LabelMap:
    if min_size < 0:
        raise ValueError("min_size must be >= 0")
    a = labels.labels
    small = [i for i, n in labels.sizes().items() if n < min_size]
    if not small:
        return labels
    return LabelMap(np.where(np.isin(a, small), 0, a))


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(values: np.ndarray, sigma: float, weights: np.ndarray | None = None) -> np.ndarray:
    """Truncated separable Gaussian (radius ceil(3 sigma)), renormalized over
    the in-grid (and, if given, in-``weights``) part of the kernel."""
    if sigma == 0:
        return np.array(values, dtype=np.float64)
    k = gaussian_kernel(sigma)
    wts = np.ones(values.shape) if weights is None else weights.astype(np.float64)

    def blur(a):
        a = ndimage.correlate1d(a, k, axis=0, mode="constant", cval=0.0)
        return ndimage.correlate1d(a, k, axis=1, mode="constant", cval=0.0)

    num = blur(np.asarray(values, dtype=np.float64) * wts)
    den = blur(wts)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def smooth_mask(mask: BinaryMask, sigma: float = 2.0, level: float = 0.5) -> BinaryMask:
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if sigma == 0:
        return mask
    return BinaryMask(gaussian_blur(mask.bits, sigma) > level)
