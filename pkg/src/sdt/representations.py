"""Label map -> intermediate representation encoders.

SDT energy, boundary-based distance transform (DT), binary boundary map and
skeleton-with-scales (SS), plus K-bin quantization of energy maps.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .geometry import DistanceField, boundary_mask, contour, instance_window, squared_distance_to
from .raster import (
    BACKGROUND,
    BinaryMask,
    EnergyMap,
    LabelMap,
    PixelSet,
    RasterError,
    read_raster_f32,
    write_raster_f32,
)
from .skeleton import local_skeleton

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.8
DEFAULT_EPSILON = 1e-6
DEFAULT_BINS = 10
DEFAULT_SIGMA = 2.0
DEFAULT_LEVEL = 0.5


class EncodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class SdtParams:
    alpha: float = DEFAULT_ALPHA
    epsilon: float = DEFAULT_EPSILON
    sigma: float = DEFAULT_SIGMA
    level: float = DEFAULT_LEVEL

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not 0 < self.level < 1:
            raise ValueError(f"level must lie in (0, 1), got {self.level}")


@dataclass(frozen=True)
class QuantParams:
    bins: int = DEFAULT_BINS

    def __post_init__(self):
        if int(self.bins) != self.bins or self.bins < 1:
            raise ValueError(f"bins must be a positive integer, got {self.bins}")


class QuantizedMap:
    """Per-pixel class: 0 for background, 1..bins for energy bins."""

    __slots__ = ("classes", "bins")

    def __init__(self, classes: np.ndarray, bins: int):
        a = np.asarray(classes)
        if a.ndim != 2 or 0 in a.shape:
            raise RasterError(f"quantized map must be a non-empty 2-D grid, got shape {a.shape}")
        if a.size and (a.min() < 0 or a.max() > bins):
            raise RasterError(f"class indices must lie in 0..{bins}")
        a = a.astype(np.int64, copy=True)
        a.setflags(write=False)
        self.classes = a
        self.bins = int(bins)

    @property
    def shape(self) -> tuple[int, int]:
        return self.classes.shape  # type: ignore[return-value]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QuantizedMap):
            return NotImplemented
        return self.bins == other.bins and np.array_equal(self.classes, other.classes)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class SkeletonScales:
    """Skeleton pixels with their distance to the instance boundary.

    ``scales[i]`` belongs to ``skeleton.coords[i]``.
    """

    skeleton: PixelSet
    scales: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.asarray(self.scales, dtype=np.float64).ravel()
        if len(s) != len(self.skeleton):
            raise ValueError(f"{len(s)} scales for {len(self.skeleton)} skeleton pixels")
        if (s < 0).any() or np.isnan(s).any():
            raise ValueError("scales must be non-negative")
        s.setflags(write=False)
        object.__setattr__(self, "scales", s)

    def scale_grid(self) -> np.ndarray:
        """Scales on the grid; -1 off the skeleton."""
        g = np.full(self.skeleton.shape, BACKGROUND, dtype=np.float64)
        if len(self.skeleton):
            c = self.skeleton.coords
            g[c[:, 0], c[:, 1]] = self.scales
        return g


# -- helpers -----------------------------------------------------------------------


def _distance(source: np.ndarray) -> np.ndarray:
    return np.sqrt(squared_distance_to(source))


@dataclass(frozen=True)
class SdtIngredients:
    """Per-pixel boundary and skeleton sets used to build the SDT energy."""

    boundary: np.ndarray
    skeleton: np.ndarray
    degenerate: tuple[int, ...]


def sdt_ingredients(labels: LabelMap, params: SdtParams = SdtParams()) -> SdtIngredients:
    bnd = boundary_mask(labels)
    skel = np.zeros(labels.shape, dtype=bool)
    degenerate = []
    for i in labels.ids:
        inst = labels.labels == i
        if not (bnd & inst).any():
            degenerate.append(i)
        s = local_skeleton(labels, i, params.sigma, params.level)
        if len(s) == 0:
            raise EncodeError(f"instance {i} has an empty skeleton")
        skel |= s.to_array()
    return SdtIngredients(bnd, skel, tuple(degenerate))


def encode_sdt(labels: LabelMap, params: SdtParams = SdtParams()) -> EnergyMap:
    """Skeleton-aware distance transform energy.

    Per instance: ``(d_b / (d_s + d_b)) ** alpha`` with ``d_b`` the distance to
    the instance boundary and ``d_s`` the distance to its local skeleton. The
    epsilon guard only enters where both distances vanish (a pixel that is
    boundary and skeleton at once), which yields 0; elsewhere the ratio is
    evaluated unguarded so skeleton pixels get exactly 1.

    An instance without boundary pixels (it fills the whole grid) gets energy 1
    everywhere; its id is listed in ``meta["degenerate"]``.
    """
    ing = sdt_ingredients(labels, params)
    energy = np.zeros(labels.shape, dtype=np.float64)
    for i in labels.ids:
        win = instance_window(labels, i)
        inst = labels.labels[win] == i
        gb = ing.boundary[win] & inst
        if i in ing.degenerate:
            log.warning("instance %d has no boundary pixels; assigning energy 1", i)
            energy[win][inst] = 1.0
            continue
        gs = ing.skeleton[win] & inst
        d_b = _distance(gb)[inst]
        d_s = _distance(gs)[inst]
        denom = d_b + d_s
        ratio = np.where(denom > 0, d_b / np.where(denom > 0, denom, 1.0), d_b / (denom + params.epsilon))
        energy[win][inst] = ratio ** params.alpha
    meta = {"alpha": params.alpha, "theta": None, "bins": None, "degenerate": list(ing.degenerate)}
    return EnergyMap.from_parts(energy, labels.labels > 0, meta)


def dt_distances(labels: LabelMap) -> DistanceField:
    """Unnormalized distance from each instance pixel to its own boundary (NaN off-instance)."""
    bnd = boundary_mask(labels)
    out = np.full(labels.shape, np.nan)
    for i in labels.ids:
        win = instance_window(labels, i)
        inst = labels.labels[win] == i
        gb = bnd[win] & inst
        if not gb.any():
            gb = contour(inst)
        out[win][inst] = _distance(gb)[inst]
    return DistanceField(out)


def encode_dt(labels: LabelMap, normalize: bool = True) -> EnergyMap | DistanceField:
    """Distance-to-boundary energy.

    With ``normalize`` each instance is divided by its own maximum so values
    lie in [0, 1] and a shared seed threshold applies; otherwise the raw
    :class:`DistanceField` is returned.
    """
    raw = dt_distances(labels)
    if not normalize:
        return raw
    d = np.nan_to_num(raw.values, nan=0.0)
    energy = np.zeros(labels.shape)
    for i in labels.ids:
        inst = labels.labels == i
        peak = d[inst].max()
        energy[inst] = d[inst] / peak if peak > 0 else 0.0
    return EnergyMap.from_parts(energy, labels.labels > 0, {"alpha": None, "theta": None, "bins": None, "normalized": True})


def encode_boundary(labels: LabelMap) -> BinaryMask:
    return BinaryMask(boundary_mask(labels))


def boundary_energy(labels: LabelMap) -> EnergyMap:
    """Boundary map in energy form: 0 on boundary pixels, 1 on other foreground."""
    e = np.where(boundary_mask(labels), 0.0, 1.0)
    return EnergyMap.from_parts(e, labels.labels > 0)


def encode_ss(labels: LabelMap, params: SdtParams = SdtParams()) -> SkeletonScales:
    bnd = boundary_mask(labels)
    skel = np.zeros(labels.shape, dtype=bool)
    scale = np.zeros(labels.shape)
    for i in labels.ids:
        s = local_skeleton(labels, i, params.sigma, params.level).to_array()
        win = instance_window(labels, i)
        inst = labels.labels[win] == i
        gb = bnd[win] & inst
        if not gb.any():
            gb = contour(inst)
        d = _distance(gb)
        sw = s[win]
        scale[win][sw] = d[sw]
        skel |= s
    ps = PixelSet.from_mask(skel)
    return SkeletonScales(ps, scale[ps.coords[:, 0], ps.coords[:, 1]] if len(ps) else np.zeros(0))


def write_scales(ss: SkeletonScales, path) -> None:
    write_raster_f32(ss.scale_grid(), {}, path)


def read_scales(path) -> SkeletonScales:
    values, _ = read_raster_f32(path)
    on = values >= 0
    ps = PixelSet.from_mask(on)
    return SkeletonScales(ps, values[on].astype(np.float64) if len(ps) else np.zeros(0))


# -- quantization ------------------------------------------------------------------


def _floor_scaled(v: np.ndarray, k: int) -> np.ndarray:
    """Exact floor(v * k): the float product can round across an integer, so
    values within reach of one are redone in rational arithmetic."""
    p = v * k
    out = np.floor(p).astype(np.int64)
    near = np.abs(p - np.round(p)) < 1e-6
    for idx in zip(*np.nonzero(near)):
        out[idx] = math.floor(Fraction(float(v[idx])) * k)
    return out


def quantize(energy: EnergyMap, params: QuantParams = QuantParams()) -> QuantizedMap:
    """Background -> 0, energy e -> min(floor(e * K) + 1, K)."""
    k = params.bins
    v = energy.values.astype(np.float64)
    fg = v != BACKGROUND
    cls = np.minimum(_floor_scaled(np.where(fg, v, 0.0), k) + 1, k)
    return QuantizedMap(np.where(fg, cls, 0), k)


def dequantize(q: QuantizedMap, params: QuantParams | None = None) -> EnergyMap:
    """Class c -> bin midpoint (c - 0.5) / K; class 0 -> background."""
    k = q.bins if params is None else params.bins
    if q.classes.max(initial=0) > k:
        raise ValueError(f"class {int(q.classes.max())} exceeds bin count {k}")
    fg = q.classes > 0
    e = (q.classes - 0.5) / k
    return EnergyMap.from_parts(e, fg, {"bins": k})


def quantize_value(e: float, bins: int = DEFAULT_BINS) -> int:
    return min(int(_floor_scaled(np.array([float(e)]), bins)[0]) + 1, bins)
