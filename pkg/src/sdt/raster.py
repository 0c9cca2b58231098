"""Grid types shared by every module, plus label/energy file I/O.

Arrays are stored row-major as numpy arrays and frozen after validation, so a
constructed object always satisfies its invariants.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

BACKGROUND = -1.0
MAX_LABEL = 65535

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_PNG_COLOR_TYPES = {0: "grayscale", 2: "RGB", 3: "palette", 4: "grayscale+alpha", 6: "RGBA"}


class RasterError(ValueError):
    """Invalid grid contents or dimensions."""


class RasterFormatError(RasterError):
    """A file does not match the expected on-disk format."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _check_dims(a: np.ndarray, what: str) -> None:
    if a.ndim != 2:
        raise RasterError(f"{what} must be 2-D, got shape {a.shape}")
    if a.shape[0] == 0 or a.shape[1] == 0:
        raise RasterError(f"{what} has degenerate dimensions {a.shape[1]}x{a.shape[0]}")


class _Grid:
    __slots__ = ()

    @property
    def shape(self) -> tuple[int, int]:
        return self._array().shape  # type: ignore[return-value]

    @property
    def height(self) -> int:
        return self._array().shape[0]

    @property
    def width(self) -> int:
        return self._array().shape[1]

    def _array(self) -> np.ndarray:
        raise NotImplementedError

    def __eq__(self, other: object) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return np.array_equal(self._array(), other._array())  # type: ignore[attr-defined]

    __hash__ = None  # type: ignore[assignment]


class LabelMap(_Grid):
    """Instance ids on a grid; 0 is background."""

    __slots__ = ("labels",)

    def __init__(self, labels: np.ndarray):
        a = np.asarray(labels)
        _check_dims(a, "label map")
        if a.dtype == bool or not np.issubdtype(a.dtype, np.integer):
            raise RasterError(f"label map needs an integer dtype, got {a.dtype}")
        if a.size and a.min() < 0:
            raise RasterError("label map contains negative ids")
        self.labels = _frozen(a.astype(np.int64, copy=True))

    def _array(self) -> np.ndarray:
        return self.labels

    @classmethod
    def empty(cls, height: int, width: int) -> "LabelMap":
        return cls(np.zeros((height, width), dtype=np.int64))

    @property
    def ids(self) -> list[int]:
        u = np.unique(self.labels)
        return [int(i) for i in u[u > 0]]

    def __len__(self) -> int:
        return len(self.ids)

    def has(self, instance_id: int) -> bool:
        return instance_id > 0 and bool(np.any(self.labels == instance_id))

    def mask(self, instance_id: int) -> "BinaryMask":
        return BinaryMask(self.labels == instance_id)

    def foreground(self) -> "BinaryMask":
        return BinaryMask(self.labels > 0)

    def sizes(self) -> dict[int, int]:
        ids, counts = np.unique(self.labels[self.labels > 0], return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}

    def __repr__(self) -> str:
        return f"LabelMap({self.width}x{self.height}, {len(self)} instances)"


class BinaryMask(_Grid):
    __slots__ = ("bits",)

    def __init__(self, bits: np.ndarray):
        a = np.asarray(bits)
        _check_dims(a, "binary mask")
        if a.dtype != bool:
            if not np.isin(a, (0, 1)).all():
                raise RasterError("binary mask values must be 0/1")
            a = a.astype(bool)
        self.bits = _frozen(a.copy())

    def _array(self) -> np.ndarray:
        return self.bits

    def count(self) -> int:
        return int(self.bits.sum())

    def any(self) -> bool:
        return bool(self.bits.any())

    def __and__(self, other: "BinaryMask") -> "BinaryMask":
        return BinaryMask(self.bits & other.bits)

    def __or__(self, other: "BinaryMask") -> "BinaryMask":
        return BinaryMask(self.bits | other.bits)

    def __sub__(self, other: "BinaryMask") -> "BinaryMask":
        return BinaryMask(self.bits & ~other.bits)

    def __repr__(self) -> str:
        return f"BinaryMask({self.width}x{self.height}, {self.count()} set)"


class EnergyMap(_Grid):
    """Foreground energy in [0, 1]; background pixels hold the -1.0 sentinel.

    Values are float32 so that serialization round-trips bit-exactly. ``meta``
    carries the sidecar parameters (alpha, theta, bins); any may be None.
    """

    __slots__ = ("values", "meta")

    def __init__(self, values: np.ndarray, meta: dict | None = None):
        a = np.asarray(values, dtype=np.float32)
        _check_dims(a, "energy map")
        if np.isnan(a).any():
            raise RasterError("energy map contains NaN")
        fg = a != BACKGROUND
        bad = fg & ((a < 0.0) | (a > 1.0))
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise RasterError(
                f"foreground energy {float(a[r, c])!r} at ({r}, {c}) lies outside [0, 1]"
            )
        self.values = _frozen(a.copy())
        m = {"alpha": None, "theta": None, "bins": None}
        m.update(meta or {})
        self.meta = m

    def _array(self) -> np.ndarray:
        return self.values

    @classmethod
    def from_parts(cls, energy: np.ndarray, foreground: np.ndarray, meta: dict | None = None) -> "EnergyMap":
        v = np.where(foreground, energy, BACKGROUND).astype(np.float32)
        return cls(v, meta)

    def foreground(self) -> BinaryMask:
        return BinaryMask(self.values != BACKGROUND)

    def with_values(self, values: np.ndarray) -> "EnergyMap":
        """New map over the same foreground; background is re-imposed."""
        fg = self.values != BACKGROUND
        return EnergyMap.from_parts(values, fg, self.meta)

    def __repr__(self) -> str:
        return f"EnergyMap({self.width}x{self.height})"


class PixelSet:
    """Sorted, duplicate-free (row, col) coordinates inside a grid of ``shape``."""

    __slots__ = ("coords", "shape")

    def __init__(self, coords, shape: tuple[int, int]):
        c = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
        h, w = shape
        if c.size and ((c[:, 0] < 0).any() or (c[:, 0] >= h).any() or (c[:, 1] < 0).any() or (c[:, 1] >= w).any()):
            raise RasterError(f"pixel coordinates outside a {w}x{h} grid")
        if len(c):
            c = np.unique(c, axis=0)
        self.coords = _frozen(c)
        self.shape = (int(h), int(w))

    @classmethod
    def from_mask(cls, mask) -> "PixelSet":
        bits = mask.bits if isinstance(mask, BinaryMask) else np.asarray(mask, dtype=bool)
        return cls(np.argwhere(bits), bits.shape)

    def to_array(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=bool)
        if len(self.coords):
            out[self.coords[:, 0], self.coords[:, 1]] = True
        return out

    def to_mask(self) -> BinaryMask:
        return BinaryMask(self.to_array())

    def __len__(self) -> int:
        return len(self.coords)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return ((int(r), int(c)) for r, c in self.coords)

    def __contains__(self, rc) -> bool:
        r, c = rc
        if not (0 <= r < self.shape[0] and 0 <= c < self.shape[1]):
            return False
        return bool(np.any((self.coords[:, 0] == r) & (self.coords[:, 1] == c)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PixelSet):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.coords, other.coords)

    __hash__ = None  # type: ignore[assignment]

    def __sub__(self, other: "PixelSet") -> "PixelSet":
        return PixelSet.from_mask(self.to_array() & ~other.to_array())

    def __and__(self, other: "PixelSet") -> "PixelSet":
        return PixelSet.from_mask(self.to_array() & other.to_array())

    def __or__(self, other: "PixelSet") -> "PixelSet":
        return PixelSet.from_mask(self.to_array() | other.to_array())

    def __repr__(self) -> str:
        return f"PixelSet({len(self)} px in {self.shape[1]}x{self.shape[0]})"


# -- label maps: 16-bit grayscale PNG ----------------------------------------------


def _png_header(path: Path) -> tuple[int, int]:
    with open(path, "rb") as fh:
        head = fh.read(33)
    if len(head) < 33 or head[:8] != _PNG_MAGIC or head[12:16] != b"IHDR":
        raise RasterFormatError(f"{path}: not a PNG file")
    bit_depth, color_type = head[24], head[25]
    return bit_depth, color_type


def read_label_map(path) -> LabelMap:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"label map not found: {path}")
    bit_depth, color_type = _png_header(path)
    if color_type != 0:
        kind = _PNG_COLOR_TYPES.get(color_type, f"type {color_type}")
        raise RasterFormatError(f"{path}: channel count: expected single-channel grayscale, got {kind}")
    if bit_depth != 16:
        raise RasterFormatError(f"{path}: bit depth: expected 16, got {bit_depth}")
    with Image.open(path) as im:
        a = np.array(im)
    return LabelMap(a.astype(np.int64))


def write_label_map(labels: LabelMap, path) -> None:
    a = labels.labels
    if a.max(initial=0) > MAX_LABEL:
        raise RasterError(f"instance id {int(a.max())} exceeds the 16-bit range (max {MAX_LABEL})")
    Image.fromarray(a.astype(np.uint16)).save(Path(path), format="PNG")


# -- energy maps: raw little-endian float32 + JSON sidecar ---------------------------

SIDECAR_FIELDS = ("width", "height", "alpha", "theta", "bins")


def energy_paths(path) -> tuple[Path, Path]:
    """``foo``, ``foo.f32`` or ``foo.json`` -> (foo.f32, foo.json)."""
    p = Path(path)
    if p.suffix in (".f32", ".json"):
        p = p.with_suffix("")
    return p.with_name(p.name + ".f32"), p.with_name(p.name + ".json")


def write_raster_f32(values: np.ndarray, meta: dict, path) -> None:
    raster, sidecar = energy_paths(path)
    h, w = values.shape
    side = {"width": int(w), "height": int(h)}
    for k in ("alpha", "theta", "bins"):
        side[k] = meta.get(k)
    raster.write_bytes(np.ascontiguousarray(values, dtype="<f4").tobytes())
    sidecar.write_text(json.dumps(side, indent=2) + "\n", encoding="utf-8")


def read_raster_f32(path) -> tuple[np.ndarray, dict]:
    raster, sidecar = energy_paths(path)
    if not sidecar.is_file():
        raise FileNotFoundError(f"energy sidecar not found: {sidecar}")
    if not raster.is_file():
        raise FileNotFoundError(f"energy raster not found: {raster}")
    side = json.loads(sidecar.read_text(encoding="utf-8"))
    missing = [k for k in SIDECAR_FIELDS if k not in side]
    if missing:
        raise RasterFormatError(f"{sidecar}: missing fields {missing}")
    w, h = int(side["width"]), int(side["height"])
    if w <= 0 or h <= 0:
        raise RasterFormatError(f"{sidecar}: degenerate dimensions {w}x{h}")
    data = raster.read_bytes()
    if len(data) != 4 * w * h:
        raise RasterFormatError(
            f"{raster}: size mismatch, sidecar says {w}x{h} ({4 * w * h} bytes) but raster has {len(data)} bytes"
        )
    values = np.frombuffer(data, dtype="<f4").reshape(h, w).astype(np.float32)
    if np.isnan(values).any():
        raise RasterError(f"{raster}: raster contains NaN")
    meta = {k: side[k] for k in ("alpha", "theta", "bins")}
    return values, meta


def write_energy_map(energy: EnergyMap, path) -> None:
    write_raster_f32(energy.values, energy.meta, path)


def read_energy_map(path) -> EnergyMap:
    values, meta = read_raster_f32(path)
    return EnergyMap(values, meta)

