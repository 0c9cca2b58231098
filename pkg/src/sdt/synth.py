"""Seeded synthetic scenes and perturbation models.

Families are picked to provoke the two classic decoding failures: touching
shapes (false merges for boundary maps) and thin necks (splits for the plain
distance transform).
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .geometry import disk_offsets, gaussian_blur
from .raster import BACKGROUND, BinaryMask, EnergyMap, LabelMap

FAMILIES = ("touching-squares", "dumbbell", "u-shape", "s-curve", "ring", "random-blob")
PERTURB_KINDS = ("boundary-dropout", "energy-noise", "energy-blur")
MAX_TRIES = 200


class SynthError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneSpec:
    """A scene recipe. ``count`` is the number of instances, except for
    ``ring`` where it is the number of ring/core pairs. ``gap`` is the spacing
    inside touching groups and the minimum clearance between groups."""

    width: int = 96
    height: int = 96
    family: str = "touching-squares"
    count: int = 2
    gap: int = 0
    seed: int = 0
    neck_width: int = 3
    bulb_width: int = 11
    neck_length: int = 7

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown shape family {self.family!r}; choose from {', '.join(FAMILIES)}")
        if self.width < 8 or self.height < 8:
            raise ValueError("scene must be at least 8x8")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.gap < 0:
            raise ValueError("gap must be >= 0")
        if self.neck_width < 1 or self.bulb_width < self.neck_width + 2 or self.neck_length < 1:
            raise ValueError("dumbbell needs neck_width >= 1, bulb_width >= neck_width + 2, neck_length >= 1")


@dataclass(frozen=True)
class PerturbSpec:
    kind: str = "boundary-dropout"
    rate: float = 0.0
    amplitude: float = 0.0
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PERTURB_KINDS:
            raise ValueError(f"unknown perturbation {self.kind!r}; choose from {', '.join(PERTURB_KINDS)}")
        if not 0 <= self.rate <= 1:
            raise ValueError("rate must lie in [0, 1]")
        if self.amplitude < 0 or self.sigma < 0:
            raise ValueError("amplitude and sigma must be >= 0")

    @property
    def level(self) -> float:
        return {"boundary-dropout": self.rate, "energy-noise": self.amplitude, "energy-blur": self.sigma}[self.kind]


# -- shape patches: int arrays with local ids 1..n -------------------------------


def _square_chain(rng, spec: SceneSpec) -> list[np.ndarray]:
    n = spec.count
    per_row = math.ceil(math.sqrt(n))
    sides = rng.integers(10, 15, size=n)
    rows = [list(range(i, min(i + per_row, n))) for i in range(0, n, per_row)]
    g = spec.gap
    w = max(sum(sides[j] for j in r) + g * (len(r) - 1) for r in rows)
    h = sum(max(sides[j] for j in r) for r in rows) + g * (len(rows) - 1)
    patch = np.zeros((h, w), dtype=np.int64)
    y = 0
    for r in rows:
        x = 0
        for j in r:
            s = sides[j]
            patch[y:y + s, x:x + s] = j + 1
            x += s + g
        y += max(sides[j] for j in r) + g
    return [patch]


def _dumbbell(rng, spec: SceneSpec) -> np.ndarray:
    b, nw, nl = spec.bulb_width, spec.neck_width, spec.neck_length
    patch = np.zeros((b, 2 * b + nl), dtype=np.int64)
    patch[:, :b] = 1
    patch[:, b + nl:] = 1
    top = (b - nw) // 2
    patch[top:top + nw, b:b + nl] = 1
    return patch if rng.random() < 0.5 else patch.T.copy()


def _u_shape(rng) -> np.ndarray:
    arm = int(rng.integers(5, 8))
    h, w = int(rng.integers(20, 29)), int(rng.integers(18, 27))
    patch = np.zeros((h, w), dtype=np.int64)
    patch[:, :arm] = 1
    patch[:, w - arm:] = 1
    patch[h - arm:, :] = 1
    return np.rot90(patch, int(rng.integers(0, 4))).copy()


def _s_curve(rng) -> np.ndarray:
    thick = float(rng.uniform(2.5, 3.5))
    length = int(rng.integers(26, 36))
    amp = float(rng.uniform(5, 8))
    pad = int(math.ceil(thick)) + 1
    h = int(2 * amp) + 2 * pad + 1
    patch = np.zeros((h, length + 2 * pad), dtype=np.int64)
    off = disk_offsets(thick)
    for t in np.linspace(0, length, 8 * length):
        y = pad + amp + amp * math.sin(2 * math.pi * t / length)
        r, c = int(round(y)), int(round(t)) + pad
        patch[off[:, 0] + r, off[:, 1] + c] = 1
    return np.rot90(patch, int(rng.integers(0, 4))).copy()


def _ring(rng, gap: int) -> np.ndarray:
    outer = float(rng.uniform(11, 14))
    thick = float(rng.uniform(5, 6.5))
    inner = outer - thick
    n = int(math.ceil(outer)) + 1
    yy, xx = np.mgrid[-n:n + 1, -n:n + 1]
    rr = np.hypot(yy, xx)
    patch = np.zeros(rr.shape, dtype=np.int64)
    patch[(rr <= outer) & (rr > inner)] = 1
    patch[rr <= inner - gap] = 2
    return patch


def _blob(rng) -> np.ndarray:
    size = int(rng.integers(22, 31))
    noise = rng.random((size, size))
    field_ = ndimage.gaussian_filter(noise, 3.0, mode="constant", cval=0.0)
    yy, xx = np.mgrid[:size, :size]
    c = (size - 1) / 2
    bias = 1 - np.hypot(yy - c, xx - c) / (size / 2)
    field_ = (field_ - field_.mean()) / (field_.std() + 1e-12) * 0.35 + bias
    m = field_ > 0.35
    m = ndimage.binary_opening(m, structure=_disk_struct(2))
    lab, n = ndimage.label(m, structure=np.ones((3, 3)))
    if n == 0:
        return _blob(rng)
    sizes = ndimage.sum(m, lab, range(1, n + 1))
    m = lab == (int(np.argmax(sizes)) + 1)
    m = ndimage.binary_fill_holes(m)
    if m.sum() < 60:
        return _blob(rng)
    rows, cols = np.nonzero(m)
    return m[rows.min():rows.max() + 1, cols.min():cols.max() + 1].astype(np.int64)


def _disk_struct(r: int) -> np.ndarray:
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return yy * yy + xx * xx <= r * r


def _groups(rng, spec: SceneSpec) -> list[np.ndarray]:
    f = spec.family
    if f == "touching-squares":
        return _square_chain(rng, spec)
    if f == "dumbbell":
        return [_dumbbell(rng, spec) for _ in range(spec.count)]
    if f == "u-shape":
        return [_u_shape(rng) for _ in range(spec.count)]
    if f == "s-curve":
        return [_s_curve(rng) for _ in range(spec.count)]
    if f == "ring":
        return [_ring(rng, spec.gap) for _ in range(spec.count)]
    return [_blob(rng) for _ in range(spec.count)]


def generate(spec: SceneSpec) -> LabelMap:
    """Place each shape group at a random free spot, keeping ``gap`` pixels of
    clearance to earlier groups."""
    rng = np.random.default_rng(spec.seed)
    out = np.zeros((spec.height, spec.width), dtype=np.int64)
    next_id = 1
    clear = _disk_struct(spec.gap) if spec.gap > 0 else None
    for patch in _groups(rng, spec):
        ph, pw = patch.shape
        if ph > spec.height or pw > spec.width:
            raise SynthError(f"{spec.family} shape of {pw}x{ph} does not fit a {spec.width}x{spec.height} scene")
        taken = out > 0
        if clear is not None:
            taken = ndimage.binary_dilation(taken, structure=clear)
        for _ in range(MAX_TRIES):
            r = int(rng.integers(0, spec.height - ph + 1))
            c = int(rng.integers(0, spec.width - pw + 1))
            if not (taken[r:r + ph, c:c + pw] & (patch > 0)).any():
                break
        else:
            raise SynthError(f"could not place {spec.family} shape without overlap after {MAX_TRIES} tries")
        ids = np.unique(patch[patch > 0])
        for i in ids:
            out[r:r + ph, c:c + pw][patch == i] = next_id
            next_id += 1
    return LabelMap(out)


def standard_suite(n: int = 100, seed: int = 0, width: int = 96, height: int = 96) -> list[SceneSpec]:
    """Round-robin over the families with per-scene seeds ``seed + i``."""
    specs = []
    for i in range(n):
        fam = FAMILIES[i % len(FAMILIES)]
        rng = np.random.default_rng(seed + i)
        count = {
            "touching-squares": int(rng.integers(2, 5)),
            "dumbbell": int(rng.integers(1, 3)),
            "u-shape": int(rng.integers(1, 3)),
            "s-curve": int(rng.integers(1, 3)),
            "ring": 1,
            "random-blob": int(rng.integers(2, 5)),
        }[fam]
        gap = 0 if fam in ("touching-squares", "ring") else 2
        specs.append(SceneSpec(width, height, fam, count, gap, seed + i))
    return specs


def l_shape(height: int = 40, width: int = 40, arm: int = 7) -> LabelMap:
    """A single L-shaped instance, used to contrast local and cropped skeletons."""
    a = np.zeros((height, width), dtype=np.int64)
    a[4:height - 4, 4:4 + arm] = 1
    a[height - 4 - arm:height - 4, 4:width - 4] = 1
    return LabelMap(a)


def crop(labels: LabelMap, rows: slice, cols: slice) -> LabelMap:
    return LabelMap(labels.labels[rows, cols])


# -- perturbations -----------------------------------------------------------------


def perturb_boundary(boundary: BinaryMask, spec: PerturbSpec) -> BinaryMask:
    """Drop each boundary pixel independently with probability ``rate``."""
    if spec.kind != "boundary-dropout":
        raise ValueError(f"perturb_boundary needs kind boundary-dropout, got {spec.kind}")
    u = np.random.default_rng(spec.seed).random(boundary.shape)
    return BinaryMask(boundary.bits & ~(u < spec.rate))


def perturb_energy(energy: EnergyMap, spec: PerturbSpec) -> EnergyMap:
    fg = energy.values != BACKGROUND
    v = energy.values.astype(np.float64)
    if spec.kind == "energy-noise":
        if spec.amplitude == 0:
            return energy
        noise = np.random.default_rng(spec.seed).uniform(-spec.amplitude, spec.amplitude, v.shape)
        out = np.clip(v + noise, 0.0, 1.0)
    elif spec.kind == "energy-blur":
        if spec.sigma == 0:
            return energy
        out = np.clip(gaussian_blur(np.where(fg, v, 0.0), spec.sigma, weights=fg), 0.0, 1.0)
    else:
        raise ValueError(f"perturb_energy needs an energy-* kind, got {spec.kind}")
    return EnergyMap.from_parts(out, fg, energy.meta)


# -- key = value config files ------------------------------------------------------


def _coerce(cls, raw: dict[str, str]):
    known = {f.name: f for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
    kw = {}
    for k, v in raw.items():
        default = getattr(cls(), k)
        kw[k] = v if isinstance(default, str) else type(default)(v)
    return cls(**kw)


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.read_string("[config]\n" + Path(path).read_text(encoding="utf-8"))
    return dict(cp["config"])


def scene_spec_from(raw: dict[str, str]) -> SceneSpec:
    return _coerce(SceneSpec, raw)


def perturb_spec_from(raw: dict[str, str]) -> PerturbSpec:
    return _coerce(PerturbSpec, raw)


def load_scene_spec(path) -> SceneSpec:
    return scene_spec_from(read_config(path))


def dump_config(spec, path) -> None:
    lines = [f"{k} = {v}" for k, v in asdict(spec).items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def with_seed(spec, seed: int):
    return replace(spec, seed=seed)
