from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sdt.raster import LabelMap
from sdt.synth import generate, standard_suite

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


def masks(min_side: int = 1, max_side: int = 16):
    shape = st.tuples(st.integers(min_side, max_side), st.integers(min_side, max_side))
    return shape.flatmap(lambda s: arrays(np.bool_, s))


def nonempty_masks(min_side: int = 1, max_side: int = 16):
    return masks(min_side, max_side).filter(lambda m: m.any())


def label_grids(max_side: int = 16, max_id: int = 4):
    shape = st.tuples(st.integers(2, max_side), st.integers(2, max_side))
    return shape.flatmap(lambda s: arrays(np.int64, s, elements=st.integers(0, max_id)))


def label_grid_pairs(max_side: int = 16, max_id: int = 4):
    """Two label grids of one shared shape."""
    shape = st.tuples(st.integers(2, max_side), st.integers(2, max_side))
    grid = lambda s: arrays(np.int64, s, elements=st.integers(0, max_id))  # noqa: E731
    return shape.flatmap(lambda s: st.tuples(grid(s), grid(s)))


def label_maps(max_side: int = 16, max_id: int = 4):
    return label_grids(max_side, max_id).map(LabelMap)


def square(h: int, w: int, top: int, left: int, side: int, value: int = 1) -> np.ndarray:
    a = np.zeros((h, w), dtype=np.int64)
    a[top:top + side, left:left + side] = value
    return a


def disk(radius: int, pad: int = 2) -> np.ndarray:
    n = 2 * (radius + pad) + 1
    c = radius + pad
    rr, cc = np.mgrid[0:n, 0:n]
    return (rr - c) ** 2 + (cc - c) ** 2 <= radius * radius


def ring(outer: int, inner: int, pad: int = 2) -> np.ndarray:
    return disk(outer, pad) & ~disk(inner, pad + outer - inner)


@pytest.fixture(scope="session")
def suite_specs():
    return standard_suite(100, seed=0)


@pytest.fixture(scope="session")
def suite_maps(suite_specs):
    return [generate(s) for s in suite_specs]
