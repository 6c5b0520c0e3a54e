"""Tensor containers for hyperspectral cubes and abundance maps.

A cube is a plain ``numpy`` array of shape ``(C, H, W)`` in float64, laid out
channel-major so the flat index of ``(c, i, j)`` is ``c*H*W + i*W + j``.
Abundance maps wrap such an array together with a flag telling whether the
sum-to-one constraint has been enforced.
"""
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .errors import DimensionError

ASC_TOL = 1e-6


def tensor_new(channels: int, height: int, width: int, fill: float = 0.0) -> np.ndarray:
    """Return a ``(channels, height, width)`` float64 array filled with ``fill``."""
    dims = (channels, height, width)
    if any(int(d) < 1 for d in dims):
        raise DimensionError(f"all dimensions must be >= 1, got {dims}")
    return np.full(tuple(int(d) for d in dims), float(fill), dtype=np.float64)


def flat_index(shape, c: int, i: int, j: int) -> int:
    _, h, w = shape
    return c * h * w + i * w + j


def as_cube(x) -> np.ndarray:
    """Coerce ``x`` (array or AbundanceMap) to a float64 rank-3 array."""
    if isinstance(x, AbundanceMap):
        x = x.data
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise DimensionError(f"expected a rank-3 (C, H, W) tensor, got shape {arr.shape}")
    return arr


@dataclass
class AbundanceMap:
    """Per-pixel material fractions, shape ``(N, H, W)``."""

    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        self.data = as_cube(self.data)

    @property
    def n_materials(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape


Cube = Union[np.ndarray, AbundanceMap]


class AbundanceReport(NamedTuple):
    anc_ok: bool
    asc_ok: bool
    worst_pixel_sum_error: float


def validate_abundance(a: Cube, tol: float = ASC_TOL) -> AbundanceReport:
    """Check non-negativity and per-pixel sum-to-one of an abundance map."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    data = as_cube(a)
    worst = float(np.max(np.abs(data.sum(axis=0) - 1.0)))
    return AbundanceReport(
        anc_ok=bool(data.min() >= 0.0),
        asc_ok=worst <= tol,
        worst_pixel_sum_error=worst,
    )


def check_endmembers(s) -> np.ndarray:
    """Validate an ``(L, N)`` endmember matrix and return it as float64."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim == 3 and s.shape[2] == 1:
        s = s[:, :, 0]
    if s.ndim != 2:
        raise DimensionError(f"endmember matrix must be (L, N), got shape {s.shape}")
    bands, materials = s.shape
    if materials > bands:
        raise DimensionError(f"need N <= L, got L={bands}, N={materials}")
    if not np.all(np.isfinite(s)) or s.min() < 0:
        raise ValueError("endmember values must be finite and non-negative")
    return s
