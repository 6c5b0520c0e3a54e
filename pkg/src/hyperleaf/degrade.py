"""Simulated acquisition: Gaussian blur, bicubic resampling, and the
bicubic upsampling baseline."""
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .tensor import AbundanceMap, as_cube

BICUBIC_A = -0.5


@dataclass(frozen=True)
class PsfConfig:
    sigma: float = 4.0
    truncation: float = 6.0  # total kernel width in units of sigma
    factor: int = 4
    method: str = "bicubic"  # or "decimate"
    boundary: str = "reflect"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.truncation > 0:
            raise ValueError("truncation must be positive")
        if int(self.factor) != self.factor or self.factor < 2:
            raise ValueError("factor must be an integer >= 2")
        if self.method not in ("bicubic", "decimate"):
            raise ValueError(f"unknown downsampling method {self.method!r}")
        if self.boundary != "reflect":
            raise ValueError("only reflect boundary handling is supported")


def kernel_width(sigma: float, truncation: float) -> int:
    width = math.ceil(truncation * sigma - 1e-9)
    if width % 2 == 0:
        width += 1
    return max(width, 1)


def gaussian_kernel(sigma: float, truncation: float = 6.0) -> np.ndarray:
    """Sampled, normalized 1-D Gaussian of odd width >= ``truncation*sigma``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    radius = kernel_width(sigma, truncation) // 2
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    k /= k.sum()
    # exact mirror symmetry regardless of rounding in the division
    k = 0.5 * (k + k[::-1])
    return k


def _correlate_axis(x: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    # Accumulate weighted differences to the center tap so that constant
    # signals are reproduced bit-exactly (sum(k) == 1 only up to rounding).
    radius = len(k) // 2
    x = np.moveaxis(x, axis, -1)
    n = x.shape[-1]
    pad = [(0, 0)] * (x.ndim - 1) + [(radius, radius)]
    xp = np.pad(x, pad, mode="symmetric")
    acc = np.zeros_like(x)
    for t, weight in enumerate(k):
        if t != radius:
            acc += weight * (xp[..., t:t + n] - x)
    return np.moveaxis(x + acc, -1, axis)


def blur(t, k: np.ndarray, boundary: str = "reflect") -> np.ndarray:
    """Separable per-channel blur (rows then columns) with mirror padding."""
    if boundary != "reflect":
        raise ValueError("only reflect boundary handling is supported")
    x = as_cube(t)
    k = np.asarray(k, dtype=np.float64)
    return _correlate_axis(_correlate_axis(x, k, axis=2), k, axis=1)


def cubic_weight(d: np.ndarray, a: float = BICUBIC_A) -> np.ndarray:
    d = np.abs(d)
    d2, d3 = d * d, d * d * d
    near = (a + 2.0) * d3 - (a + 3.0) * d2 + 1.0
    far = a * d3 - 5.0 * a * d2 + 8.0 * a * d - 4.0 * a
    return np.where(d <= 1.0, near, np.where(d < 2.0, far, 0.0))


def _mirror(idx: np.ndarray, n: int) -> np.ndarray:
    # half-sample symmetric extension, periodic with period 2n
    period = 2 * n
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - 1 - idx, idx)


def _resample_axis(x: np.ndarray, out_n: int, axis: int) -> np.ndarray:
    x = np.moveaxis(x, axis, -1)
    in_n = x.shape[-1]
    if out_n == in_n:
        return np.moveaxis(x.copy(), -1, axis)
    dst = np.arange(out_n, dtype=np.float64)
    src = (dst + 0.5) * (in_n / out_n) - 0.5
    base = np.floor(src).astype(np.int64)
    frac = src - base
    anchor = x[..., _mirror(base, in_n)]
    acc = np.zeros(anchor.shape, dtype=np.float64)
    for off in (-1, 1, 2):
        w = cubic_weight(frac - off)
        acc += w * (x[..., _mirror(base + off, in_n)] - anchor)
    # the anchor tap's own weight is implied by the partition of unity
    return np.moveaxis(anchor + acc, -1, axis)


def resample_bicubic(t, out_h: int, out_w: int) -> np.ndarray:
    """Cubic-convolution resampling (a=-0.5, half-pixel centers, mirror edges)."""
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"output dims must be >= 1, got {(out_h, out_w)}")
    x = as_cube(t)
    return _resample_axis(_resample_axis(x, out_w, axis=2), out_h, axis=1)


def decimate(t, factor: int) -> np.ndarray:
    x = as_cube(t)
    off = factor // 2
    return x[:, off::factor, off::factor].copy()


def renormalize(x: np.ndarray) -> np.ndarray:
    """Clamp at zero and rescale each pixel to sum to one."""
    from .deadleaves import asc_normalize

    return asc_normalize(np.maximum(x, 0.0)).data


def degrade_pair(hr, psf: PsfConfig = PsfConfig()):
    """Blur then downsample ``hr`` by ``psf.factor``.

    Abundance maps come back as normalized AbundanceMap objects, plain
    arrays come back as arrays.
    """
    x = as_cube(hr)
    _, h, w = x.shape
    f = int(psf.factor)
    if h % f or w % f:
        raise DimensionError(f"spatial dims {h}x{w} not divisible by factor {f}")
    blurred = blur(x, gaussian_kernel(psf.sigma, psf.truncation), psf.boundary)
    if psf.method == "bicubic":
        lr = resample_bicubic(blurred, h // f, w // f)
    else:
        lr = decimate(blurred, f)
    if isinstance(hr, AbundanceMap):
        return AbundanceMap(renormalize(lr), normalized=True)
    return lr


def bicubic_upsample_baseline(lr, factor: int = 4):
    x = as_cube(lr)
    _, h, w = x.shape
    up = resample_bicubic(x, h * factor, w * factor)
    if isinstance(lr, AbundanceMap):
        return AbundanceMap(renormalize(up), normalized=True)
    return up
