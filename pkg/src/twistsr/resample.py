"""Separable bicubic (cubic convolution) resampling and the bicubic degradation model."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .imagecore import Image

CATMULL_ROM = -0.5


class DivisibilityError(ValueError):
    pass


@dataclass(frozen=True)
class ResizeSpec:
    out_height: int
    out_width: int
    kernel_a: float = CATMULL_ROM

    def __post_init__(self):
        if self.out_height < 2 or self.out_width < 2:
            raise ValueError(f"output size must be >= 2x2, got {self.out_width}x{self.out_height}")


def cubic_kernel(t, a: float = CATMULL_ROM):
    """Keys cubic convolution kernel."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    t2, t3 = t * t, t * t * t
    near = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0
    far = a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a
    return np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))


@lru_cache(maxsize=64)
def _weight_matrix(n_in: int, n_out: int, a: float) -> np.ndarray:
    """(n_out, n_in) interpolation matrix with half-pixel centers and edge clamping."""
    dst = np.arange(n_out, dtype=np.float64)
    src = (dst + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src).astype(np.int64)
    mat = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for offset in (-1, 0, 1, 2):
        tap = base + offset
        w = cubic_kernel(src - tap, a)
        np.add.at(mat, (rows, np.clip(tap, 0, n_in - 1)), w)
    mat.setflags(write=False)
    return mat


def bicubic_resize(plane, spec: ResizeSpec) -> np.ndarray:
    """Resize the trailing two axes of `plane` to (out_height, out_width)."""
    p = np.asarray(plane, dtype=np.float64)
    h, w = p.shape[-2:]
    if h < 2 or w < 2:
        raise ValueError(f"input plane must be at least 2x2, got {w}x{h}")
    wy = _weight_matrix(h, spec.out_height, float(spec.kernel_a))
    wx = _weight_matrix(w, spec.out_width, float(spec.kernel_a))
    # rows pass, then columns pass
    out = p @ wx.T
    return wy @ out


def resize_image(img: Image, out_height: int, out_width: int, kernel_a: float = CATMULL_ROM) -> Image:
    return Image(bicubic_resize(img.data, ResizeSpec(out_height, out_width, kernel_a)))


def upscale(img: Image, s: int) -> Image:
    return resize_image(img, img.height * s, img.width * s)


def degrade(hr: Image, s: int) -> Image:
    """Bicubic downsampling by an integer factor, channel by channel."""
    if s not in (2, 3, 4):
        raise ValueError(f"scale must be 2, 3 or 4, got {s}")
    if hr.height % (2 * s) or hr.width % (2 * s):
        raise DivisibilityError(
            f"HR dimensions {hr.width}x{hr.height} must be divisible by {2 * s} for scale {s}"
        )
    return resize_image(hr, hr.height // s, hr.width // s)
