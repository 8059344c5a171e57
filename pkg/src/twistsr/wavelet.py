"""Single-level orthonormal Haar DWT in 1D and 2D.

The 2D transform filters along rows first (within each row), then along
columns of both intermediates. Subband names use the row filter as the
first letter and the column filter as the second.

All functions accept arrays with arbitrary leading dimensions and transform
the trailing one (1D) or two (2D) axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

INV_SQRT2 = 1.0 / 2.0 ** 0.5


@dataclass(frozen=True)
class SubbandSet:
    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray

    def __post_init__(self):
        shapes = {np.shape(b) for b in self}
        if len(shapes) != 1:
            raise ValueError(f"subband size mismatch: {sorted(shapes)}")

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter((self.ll, self.lh, self.hl, self.hh))

    @property
    def shape(self) -> tuple[int, ...]:
        return np.shape(self.ll)

    def stack(self, axis: int = -3) -> np.ndarray:
        """Stack as channels in LL, LH, HL, HH order."""
        return np.stack(tuple(self), axis=axis)

    @classmethod
    def from_stack(cls, arr: np.ndarray, axis: int = -3) -> "SubbandSet":
        arr = np.asarray(arr)
        if arr.shape[axis] != 4:
            raise ValueError(f"expected 4 subband channels on axis {axis}, got {arr.shape[axis]}")
        return cls(*np.moveaxis(arr, axis, 0))


def _analysis(x: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.moveaxis(x, axis, -1)
    even, odd = x[..., 0::2], x[..., 1::2]
    low = (even + odd) * INV_SQRT2
    high = (even - odd) * INV_SQRT2
    return np.moveaxis(low, -1, axis), np.moveaxis(high, -1, axis)


def _synthesis(low: np.ndarray, high: np.ndarray, axis: int) -> np.ndarray:
    low = np.moveaxis(low, axis, -1)
    high = np.moveaxis(high, axis, -1)
    out = np.empty(low.shape[:-1] + (2 * low.shape[-1],), dtype=np.result_type(low, high))
    out[..., 0::2] = (low + high) * INV_SQRT2
    out[..., 1::2] = (low - high) * INV_SQRT2
    return np.moveaxis(out, -1, axis)


def dwt1d(signal) -> tuple[np.ndarray, np.ndarray]:
    """Haar analysis of the last axis: returns (approx, detail)."""
    x = np.asarray(signal, dtype=np.float64)
    n = x.shape[-1]
    if n < 2 or n % 2:
        raise ValueError(f"signal length must be even and >= 2, got {n}")
    return _analysis(x, -1)


def idwt1d(approx, detail) -> np.ndarray:
    a = np.asarray(approx, dtype=np.float64)
    d = np.asarray(detail, dtype=np.float64)
    if a.shape != d.shape:
        raise ValueError(f"length mismatch: approx {a.shape} vs detail {d.shape}")
    return _synthesis(a, d, -1)


def _floating(x) -> np.ndarray:
    x = np.asarray(x)
    return x if x.dtype in (np.float32, np.float64) else x.astype(np.float64)


def dwt2d(plane) -> SubbandSet:
    """Row pass first, then column pass; float32 input stays float32."""
    p = _floating(plane)
    if p.ndim < 2:
        raise ValueError("dwt2d needs at least a 2D array")
    h, w = p.shape[-2:]
    if h % 2 or w % 2:
        raise ValueError(f"plane dimensions must be even, got {h}x{w}")
    row_low, row_high = _analysis(p, -1)
    ll, hl = _analysis(row_low, -2)
    lh, hh = _analysis(row_high, -2)
    return SubbandSet(ll=ll, lh=lh, hl=hl, hh=hh)


def idwt2d(bands: SubbandSet) -> np.ndarray:
    if not isinstance(bands, SubbandSet):
        bands = SubbandSet(*bands)
    row_low = _synthesis(bands.ll, bands.hl, -2)
    row_high = _synthesis(bands.lh, bands.hh, -2)
    return _synthesis(row_low, row_high, -1)


def dwt2d_stacked(planes: np.ndarray) -> np.ndarray:
    """(..., H, W) -> (..., 4, H/2, W/2) in LL, LH, HL, HH order."""
    return dwt2d(planes).stack(axis=-3)


def idwt2d_stacked(bands: np.ndarray) -> np.ndarray:
    """(..., 4, h, w) -> (..., 2h, 2w)."""
    return idwt2d(SubbandSet.from_stack(bands, axis=-3))
