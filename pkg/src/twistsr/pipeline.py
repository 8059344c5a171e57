"""Decompose -> predict -> reconstruct super-resolution chain and non-learned baselines.

Multichannel images are processed one channel at a time with the same
network; channels ride along the batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from . import wavelet
from .imagecore import Image
from .nn import GeneratorConfig, ParameterStore, Tensor, generator_forward, no_grad
from .resample import ResizeSpec, bicubic_resize
from .wavelet import SubbandSet

if TYPE_CHECKING:
    from .training.checkpoint import Checkpoint


class ScaleMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NetworkInput:
    """Generator input of shape (channels, 4, h, w).

    Band 0 is the LL replacement (the LR plane itself at scale 2), bands
    1-3 are the LH, HL, HH subbands of the bicubic-upscaled LR image.
    """

    planes: np.ndarray
    scale: int
    source_id: str = ""

    def __post_init__(self):
        if self.planes.ndim != 4 or self.planes.shape[1] != 4:
            raise ValueError(f"network input must be (C, 4, h, w), got {self.planes.shape}")

    @property
    def band_shape(self) -> tuple[int, int]:
        return self.planes.shape[2:]


def decompose_planes(lr: np.ndarray, s: int) -> np.ndarray:
    """(..., h, w) LR planes -> (..., 4, s*h/2, s*w/2) network input."""
    lr = np.asarray(lr, dtype=np.float64)
    h, w = lr.shape[-2:]
    if (s * h) % 2 or (s * w) % 2:
        raise ValueError(f"LR size {w}x{h} times scale {s} must be even in both dimensions")
    upscaled = bicubic_resize(lr, ResizeSpec(s * h, s * w))
    bands = wavelet.dwt2d(upscaled)
    if s == 2:
        ll = lr.copy()
    else:
        ll = bicubic_resize(lr, ResizeSpec(s * h // 2, s * w // 2))
    return np.stack([ll, bands.lh, bands.hl, bands.hh], axis=-3)


def decompose(lr: Image, s: int, source_id: str = "") -> NetworkInput:
    return NetworkInput(decompose_planes(lr.data, s), s, source_id)


def _as_float64(params: ParameterStore) -> ParameterStore:
    first = next(iter(params.items()))[1]
    return params if first.data.dtype == np.float64 else params.astype(np.float64)


def predict_planes(planes: np.ndarray, config: GeneratorConfig, params: ParameterStore) -> np.ndarray:
    """Run the generator in float64 without recording gradients."""
    with no_grad():
        out = generator_forward(Tensor(np.asarray(planes, dtype=np.float64)), config, _as_float64(params))
    return out.data


def predict(inp: NetworkInput, model: "Checkpoint") -> SubbandSet:
    if model.config.in_channels != inp.planes.shape[1]:
        raise ValueError(
            f"model expects {model.config.in_channels} input channels, got {inp.planes.shape[1]}"
        )
    out = predict_planes(inp.planes, model.config, model.params)
    return SubbandSet.from_stack(out, axis=1)


def reconstruct(bands: SubbandSet) -> Image:
    """Inverse DWT per channel; values are not clamped."""
    return Image(wavelet.idwt2d(bands))


def super_resolve(lr: Image, model: "Checkpoint", s: int) -> Image:
    trained_scale = model.provenance.get("scale")
    if trained_scale is not None and int(trained_scale) != s:
        raise ScaleMismatchError(f"checkpoint was trained for scale {trained_scale}, requested {s}")
    return reconstruct(predict(decompose(lr, s), model))


def baseline_bicubic(lr: Image, s: int) -> Image:
    return Image(bicubic_resize(lr.data, ResizeSpec(lr.height * s, lr.width * s)))


def baseline_dwt_sr(lr: Image, s: int) -> Image:
    """Upscale each subband of the LR image bicubically by s, then invert."""
    if lr.height % 2 or lr.width % 2:
        raise ValueError(f"DWT baseline needs even LR dimensions, got {lr.width}x{lr.height}")
    bands = wavelet.dwt2d(lr.data)
    h, w = bands.shape[-2:]
    spec = ResizeSpec(h * s, w * s)
    up = SubbandSet(*(bicubic_resize(b, spec) for b in bands))
    return Image(wavelet.idwt2d(up))
