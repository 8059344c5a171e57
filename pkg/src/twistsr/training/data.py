"""Training-sample construction: HR patch -> degraded LR -> network input / wavelet target."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import wavelet
from ..imagecore import Image, ImageFormatError, PatchSpec, extract_patches, load_image, to_luminance
from ..pipeline import decompose_planes
from ..resample import degrade

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".pgm")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TrainingSample:
    network_input: np.ndarray   # (4, h, w)
    target: np.ndarray          # (4, h, w): dwt2d of the HR patch, LL/LH/HL/HH
    hr: np.ndarray              # (H, W)
    lr: np.ndarray              # (H/s, W/s)
    scale: int
    source: str = ""


def make_sample(hr_patch: np.ndarray, s: int, source: str = "") -> TrainingSample:
    hr_patch = np.asarray(hr_patch, dtype=np.float64)
    lr = degrade(Image(hr_patch), s).plane()
    return TrainingSample(
        network_input=decompose_planes(lr, s),
        target=wavelet.dwt2d_stacked(hr_patch),
        hr=hr_patch,
        lr=lr,
        scale=s,
        source=source,
    )


def list_images(directory: str | os.PathLike) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise DatasetError(f"not a directory: {d}")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def samples_from_images(images: Sequence[tuple[str, Image]], s: int, spec: PatchSpec,
                        luminance: bool = True) -> list[TrainingSample]:
    """Patches are drawn per image with seed `spec.seed + image index`."""
    samples = []
    for i, (name, img) in enumerate(images):
        if luminance:
            img = to_luminance(img)
        patches = extract_patches(img, replace(spec, seed=spec.seed + i))
        for j, patch in enumerate(patches):
            for c in range(patch.channels):
                tag = f"{name}#{j}" if patch.channels == 1 else f"{name}#{j}c{c}"
                samples.append(make_sample(patch.plane(c), s, tag))
    return samples


def make_dataset(hr_dir: str | os.PathLike, s: int, spec: PatchSpec,
                 luminance: bool = True) -> list[TrainingSample]:
    """Load every PNG/PGM in `hr_dir` and cut `spec.count` patches from each.

    Images smaller than the patch size are skipped with a warning.
    """
    if spec.patch_size % (2 * s):
        raise DatasetError(f"patch_size {spec.patch_size} must be divisible by {2 * s}")
    paths = list_images(hr_dir)
    if not paths:
        raise DatasetError(f"no PNG or PGM images in {hr_dir}")
    images = []
    for path in paths:
        try:
            img = load_image(path)
        except ImageFormatError as exc:
            log.warning("skipping %s: %s", path.name, exc)
            continue
        if min(img.width, img.height) < spec.patch_size:
            log.warning("skipping %s: %dx%d is smaller than patch size %d",
                        path.name, img.width, img.height, spec.patch_size)
            continue
        images.append((path.stem, img))
    if not images:
        raise DatasetError(f"every image in {hr_dir} was skipped")
    return samples_from_images(images, s, spec, luminance)


def stack_batch(samples: Sequence[TrainingSample], dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([smp.network_input for smp in samples]).astype(dtype)
    y = np.stack([smp.target for smp in samples]).astype(dtype)
    return x, y


def dataset_tag(samples: Sequence[TrainingSample]) -> str:
    import hashlib

    h = hashlib.sha256()
    for smp in samples:
        h.update(smp.source.encode())
        h.update(np.ascontiguousarray(smp.hr).tobytes())
    return h.hexdigest()[:16]
