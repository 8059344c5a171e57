"""Image container, 8-bit PGM/PNG I/O, luminance and patch sampling.

Images are channel-planar float64 arrays of shape (channels, height, width)
holding samples in the nominal range [0, 255].
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from PIL import Image as PILImage

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
BT601 = (0.299, 0.587, 0.114)


class ImageFormatError(ValueError):
    """Raised for unreadable or unsupported image files."""


@dataclass(frozen=True, eq=False)
class Image:
    """Channel-planar raster with shape (channels, height, width)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3:
            raise ValueError(f"image data must be (C, H, W), got shape {data.shape}")
        if data.shape[0] not in (1, 3):
            raise ValueError(f"unsupported channel count {data.shape[0]}")
        if data.shape[1] < 2 or data.shape[2] < 2:
            raise ValueError(f"image must be at least 2x2, got {data.shape[2]}x{data.shape[1]}")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def plane(self, c: int = 0) -> np.ndarray:
        return self.data[c]

    def __repr__(self):
        return f"Image(w={self.width}, h={self.height}, c={self.channels})"


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def _read_pgm(raw: bytes, path) -> np.ndarray:
    # header: magic, width, height, maxval; '#' starts a comment
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(raw):
            raise ImageFormatError(f"{path}: truncated PGM header")
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace before the raster
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ImageFormatError(f"{path}: malformed PGM header") from None
    if maxval > 255:
        raise ImageFormatError(f"{path}: unsupported bit depth 16")
    if maxval < 1:
        raise ImageFormatError(f"{path}: invalid PGM maxval {maxval}")
    body = raw[pos:pos + width * height]
    if len(body) != width * height:
        raise ImageFormatError(f"{path}: truncated PGM raster")
    return np.frombuffer(body, dtype=np.uint8).reshape(1, height, width)


def _read_png(raw: bytes, path) -> np.ndarray:
    if len(raw) < 33 or raw[12:16] != b"IHDR":
        raise ImageFormatError(f"{path}: corrupt PNG header")
    bit_depth, color_type = raw[24], raw[25]
    if bit_depth != 8:
        raise ImageFormatError(f"{path}: unsupported bit depth {bit_depth}")
    if color_type not in (0, 2):
        raise ImageFormatError(f"{path}: unsupported color type {color_type}")
    try:
        with PILImage.open(path) as im:
            arr = np.asarray(im)
    except OSError as exc:
        raise ImageFormatError(f"{path}: {exc}") from exc
    if arr.ndim == 2:
        return arr[None]
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def load_image(path: str | os.PathLike) -> Image:
    """Load an 8-bit binary PGM (P5) or 8-bit grayscale/RGB PNG."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc.strerror}") from exc
    if raw.startswith(PNG_SIGNATURE):
        arr = _read_png(raw, path)
    elif raw[:2] == b"P5":
        arr = _read_pgm(raw, path)
    else:
        raise ImageFormatError(f"{path}: not an 8-bit PGM or PNG file")
    return Image(arr.astype(np.float64))


def quantize(data: np.ndarray) -> np.ndarray:
    """Clamp to [0, 255] and round half away from zero to uint8."""
    clamped = np.clip(np.asarray(data, dtype=np.float64), 0.0, 255.0)
    return np.floor(clamped + 0.5).astype(np.uint8)


def atomic_write(path: str | os.PathLike, payload: bytes) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_image(img: Image, fmt: Literal["png", "pgm"] = "png") -> bytes:
    pixels = quantize(img.data)
    if fmt == "pgm":
        if img.channels != 1:
            raise ValueError("PGM output requires a 1-channel image")
        header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
        return header + pixels[0].tobytes()
    import io

    if img.channels == 1:
        pil = PILImage.fromarray(pixels[0], mode="L")
    else:
        pil = PILImage.fromarray(np.ascontiguousarray(pixels.transpose(1, 2, 0)), mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def save_image(img: Image, path: str | os.PathLike) -> None:
    """Save as PGM when the suffix is .pgm, otherwise PNG.

    Values are clamped to [0, 255] and rounded half away from zero.
    """
    fmt = "pgm" if str(path).lower().endswith(".pgm") else "png"
    payload = encode_image(img, fmt)
    try:
        atomic_write(path, payload)
    except OSError as exc:
        raise ImageFormatError(f"cannot write {path}: {exc.strerror}") from exc


# ---------------------------------------------------------------------------
# Color and patches
# ---------------------------------------------------------------------------

def to_luminance(img: Image) -> Image:
    """BT.601 luma for RGB input; 1-channel images pass through unchanged."""
    if img.channels == 1:
        return img
    if img.channels != 3:
        raise ValueError(f"unsupported channel count {img.channels}")
    r, g, b = img.data
    return Image(BT601[0] * r + BT601[1] * g + BT601[2] * b)


@dataclass(frozen=True)
class PatchSpec:
    patch_size: int
    count: int
    seed: int = 0
    mode: Literal["grid", "uniform-random"] = "uniform-random"

    def validate(self, img: Image) -> None:
        if self.patch_size < 2:
            raise ValueError(f"patch_size must be >= 2, got {self.patch_size}")
        if self.patch_size > min(img.width, img.height):
            raise ValueError(
                f"patch_size {self.patch_size} exceeds image dimensions {img.width}x{img.height}"
            )
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if self.mode not in ("grid", "uniform-random"):
            raise ValueError(f"unknown patch mode {self.mode!r}")


def patch_corners(img: Image, spec: PatchSpec) -> list[tuple[int, int]]:
    """Top-left (row, col) corners of the patches `extract_patches` returns."""
    spec.validate(img)
    p = spec.patch_size
    if spec.mode == "grid":
        corners = [(y, x) for y in range(0, img.height - p + 1, p)
                   for x in range(0, img.width - p + 1, p)]
        if spec.count > len(corners):
            raise ValueError(f"grid holds {len(corners)} patches, {spec.count} requested")
        return corners[:spec.count]
    rng = np.random.default_rng(spec.seed)
    ys = rng.integers(0, img.height - p + 1, size=spec.count)
    xs = rng.integers(0, img.width - p + 1, size=spec.count)
    return [(int(y), int(x)) for y, x in zip(ys, xs)]


def extract_patches(img: Image, spec: PatchSpec) -> list[Image]:
    p = spec.patch_size
    return [Image(img.data[:, y:y + p, x:x + p]) for y, x in patch_corners(img, spec)]


def center_crop(img: Image, height: int, width: int) -> Image:
    if height > img.height or width > img.width:
        raise ValueError("crop larger than image")
    y0 = (img.height - height) // 2
    x0 = (img.width - width) // 2
    return Image(img.data[:, y0:y0 + height, x0:x0 + width])


def crop_to_multiple(img: Image, multiple: int) -> Image:
    """Center-crop so both dimensions are divisible by `multiple`."""
    return center_crop(img, img.height - img.height % multiple, img.width - img.width % multiple)


def stack_images(images: Sequence[Image]) -> np.ndarray:
    return np.stack([im.data for im in images])
