"""Image buffers, the three photometric distortion operators, and image I/O.

All pixel arithmetic happens in float64, is clamped to [0, 255] and then
rounded half-away-from-zero back to 8-bit.  Grayscale values are kept as
reals internally so that the contrast operator's mean is not quantized.
"""

from __future__ import annotations

from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

STATE_SIZE = 128
# Sanity cap on width*height*3 for decoded files (512 MiB of pixel data).
_MAX_PIXEL_BYTES = 512 * 1024 * 1024


class ImageFormatError(ValueError):
    """Unreadable, truncated or unsupported image file."""


class ImageBuffer:
    """Owned RGB8 raster stored row-major as an (height, width, 3) uint8 array."""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.asarray(pixels)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) pixel array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            raise ValueError(f"expected uint8 channels, got dtype {arr.dtype}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must contain at least one pixel")
        self.pixels = np.ascontiguousarray(arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def filled(cls, width: int, height: int, color) -> "ImageBuffer":
        """Constant-color image; `color` is an RGB triple of 0-255 ints."""
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[:, :] = np.asarray(color, dtype=np.uint8)
        return cls(arr)

    def copy(self) -> "ImageBuffer":
        return ImageBuffer(self.pixels.copy())

    def tobytes(self) -> bytes:
        """Row-major RGB8 bytes."""
        return self.pixels.tobytes()

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def __repr__(self) -> str:
        return f"ImageBuffer({self.width}x{self.height})"


class DistortionKind(Enum):
    """The three supported photometric distortions."""

    BRIGHTNESS = "brightness"
    COLOR = "color"
    CONTRAST = "contrast"


class DistortionScale(Enum):
    """Severity regime the random distortion factor is drawn from.

    FULL covers [0, 2]; MINOR covers [0.5, 1.8], the sub-range whose
    distortions the agent can undo within its own action range.
    """

    FULL = "full"
    MINOR = "minor"

    @property
    def bounds(self) -> tuple[float, float]:
        return (0.0, 2.0) if self is DistortionScale.FULL else (0.5, 1.8)

    @property
    def grid(self) -> tuple[float, ...]:
        """The 0.1-step factor set for this scale (20 values full, 14 minor)."""
        if self is DistortionScale.FULL:
            return tuple(i / 10 for i in range(1, 21))
        return tuple(i / 10 for i in range(5, 19))


class FactorMode(Enum):
    """How random distortion factors are drawn."""

    DISCRETE_GRID = "discrete_grid"
    CONTINUOUS_UNIFORM = "continuous_uniform"


def _check_factor(factor: float) -> float:
    factor = float(factor)
    if not factor >= 0.0:
        raise ValueError(f"distortion factor must be >= 0, got {factor}")
    return factor


def _quantize(values: np.ndarray) -> np.ndarray:
    """Clamp to [0, 255] then round half-away-from-zero to uint8."""
    return np.floor(np.clip(values, 0.0, 255.0) + 0.5).astype(np.uint8)


def grayscale(img: ImageBuffer) -> np.ndarray:
    """Per-pixel (R+G+B)/3 as float64, shape (height, width)."""
    return img.pixels.sum(axis=2, dtype=np.float64) / 3.0


def apply_brightness(img: ImageBuffer, factor: float) -> ImageBuffer:
    """Scale every channel by `factor`; 0 blacks the image, 1 is identity."""
    factor = _check_factor(factor)
    return ImageBuffer(_quantize(factor * img.pixels.astype(np.float64)))


def apply_color(img: ImageBuffer, factor: float) -> ImageBuffer:
    """Blend each channel with the pixel's grayscale value.

    factor 0 collapses to grayscale, 1 is identity, >1 oversaturates.
    """
    factor = _check_factor(factor)
    gray = grayscale(img)[:, :, np.newaxis]
    mixed = factor * img.pixels.astype(np.float64) + (1.0 - factor) * gray
    return ImageBuffer(_quantize(mixed))


def apply_contrast(img: ImageBuffer, factor: float) -> ImageBuffer:
    """Blend each channel with the image-wide mean grayscale intensity.

    factor 0 flattens to a constant image, 1 is identity, >1 stretches
    pixel values away from the mean.
    """
    factor = _check_factor(factor)
    mean_gray = float(grayscale(img).mean())
    mixed = factor * img.pixels.astype(np.float64) + (1.0 - factor) * mean_gray
    return ImageBuffer(_quantize(mixed))


_OPERATORS = {
    DistortionKind.BRIGHTNESS: apply_brightness,
    DistortionKind.COLOR: apply_color,
    DistortionKind.CONTRAST: apply_contrast,
}


def apply_distortion(img: ImageBuffer, kind: DistortionKind, factor: float) -> ImageBuffer:
    """Dispatch to the operator for `kind`."""
    return _OPERATORS[DistortionKind(kind)](img, factor)


def sample_factor(
    scale: DistortionScale, mode: FactorMode, rng: np.random.Generator
) -> float:
    """Draw a random distortion factor for `scale`.

    DISCRETE_GRID picks uniformly from the 0.1-step set; CONTINUOUS_UNIFORM
    draws uniformly from the scale's closed range.
    """
    if mode is FactorMode.DISCRETE_GRID:
        grid = scale.grid
        return grid[int(rng.integers(len(grid)))]
    lo, hi = scale.bounds
    return float(rng.uniform(lo, hi))


def resize_bilinear(img: ImageBuffer, out_width: int, out_height: int) -> ImageBuffer:
    """Bilinear resample with pixel-center alignment and edge clamping."""
    if out_width < 1 or out_height < 1:
        raise ValueError("output dimensions must be >= 1")
    if (img.width, img.height) == (out_width, out_height):
        return img.copy()

    src = img.pixels.astype(np.float64)
    h, w = src.shape[:2]
    xs = (np.arange(out_width, dtype=np.float64) + 0.5) * (w / out_width) - 0.5
    ys = (np.arange(out_height, dtype=np.float64) + 0.5) * (h / out_height) - 0.5

    x0f = np.floor(xs)
    y0f = np.floor(ys)
    tx = xs - x0f
    ty = ys - y0f
    x0 = np.clip(x0f.astype(np.int64), 0, w - 1)
    x1 = np.clip(x0f.astype(np.int64) + 1, 0, w - 1)
    y0 = np.clip(y0f.astype(np.int64), 0, h - 1)
    y1 = np.clip(y0f.astype(np.int64) + 1, 0, h - 1)

    p00 = src[y0][:, x0]
    p01 = src[y0][:, x1]
    p10 = src[y1][:, x0]
    p11 = src[y1][:, x1]

    tx = tx[np.newaxis, :, np.newaxis]
    ty = ty[:, np.newaxis, np.newaxis]
    top = p00 * (1.0 - tx) + p01 * tx
    bottom = p10 * (1.0 - tx) + p11 * tx
    value = top * (1.0 - ty) + bottom * ty
    return ImageBuffer(_quantize(value))


def resize_to_state(img: ImageBuffer, size: int = STATE_SIZE) -> ImageBuffer:
    """Resize to the square observation raster; a `size`x`size` input passes
    through byte-identical."""
    return resize_bilinear(img, size, size)


def _load_ppm(data: bytes) -> ImageBuffer:
    pos = 0

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PPM header")
        return data[start:pos]

    if next_token() != b"P6":
        raise ImageFormatError("not a binary PPM (P6) file")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise ImageFormatError("malformed PPM header") from exc
    if width < 1 or height < 1:
        raise ImageFormatError("PPM dimensions must be positive")
    if width * height * 3 > _MAX_PIXEL_BYTES:
        raise ImageFormatError(f"PPM dimensions overflow: {width}x{height}")
    if maxval != 255:
        raise ImageFormatError(f"unsupported PPM maxval {maxval} (need 255)")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos : pos + width * height * 3]
    if len(raster) != width * height * 3:
        raise ImageFormatError("truncated PPM raster")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return ImageBuffer(arr.copy())


def _save_ppm(img: ImageBuffer, path: Path) -> None:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    path.write_bytes(header + img.tobytes())


def load_image(path) -> ImageBuffer:
    """Load a PNG or binary PPM (P6) file; round-trips save_image losslessly."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] == b"P6":
        return _load_ppm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        try:
            with Image.open(path) as im:
                im = im.convert("RGB")
                if im.width * im.height * 3 > _MAX_PIXEL_BYTES:
                    raise ImageFormatError(
                        f"PNG dimensions overflow: {im.width}x{im.height}"
                    )
                arr = np.asarray(im, dtype=np.uint8)
        except (UnidentifiedImageError, OSError, SyntaxError) as exc:
            raise ImageFormatError(f"unreadable PNG file {path}: {exc}") from exc
        return ImageBuffer(arr)
    raise ImageFormatError(f"unsupported image format in {path}")


def save_image(img: ImageBuffer, path) -> None:
    """Write PNG or PPM depending on the file extension."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        _save_ppm(img, path)
    elif suffix == ".png":
        Image.fromarray(img.pixels, mode="RGB").save(path, format="PNG")
    else:
        raise ImageFormatError(f"unsupported output format {suffix!r}")
