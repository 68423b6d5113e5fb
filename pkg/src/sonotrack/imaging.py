"""Grayscale image primitives.

Images are 2-D ``float64`` arrays (rows x cols) holding intensities on the
0..255 scale.  Values are only rounded and clamped when written to disk.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DomainError, FormatError
from .geometry import BBox


def as_image(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise DomainError(f"expected a single-channel 2-D image, got shape {arr.shape}")
    return arr


def default_ksize(sigma: float) -> int:
    return 2 * math.ceil(3.0 * sigma) + 1


def gaussian_taps(sigma: float, ksize: int) -> np.ndarray:
    """Normalized 1-D Gaussian sampled at integer offsets from the center."""
    r = ksize // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def gaussian_blur(img, sigma: float, ksize: int | None = None) -> np.ndarray:
    """Isotropic Gaussian blur with edge replication at the border.

    The normalized 2-D kernel factors exactly into two normalized 1-D passes.
    """
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    if ksize is None:
        ksize = default_ksize(sigma)
    if ksize < 3 or ksize % 2 == 0:
        raise ConfigError(f"ksize must be an odd integer >= 3, got {ksize}")
    img = as_image(img)
    g = gaussian_taps(sigma, ksize)
    out = ndimage.correlate1d(img, g, axis=0, mode="nearest")
    return ndimage.correlate1d(out, g, axis=1, mode="nearest")


def high_freq_enhance(img, sigma: float = 2.0, ksize: int | None = None, gain: float = 2.0) -> np.ndarray:
    """Boost the high-frequency residual: ``img + gain * (img - blur(img))``.

    ``gain=2`` adds the high-frequency image twice.  Output is clamped to [0, 255].
    """
    if gain < 0:
        raise ConfigError(f"gain must be >= 0, got {gain}")
    img = as_image(img)
    if gain == 0:
        return img.copy()
    high = img - gaussian_blur(img, sigma, ksize)
    return np.clip(img + gain * high, 0.0, 255.0)


def binarize(img, thres: float) -> np.ndarray:
    """Foreground (255) where ``pixel >= thres``, background (0) elsewhere."""
    img = as_image(img)
    return np.where(img >= thres, 255.0, 0.0)


@dataclass(frozen=True)
class CropTransform:
    """Affine map between frame pixels and crop pixels: ``crop = (frame - offset) * scale``."""

    scale: float
    offset_x: float
    offset_y: float

    def to_crop(self, box: BBox) -> BBox:
        return BBox((box.x - self.offset_x) * self.scale, (box.y - self.offset_y) * self.scale,
                    box.w * self.scale, box.h * self.scale)

    def to_frame(self, box: BBox) -> BBox:
        return BBox(box.x / self.scale + self.offset_x, box.y / self.scale + self.offset_y,
                    box.w / self.scale, box.h / self.scale)

    def point_to_frame(self, x: float, y: float) -> tuple[float, float]:
        return x / self.scale + self.offset_x, y / self.scale + self.offset_y


def crop_resize(img, box: BBox, context_factor: float, out_size: int,
                center: tuple[float, float] | None = None) -> tuple[np.ndarray, CropTransform]:
    """Square crop of side ``context_factor * sqrt(w*h)`` around the box, resized bilinearly.

    Area outside the frame reads as 0.  ``center`` overrides the crop center
    (defaults to the box center).
    """
    if box.is_absent():
        raise DomainError("cannot crop around the absent box")
    if context_factor <= 0:
        raise ConfigError(f"context_factor must be positive, got {context_factor}")
    if box.w * box.h <= 0:
        raise DomainError(f"degenerate box {box.as_tuple()}")
    img = as_image(img)
    side = context_factor * math.sqrt(box.w * box.h)
    cx, cy = (box.cx, box.cy) if center is None else center
    tf = CropTransform(out_size / side, cx - side / 2.0, cy - side / 2.0)
    # frame-space coordinates of output pixel centers, shifted to array index space
    u = (np.arange(out_size) + 0.5) / tf.scale
    cols = u + tf.offset_x - 0.5
    rows = u + tf.offset_y - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    patch = ndimage.map_coordinates(img, [rr, cc], order=1, mode="constant", cval=0.0)
    return patch, tf


def _pixel_span(lo: float, hi: float, n: int) -> tuple[int, int]:
    # pixels k with center k + 0.5 in [lo, hi)
    a = max(math.ceil(lo - 0.5), 0)
    b = min(math.ceil(hi - 0.5), n)
    return a, b


def mean_in_box(mask, box: BBox) -> float:
    """Foreground fraction (mask / 255) over pixels whose centers lie in ``box``."""
    mask = as_image(mask)
    r0, r1 = _pixel_span(box.y, box.y2, mask.shape[0])
    c0, c1 = _pixel_span(box.x, box.x2, mask.shape[1])
    if r1 <= r0 or c1 <= c0:
        return 0.0
    return float(mask[r0:r1, c0:c1].mean() / 255.0)


def block_mean(img, factor: int) -> np.ndarray:
    """Downscale by an integer factor with non-overlapping block averages."""
    img = as_image(img)
    h, w = img.shape
    if h % factor or w % factor:
        raise DomainError(f"image {h}x{w} not divisible by {factor}")
    return img.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def quantize(img) -> np.ndarray:
    return np.clip(np.rint(as_image(img)), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# file I/O

def _read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: only binary PGM (P5) is supported")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{path}: malformed PGM header {tokens!r}") from None
    if maxval != 255:
        raise FormatError(f"{path}: expected maxval 255, got {maxval}")
    if len(data) - pos < w * h:
        raise FormatError(f"{path}: PGM raster has {len(data) - pos} bytes, expected {w * h}")
    raster = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    return raster.reshape(h, w).astype(np.float64)


def _write_pgm(path, pixels: np.ndarray) -> None:
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_image(path) -> np.ndarray:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".pgm":
        return _read_pgm(path)
    from PIL import Image

    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"), dtype=np.float64)
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_image(path, img) -> None:
    pixels = quantize(img)
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".pgm":
        _write_pgm(path, pixels)
        return
    from PIL import Image

    Image.fromarray(pixels).save(path)
