"""Pixel-level helpers shared by the renderer, dataset and retrieval code.

Images are numpy arrays of shape (H, W, 3) with dtype uint8. Every
float-to-byte conversion here rounds half up, so the same input always
produces the same bytes regardless of platform rounding mode.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image as PilImage

from .errors import DataError, IoFailure
from .geometry import cosd, sind


def round_to_u8(values: np.ndarray) -> np.ndarray:
    """Round float pixel values half up and clip into [0, 255]."""
    return np.clip(np.floor(values + 0.5), 0.0, 255.0).astype(np.uint8)


def load_png(path: str | Path) -> np.ndarray:
    try:
        with PilImage.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except OSError as exc:
        raise IoFailure(f"cannot read image {path}: {exc}") from exc


def save_png(path: str | Path, image: np.ndarray) -> None:
    try:
        PilImage.fromarray(image, mode="RGB").save(path, format="PNG")
    except OSError as exc:
        raise IoFailure(f"cannot write image {path}: {exc}") from exc


def decode_png(data: bytes) -> np.ndarray:
    """Decode PNG (or any raster format Pillow knows) from memory."""
    try:
        with PilImage.open(io.BytesIO(data)) as img:
            return np.asarray(img.convert("RGB"))
    except Exception as exc:
        raise DataError(f"cannot decode image: {exc}") from exc


def resize(image: np.ndarray, side: int) -> np.ndarray:
    """Bilinear resize of a square image to ``side`` by ``side``.

    Resizing to the current side returns the input unchanged. Sample
    points are pixel centers mapped by the scale factor and clamped at
    the edges.
    """
    if side < 1:
        raise DataError(f"target side must be positive, got {side}")
    height, width = image.shape[:2]
    if height != width:
        raise DataError(f"resize expects a square image, got {height}x{width}")
    if side == height:
        return image
    scale = height / side
    centers = (np.arange(side) + 0.5) * scale - 0.5
    sampled = _sample_axis(_sample_axis(image.astype(np.float64), centers, axis=0), centers, axis=1)
    return round_to_u8(sampled)


def _sample_axis(image: np.ndarray, centers: np.ndarray, axis: int) -> np.ndarray:
    size = image.shape[axis]
    clamped = np.clip(centers, 0.0, size - 1.0)
    lo = np.floor(clamped).astype(np.int64)
    hi = np.minimum(lo + 1, size - 1)
    frac = clamped - lo
    take_lo = np.take(image, lo, axis=axis)
    take_hi = np.take(image, hi, axis=axis)
    shape = [1] * image.ndim
    shape[axis] = len(centers)
    frac = frac.reshape(shape)
    return take_lo * (1.0 - frac) + take_hi * frac


def warp_affine(image: np.ndarray, angle: float, shift_x: float, shift_y: float, fill: int = 128) -> np.ndarray:
    """Rotate about the image center then translate, bilinear resampled.

    ``angle`` is in degrees, positive turns the content counterclockwise
    on screen. Samples falling outside the source are filled with the
    constant ``fill``. A quarter turn of a square image lands every
    sample exactly on a pixel center, so it is a lossless permutation.
    """
    height, width = image.shape[:2]
    cx, cy = width / 2.0, height / 2.0
    xs = np.arange(width) + 0.5
    ys = np.arange(height) + 0.5
    grid_x, grid_y = np.meshgrid(xs, ys)
    # Invert the forward map: undo the shift, then rotate backwards.
    rel_x = grid_x - cx - shift_x
    rel_y = grid_y - cy - shift_y
    c, s = cosd(angle), sind(angle)
    src_x = c * rel_x - s * rel_y + cx
    src_y = s * rel_x + c * rel_y + cy
    return _sample_bilinear_fill(image, src_x, src_y, fill)


def _sample_bilinear_fill(image: np.ndarray, src_x: np.ndarray, src_y: np.ndarray, fill: int) -> np.ndarray:
    height, width = image.shape[:2]
    # Shift to pixel-index space where sample i sits at coordinate i.
    fx = src_x - 0.5
    fy = src_y - 0.5
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    wx = fx - x0
    wy = fy - y0
    pixels = image.astype(np.float64)
    acc = np.zeros(image.shape, dtype=np.float64)
    weight = np.zeros(image.shape[:2], dtype=np.float64)
    for dy, dx, w in (
        (0, 0, (1 - wx) * (1 - wy)),
        (0, 1, wx * (1 - wy)),
        (1, 0, (1 - wx) * wy),
        (1, 1, wx * wy),
    ):
        px = x0 + dx
        py = y0 + dy
        inside = (px >= 0) & (px < width) & (py >= 0) & (py < height)
        cpx = np.clip(px, 0, width - 1)
        cpy = np.clip(py, 0, height - 1)
        contrib = np.where(inside, w, 0.0)
        acc += pixels[cpy, cpx] * contrib[..., None]
        weight += contrib
    # Blend against the fill color where part of the footprint is outside.
    out = acc + (1.0 - weight)[..., None] * float(fill)
    return round_to_u8(out)


def center_crop_square(image: np.ndarray) -> np.ndarray:
    height, width = image.shape[:2]
    side = min(height, width)
    top = (height - side) // 2
    left = (width - side) // 2
    return image[top : top + side, left : left + side]


def to_tensor(image: np.ndarray, side: int) -> np.ndarray:
    """Image to a (3, side, side) float32 tensor scaled into [0, 1]."""
    square = center_crop_square(image)
    scaled = resize(square, side)
    return (scaled.astype(np.float32) / np.float32(255.0)).transpose(2, 0, 1)
