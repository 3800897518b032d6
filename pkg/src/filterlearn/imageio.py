"""Image loading, patch extraction, resizing and noise injection.

Images are ``(height, width, 3)`` float64 arrays with intensities in
``[0, 1]``. Patch matrices are ``(d, n)`` arrays whose columns are flattened
``side x side x 3`` windows.

Flattening order is channel-major, then row-major within a channel::

    index = c * side * side + y * side + x

Serialized filter sets depend on this order; it must never change.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ImageFormatError(ValueError):
    """Raised when an image file has a malformed or unsupported header."""


def as_rng(rng=None) -> np.random.Generator:
    """Accept a seed, ``None`` or an existing Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def check_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {img.shape}")
    return img


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError("truncated PPM header")
    return data[start:pos], pos


def decode_ppm(data: bytes) -> np.ndarray:
    """Decode a binary P6 byte string into a ``[0, 1]`` float image."""
    if data[:2] != b"P6":
        raise ImageFormatError("not a binary PPM (P6) file")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise ImageFormatError(f"bad PPM header field {tok!r}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ImageFormatError(f"bad PPM dimensions {width}x{height}")
    if maxval != 255:
        raise ImageFormatError(f"unsupported PPM maxval {maxval} (only 255)")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ImageFormatError("missing whitespace after PPM header")
    pos += 1
    size = width * height * 3
    raster = data[pos:pos + size]
    if len(raster) != size:
        raise ImageFormatError(f"PPM raster has {len(raster)} bytes, expected {size}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return pixels.astype(np.float64) / 255.0


def encode_ppm(img) -> bytes:
    img = check_image(img)
    h, w, _ = img.shape
    pixels = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    return b"P6\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def load_image(path) -> np.ndarray:
    """Load an RGB image as float64 in ``[0, 1]``.

    Binary PPM (P6) is decoded natively. Other formats (PNG, BMP) go through
    Pillow and are converted to RGB.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"P6":
        return decode_ppm(data)
    if data[:1] == b"P":
        raise ImageFormatError(f"{path}: only binary P6 PPM files are supported")
    try:
        from PIL import Image, UnidentifiedImageError
    except ImportError:  # pragma: no cover
        raise ImageFormatError(f"{path}: not a PPM file and Pillow is unavailable") from None
    import io
    try:
        with Image.open(io.BytesIO(data)) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: unrecognized image format") from exc
    return arr / 255.0


def save_image(path, img) -> None:
    """Write ``img`` as a binary PPM (P6, maxval 255)."""
    data = encode_ppm(img)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _box_weights(src: int, dst: int) -> np.ndarray:
    # Row i averages source interval [i*src/dst, (i+1)*src/dst) by overlap length.
    edges = np.arange(dst + 1) * (src / dst)
    lo = edges[:-1, None]
    hi = edges[1:, None]
    j = np.arange(src)[None, :]
    overlap = np.clip(np.minimum(hi, j + 1) - np.maximum(lo, j), 0.0, None)
    return overlap / overlap.sum(axis=1, keepdims=True)


def resize_box(img, w: int, h: int) -> np.ndarray:
    """Area-weighted (box filter) resize to ``w x h``."""
    if w < 1 or h < 1:
        raise ValueError(f"target size must be positive, got {w}x{h}")
    img = check_image(img)
    src_h, src_w, _ = img.shape
    if (src_h, src_w) == (h, w):
        return img.copy()
    wy = _box_weights(src_h, h)
    wx = _box_weights(src_w, w)
    rows = np.tensordot(wy, img, axes=(1, 0))  # (h, src_w, 3)
    return np.tensordot(rows, wx, axes=(1, 1)).transpose(0, 2, 1)


def flatten_patch(window) -> np.ndarray:
    """``(side, side, 3)`` window -> channel-major flat vector."""
    return np.asarray(window, dtype=np.float64).transpose(2, 0, 1).ravel()


def unflatten_patch(vec, side: int) -> np.ndarray:
    return np.asarray(vec, dtype=np.float64).reshape(3, side, side).transpose(1, 2, 0)


def _windows(img: np.ndarray, side: int) -> np.ndarray:
    # (H-side+1, W-side+1, 3, side, side) view; channel-major last three axes.
    return sliding_window_view(img, (side, side), axis=(0, 1))


def sample_random_patches(img, count: int, side: int, rng=None) -> np.ndarray:
    """Draw ``count`` windows uniformly at random from positions fully inside ``img``."""
    img = check_image(img)
    if count < 1:
        raise ValueError("count must be >= 1")
    h, w, _ = img.shape
    if h < side or w < side:
        raise ValueError(f"image {w}x{h} is smaller than patch side {side}")
    rng = as_rng(rng)
    ys = rng.integers(0, h - side + 1, size=count)
    xs = rng.integers(0, w - side + 1, size=count)
    win = _windows(img, side)[ys, xs]  # (count, 3, side, side)
    return win.reshape(count, -1).T.copy()


def crop_to_multiple(img, side: int) -> np.ndarray:
    """Drop the right/bottom remainder so both dimensions are multiples of ``side``."""
    img = check_image(img)
    h, w, _ = img.shape
    return img[: h - h % side, : w - w % side]


def extract_grid_patches(img, side: int) -> np.ndarray:
    """Non-overlapping tiles, row-major (left-to-right, then top-to-bottom)."""
    img = check_image(img)
    h, w, _ = img.shape
    if h % side or w % side or h == 0 or w == 0:
        raise ValueError(f"image {w}x{h} is not a multiple of patch side {side}")
    rows, cols = h // side, w // side
    tiles = img.reshape(rows, side, cols, side, 3).transpose(0, 2, 4, 1, 3)
    return tiles.reshape(rows * cols, -1).T.copy()


def add_gaussian_noise(img, sigma: float, rng=None) -> np.ndarray:
    """Add zero-mean Gaussian noise; ``sigma`` is on the 0-255 scale. Result clamped to [0, 1]."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    img = check_image(img)
    if sigma == 0:
        return img.copy()
    noise = as_rng(rng).normal(0.0, sigma, size=img.shape) / 255.0
    return np.clip(img + noise, 0.0, 1.0)
