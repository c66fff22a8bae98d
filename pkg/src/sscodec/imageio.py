"""8-bit RGB image files: binary PPM always, PNG when Pillow is installed."""

from __future__ import annotations

import os
import re
from pathlib import Path

import numpy as np

_PPM_HEADER = re.compile(rb"P6\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


class ImageFormatError(ValueError):
    pass


def _png_available() -> bool:
    try:
        import PIL  # noqa: F401
    except ImportError:
        return False
    return True


def decode_ppm(data: bytes) -> np.ndarray:
    """Parse a binary P6 file into uint8 (H, W, 3)."""
    m = _PPM_HEADER.match(data)
    if m is None:
        raise ImageFormatError("not a binary PPM (P6) image")
    width, height, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ImageFormatError(f"only 8-bit PPM is supported (maxval {maxval})")
    if width == 0 or height == 0:
        raise ImageFormatError("PPM has zero width or height")
    body = data[m.end() :]
    need = width * height * 3
    if len(body) < need:
        raise ImageFormatError(f"PPM body holds {len(body)} bytes, expected {need}")
    return np.frombuffer(body[:need], np.uint8).reshape(height, width, 3).copy()


def encode_ppm(pixels: np.ndarray) -> bytes:
    pixels = np.ascontiguousarray(pixels, np.uint8)
    h, w, c = pixels.shape
    if c != 3:
        raise ImageFormatError(f"expected 3 channels, got {c}")
    return f"P6\n{w} {h}\n255\n".encode() + pixels.tobytes()


def to_tensor(pixels: np.ndarray) -> np.ndarray:
    """uint8 (H, W, 3) -> float32 (1, 3, H, W) in [0, 1]."""
    return (np.asarray(pixels, np.float32) / 255.0).transpose(2, 0, 1)[None].copy()


def to_pixels(x: np.ndarray) -> np.ndarray:
    """(1, 3, H, W) in [0, 1] -> uint8 (H, W, 3), rounding to nearest."""
    x = np.asarray(x, np.float64)
    if x.ndim == 4:
        x = x[0]
    return np.clip(np.rint(x * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0).copy()


def read_image(path: str | os.PathLike) -> np.ndarray:
    """Load an image as a float32 (1, 3, H, W) tensor."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] == b"P6":
        return to_tensor(decode_ppm(data))
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        if not _png_available():
            raise ImageFormatError("PNG support needs Pillow (install the 'png' extra)")
        from PIL import Image

        with Image.open(path) as im:
            return to_tensor(np.asarray(im.convert("RGB")))
    raise ImageFormatError(f"{path}: unsupported image format (expected PPM or PNG)")


def write_image(path: str | os.PathLike, x: np.ndarray) -> None:
    """Save a (1, 3, H, W) tensor; the suffix picks PPM or PNG."""
    path = Path(path)
    pixels = to_pixels(x)
    if path.suffix.lower() == ".png":
        if not _png_available():
            raise ImageFormatError("PNG support needs Pillow (install the 'png' extra)")
        from PIL import Image

        Image.fromarray(pixels, "RGB").save(path, format="PNG")
    else:
        path.write_bytes(encode_ppm(pixels))


IMAGE_SUFFIXES = (".ppm", ".png")
