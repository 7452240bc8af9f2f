"""Image files: lossless PNG for watermarked output, byte sizes for the bench."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp")


def read_image(path) -> np.ndarray:
    """Read any PIL-supported file as an HxWx3 uint8 RGB array."""
    with Image.open(path) as im:
        return np.array(im.convert("RGB"))


def png_bytes(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img)).save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()


def write_png(path, img: np.ndarray) -> int:
    """Write ``img`` as PNG and return the file size in bytes."""
    data = png_bytes(img)
    Path(path).write_bytes(data)
    return len(data)


def write_mask(path, mask: np.ndarray) -> None:
    """Store a detection mask as a 1-bit PNG."""
    Image.fromarray(np.asarray(mask).astype(bool)).convert("1").save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im.convert("1"), dtype=bool)


def list_images(directory) -> list[Path]:
    directory = Path(directory)
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
