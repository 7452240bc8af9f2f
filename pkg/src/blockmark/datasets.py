"""Synthetic natural-looking covers for tests, demos and benches."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def synthetic_cover(seed: int, height: int = 512, width: int = 512) -> np.ndarray:
    """Colour image with a 1/f power spectrum, a few hard-edged shapes and sensor noise."""
    rng = np.random.default_rng(seed)
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.rfftfreq(width)[None, :]
    radius = np.sqrt(fx**2 + fy**2)
    radius[0, 0] = 1.0
    envelope = radius ** -rng.uniform(1.6, 2.2)
    envelope[0, 0] = 0.0

    def field() -> np.ndarray:
        spec = (rng.standard_normal(envelope.shape) + 1j * rng.standard_normal(envelope.shape)) * envelope
        f = np.fft.irfft2(spec, s=(height, width))
        return (f - f.mean()) / (f.std() + 1e-12)

    lum = field()
    img = np.empty((height, width, 3))
    mix = rng.uniform(0.15, 0.4)
    for c in range(3):
        img[..., c] = lum + mix * field()
    img = 128 + img * rng.uniform(35, 55) + rng.uniform(-20, 20, size=3)

    gy, gx = np.mgrid[0:height, 0:width]
    for _ in range(rng.integers(2, 6)):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        r = rng.uniform(0.05, 0.25) * min(height, width)
        inside = (gy - cy) ** 2 + (gx - cx) ** 2 < r * r
        img[inside] = img[inside] * 0.5 + rng.uniform(30, 225, size=3) * 0.5

    img += rng.normal(0, 2.0, size=img.shape)
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


def write_synthetic_dataset(directory, count: int, seed: int = 0, height: int = 512, width: int = 512) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        path = directory / f"cover_{i:04d}.png"
        Image.fromarray(synthetic_cover(seed * 100003 + i, height, width)).save(path)
        paths.append(path)
    return paths
