"""Deterministic resampling used by both the attack simulator and the synchronizer.

Every warp goes through :func:`sample` so that attacking and rectifying share one
bilinear formula. Values are quantized with round-half-up, which keeps outputs
identical across platforms (no reliance on OpenCV/PIL interpolation kernels).
"""

from __future__ import annotations

import math

import numpy as np


def round_half_up(x):
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def iround(x: float) -> int:
    return int(math.floor(x + 0.5))


def to_uint8(x: np.ndarray) -> np.ndarray:
    return np.clip(round_half_up(x), 0, 255).astype(np.uint8)


def sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray, order: int = 1, fill: float = 0.0) -> np.ndarray:
    """Sample ``img`` at continuous pixel-center coordinates ``(xs, ys)``.

    Points farther than half a pixel outside the image take ``fill``; points in
    that half-pixel rim blend towards ``fill`` (bilinear) so borders stay soft.
    Returns float64 with shape ``xs.shape + img.shape[2:]``.
    """
    src = np.asarray(img, dtype=np.float64)
    h, w = src.shape[:2]
    pad = [(1, 1), (1, 1)] + [(0, 0)] * (src.ndim - 2)
    padded = np.pad(src, pad, mode="constant", constant_values=fill)
    px = xs + 1.0
    py = ys + 1.0
    outside = (px < 0) | (px > w + 1) | (py < 0) | (py > h + 1)
    px = np.clip(px, 0, w + 1)
    py = np.clip(py, 0, h + 1)
    if order == 0:
        ix = np.clip(np.floor(px + 0.5).astype(np.intp), 0, w + 1)
        iy = np.clip(np.floor(py + 0.5).astype(np.intp), 0, h + 1)
        out = padded[iy, ix]
    else:
        x0 = np.clip(np.floor(px).astype(np.intp), 0, w)
        y0 = np.clip(np.floor(py).astype(np.intp), 0, h)
        fx = px - x0
        fy = py - y0
        if src.ndim == 3:
            fx = fx[..., None]
            fy = fy[..., None]
        top = padded[y0, x0] * (1 - fx) + padded[y0, x0 + 1] * fx
        bot = padded[y0 + 1, x0] * (1 - fx) + padded[y0 + 1, x0 + 1] * fx
        out = top * (1 - fy) + bot * fy
    if outside.any():
        out[outside] = fill
    return out


def resize(img: np.ndarray, out_h: int, out_w: int, order: int = 1) -> np.ndarray:
    """Resize with half-pixel-centre alignment and edge replication (float64 out)."""
    h, w = img.shape[:2]
    if out_h < 1 or out_w < 1:
        raise ValueError(f"resize target must be positive, got {out_h}x{out_w}")
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    gx, gy = np.meshgrid(xs, ys)
    return sample(img, gx, gy, order=order)


def rotated_shape(h: int, w: int, angle: float) -> tuple[int, int]:
    a = math.radians(angle)
    c, s = abs(math.cos(a)), abs(math.sin(a))
    return max(1, iround(h * c + w * s)), max(1, iround(w * c + h * s))


def rotate(img: np.ndarray, angle: float, order: int = 1, fill: float = 0.0) -> np.ndarray:
    """Rotate counter-clockwise (as displayed) by ``angle`` degrees about the centre.

    The canvas grows to the rotated bounding box; uncovered area takes ``fill``.
    """
    h, w = img.shape[:2]
    oh, ow = rotated_shape(h, w, angle)
    a = math.radians(angle)
    c, s = math.cos(a), math.sin(a)
    gx, gy = np.meshgrid(np.arange(ow, dtype=np.float64), np.arange(oh, dtype=np.float64))
    dx = gx - (ow - 1) / 2.0
    dy = gy - (oh - 1) / 2.0
    xs = dx * c - dy * s + (w - 1) / 2.0
    ys = dx * s + dy * c + (h - 1) / 2.0
    return sample(img, xs, ys, order=order, fill=fill)


def rotate_points(points: np.ndarray, angle: float, shape: tuple[int, int]) -> np.ndarray:
    """Map (x, y) points of an ``shape`` image into the frame produced by :func:`rotate`."""
    h, w = shape
    oh, ow = rotated_shape(h, w, angle)
    a = math.radians(angle)
    c, s = math.cos(a), math.sin(a)
    dx = points[:, 0] - (w - 1) / 2.0
    dy = points[:, 1] - (h - 1) / 2.0
    x = dx * c + dy * s + (ow - 1) / 2.0
    y = -dx * s + dy * c + (oh - 1) / 2.0
    return np.stack([x, y], axis=1)
