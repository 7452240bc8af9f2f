"""Message helpers, CRC-8 framing and image quality metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

MSG_LEN = 30
CRC_BITS = 8
CRC_POLY = 0x07  # x^8 + x^2 + x + 1
PSNR_CAP = 99.0

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def check_bits(bits, length: int | None = None) -> np.ndarray:
    """Validate a binary message and return it as a uint8 array."""
    arr = np.asarray(bits)
    if arr.ndim != 1:
        raise ValueError(f"message must be one-dimensional, got shape {arr.shape}")
    if length is not None and arr.size != length:
        raise ValueError(f"message has {arr.size} bits, expected {length}")
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError("message bits must be 0 or 1")
    return arr.astype(np.uint8)


def check_soft(values, length: int | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"soft message must be one-dimensional, got shape {arr.shape}")
    if length is not None and arr.size != length:
        raise ValueError(f"soft message has {arr.size} values, expected {length}")
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise ValueError("soft message values must lie in [0, 1]")
    return arr


def bits_from_hex(text: str, nbits: int) -> np.ndarray:
    value = int(text, 16)
    if value >> nbits:
        raise ValueError(f"payload 0x{value:x} does not fit in {nbits} bits")
    return np.array([(value >> (nbits - 1 - i)) & 1 for i in range(nbits)], dtype=np.uint8)


def bits_to_hex(bits) -> str:
    bits = check_bits(bits)
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return f"{value:0{(len(bits) + 3) // 4}x}"


# --- CRC-8 -----------------------------------------------------------------------


def crc8(bits, poly: int = CRC_POLY) -> int:
    """Bit-serial CRC-8, MSB first, init 0, no reflection, no final XOR."""
    reg = 0
    for b in check_bits(bits):
        top = ((reg >> 7) & 1) ^ int(b)
        reg = (reg << 1) & 0xFF
        if top:
            reg ^= poly
    return reg


@dataclass(frozen=True)
class CrcFrame:
    payload_bits: np.ndarray
    checksum_bits: np.ndarray

    @property
    def bits(self) -> np.ndarray:
        return np.concatenate([self.payload_bits, self.checksum_bits])

    @classmethod
    def from_bits(cls, bits, length: int = MSG_LEN) -> "CrcFrame":
        bits = check_bits(bits, length)
        return cls(bits[:-CRC_BITS].copy(), bits[-CRC_BITS:].copy())


def crc8_encode(payload, length: int = MSG_LEN) -> CrcFrame:
    payload = check_bits(payload)
    if payload.size != length - CRC_BITS:
        raise ValueError(f"payload must have {length - CRC_BITS} bits, got {payload.size}")
    c = crc8(payload)
    checksum = np.array([(c >> (7 - i)) & 1 for i in range(CRC_BITS)], dtype=np.uint8)
    return CrcFrame(payload.copy(), checksum)


def crc8_verify(frame) -> bool:
    if not isinstance(frame, CrcFrame):
        frame = CrcFrame.from_bits(frame, len(np.asarray(frame)))
    stored = 0
    for b in frame.checksum_bits:
        stored = (stored << 1) | int(b)
    return crc8(frame.payload_bits) == stored


# --- metrics -----------------------------------------------------------------------


def bit_accuracy(decoded, truth) -> float:
    a = check_bits(decoded)
    b = check_bits(truth)
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("empty messages")
    return float(np.mean(a == b))


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(a, b) -> float:
    """PSNR in dB over all channels; identical inputs give ``PSNR_CAP``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _same_shape(a, b)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(255.0**2 / mse)))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, win: np.ndarray) -> np.ndarray:
    # separable 'valid' Gaussian filtering over the first two axes
    k = len(win)
    y = convolve1d(x, win, axis=0, mode="constant")
    y = convolve1d(y, win, axis=1, mode="constant")
    r = k // 2
    return y[r : x.shape[0] - r, r : x.shape[1] - r]


def _ssim_parts(x: np.ndarray, y: np.ndarray, win: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c1 = (0.01 * 255) ** 2
    c2 = (0.03 * 255) ** 2
    mx = _filter_valid(x, win)
    my = _filter_valid(y, win)
    sxx = _filter_valid(x * x, win) - mx * mx
    syy = _filter_valid(y * y, win) - my * my
    sxy = _filter_valid(x * y, win) - mx * my
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    # per-channel means
    return (lum * cs).mean(axis=(0, 1)), cs.mean(axis=(0, 1))


def ms_ssim_scales(h: int, w: int, win_size: int = 11, max_scales: int = 5) -> int:
    n = 0
    while n < max_scales and min(h, w) >= win_size * 2**n:
        n += 1
    return n


def ms_ssim(a, b, full: bool = False):
    """Multi-scale SSIM (Gaussian 11-tap window, sigma 1.5, 2x2 average pooling).

    Colour images are scored per channel and averaged. Images smaller than
    176x176 use as many scales as fit, with the weights renormalised; pass
    ``full=True`` to get ``(score, n_scales)``.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    _same_shape(x, y)
    if x.ndim == 2:
        x, y = x[..., None], y[..., None]
    n = ms_ssim_scales(x.shape[0], x.shape[1])
    if n == 0:
        raise ValueError(f"image {x.shape[:2]} too small for an 11-tap window")
    weights = np.array(MS_SSIM_WEIGHTS[:n])
    if n < len(MS_SSIM_WEIGHTS):
        # canonical weights sum to 1.0001; only the truncated set is renormalised
        weights /= weights.sum()
    win = _gaussian_window()
    per_scale = []
    for i in range(n):
        ssim, cs = _ssim_parts(x, y, win)
        if i == n - 1:
            per_scale.append(np.maximum(ssim, 0.0))
        else:
            per_scale.append(np.maximum(cs, 0.0))
            hh, ww = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
            x = x[:hh, :ww].reshape(hh // 2, 2, ww // 2, 2, -1).mean(axis=(1, 3))
            y = y[:hh, :ww].reshape(hh // 2, 2, ww // 2, 2, -1).mean(axis=(1, 3))
    vals = np.stack(per_scale)  # (scales, channels)
    score = float(np.mean(np.prod(vals ** weights[:, None], axis=0)))
    score = min(1.0, max(0.0, score))
    return (score, n) if full else score


def byte_increase_rate(cover_bytes: int, wm_bytes: int) -> float:
    if cover_bytes <= 0:
        raise ValueError("cover file size must be positive")
    return 100.0 * (wm_bytes - cover_bytes) / cover_bytes


def mask_iou(pred, truth) -> float:
    p = np.asarray(pred).astype(bool)
    t = np.asarray(truth).astype(bool)
    _same_shape(p, t)
    union = np.count_nonzero(p | t)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & t) / union
