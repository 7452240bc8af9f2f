"""Keyed spread-spectrum reference codec for 128x128 blocks.

Each of the L message bits owns a keyed, disjoint subset of mid-frequency DCT
coefficients taken from the 8x8 cells of the block's luminance. The signed sum of
those basis functions, normalised to unit energy, is the bit's carrier. Decoding
is a plain correlation with the carrier.

Embedding is host-informed: only bits whose host correlation falls short of a
common margin receive energy, and the margin is solved in closed form so that
the block lands on the requested PSNR. Chroma is left untouched because the same
luminance offset is added to R, G and B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol

import numpy as np
from scipy.fft import idctn

from .core import check_bits, psnr
from .geometry import to_uint8

BLOCK = 128
CELL = 8
# mid-band (row, col) DCT positions inside each 8x8 cell; lower bands carry too
# much host energy, higher ones do not survive resampling
COEFFS = ((1, 1), (0, 2), (2, 0), (1, 2), (2, 1))
# correlation-to-probability temperature for soft outputs
SOFT_SCALE = 16.0


class BlockCodec(Protocol):
    """Plug-in boundary: any model with these two calls can replace the reference codec."""

    block_size: int
    msg_len: int

    def embed_block(self, cover: np.ndarray, msg, key: int, target_psnr: float = 35.0) -> np.ndarray: ...

    def decode_block(self, block: np.ndarray, key: int) -> np.ndarray: ...


@lru_cache(maxsize=32)
def carriers(key: int, msg_len: int = 30, block: int = BLOCK) -> np.ndarray:
    """Orthonormal carrier matrix of shape (msg_len, block*block) for ``key``."""
    if block % CELL:
        raise ValueError(f"block size {block} is not a multiple of {CELL}")
    cells = (block // CELL) ** 2
    n_slots = cells * len(COEFFS)
    if n_slots < msg_len:
        raise ValueError("message longer than the available coefficient slots")
    rng = np.random.Generator(np.random.PCG64(int(key) & 0xFFFFFFFFFFFFFFFF))
    owner = np.empty(n_slots, dtype=np.int64)
    owner[rng.permutation(n_slots)] = np.arange(n_slots) % msg_len
    signs = rng.choice(np.array([-1.0, 1.0]), size=n_slots)

    # coefficient planes: cells laid out row-major, COEFFS innermost
    g = block // CELL
    coef = np.zeros((msg_len, g, g, CELL, CELL))
    slot = np.arange(n_slots)
    cell_idx = slot // len(COEFFS)
    which = slot % len(COEFFS)
    u = np.array([c[0] for c in COEFFS])[which]
    v = np.array([c[1] for c in COEFFS])[which]
    coef[owner, cell_idx // g, cell_idx % g, u, v] = signs
    spatial = idctn(coef, axes=(3, 4), norm="ortho")
    spatial = spatial.transpose(0, 1, 3, 2, 4).reshape(msg_len, block * block)
    spatial /= np.linalg.norm(spatial, axis=1, keepdims=True)
    spatial.setflags(write=False)
    return spatial


def luminance(pixels: np.ndarray) -> np.ndarray:
    p = np.asarray(pixels, dtype=np.float64)
    return 0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2]


def solve_margin(margins: np.ndarray, energy: float) -> float:
    """Largest common margin ``beta`` with sum(max(0, beta - m)^2) == energy.

    The left side is piecewise quadratic and increasing in beta, so we walk the
    sorted margins and solve the quadratic on the active segment.
    """
    m = np.sort(np.asarray(margins, dtype=np.float64))
    s1 = s2 = 0.0
    for j in range(1, len(m) + 1):
        s1 += m[j - 1]
        s2 += m[j - 1] ** 2
        # j * b^2 - 2 * s1 * b + s2 - energy = 0
        disc = s1 * s1 - j * (s2 - energy)
        beta = (s1 + math.sqrt(max(disc, 0.0))) / j
        upper = m[j] if j < len(m) else math.inf
        if beta <= upper:
            return beta
    return beta


@dataclass(frozen=True)
class SpreadSpectrumCodec:
    """Reference implementation of :class:`BlockCodec`."""

    block_size: int = BLOCK
    msg_len: int = 30
    soft_scale: float = SOFT_SCALE

    def _check_block(self, pixels: np.ndarray) -> None:
        if pixels.shape[:2] != (self.block_size, self.block_size) or pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(
                f"expected a {self.block_size}x{self.block_size}x3 block, got shape {pixels.shape}"
            )

    def residual(self, cover: np.ndarray, msg, key: int, target_psnr: float = 35.0) -> np.ndarray:
        """Luminance offset (float, block-shaped) that embeds ``msg`` at ``target_psnr``."""
        self._check_block(cover)
        bits = check_bits(msg, self.msg_len)
        C = carriers(key, self.msg_len, self.block_size)
        y = luminance(cover).ravel()
        sign = 2.0 * bits - 1.0
        energy = y.size * 255.0**2 * 10 ** (-target_psnr / 10.0)
        m = sign * (C @ y)
        beta = solve_margin(m, energy)
        amp = sign * np.maximum(0.0, beta - m)
        return (amp @ C).reshape(self.block_size, self.block_size)

    def embed_block(self, cover: np.ndarray, msg, key: int, target_psnr: float = 35.0) -> np.ndarray:
        cover = np.asarray(cover)
        delta = self.residual(cover, msg, key, target_psnr)
        base = cover.astype(np.float64)
        out = to_uint8(base + delta[..., None])
        # one corrective pass for rounding/clipping drift
        got = psnr(out, cover)
        if abs(got - target_psnr) > 0.1:
            delta = delta * 10 ** ((got - target_psnr) / 20.0)
            out = to_uint8(base + delta[..., None])
        return out

    def correlate(self, block: np.ndarray, key: int) -> np.ndarray:
        self._check_block(block)
        C = carriers(key, self.msg_len, self.block_size)
        return C @ luminance(block).ravel()

    def decode_block(self, block: np.ndarray, key: int) -> np.ndarray:
        corr = self.correlate(np.asarray(block), key)
        return 0.5 * (1.0 + np.tanh(corr / (2.0 * self.soft_scale)))


def binarize(soft) -> np.ndarray:
    """Threshold soft bits at 0.5; exact ties go to 1."""
    return (np.asarray(soft, dtype=np.float64) >= 0.5).astype(np.uint8)


DEFAULT_CODEC = SpreadSpectrumCodec()


def embed_block(cover, msg, key: int, target_psnr: float = 35.0) -> np.ndarray:
    return DEFAULT_CODEC.embed_block(cover, msg, key, target_psnr)


def decode_block(block, key: int) -> np.ndarray:
    return DEFAULT_CODEC.decode_block(block, key)
