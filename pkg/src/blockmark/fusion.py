"""Similarity-based fusion of the soft messages decoded from several blocks.

For each threshold t = 0..T the message with the most neighbours within t bit
flips (itself included) is the cluster centre; the first t whose best cluster
reaches K members wins and the cluster's soft values are averaged. If no t
qualifies, every message is averaged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import binarize


@dataclass(frozen=True)
class FusionConfig:
    T: int = 5
    K: int = 2

    def __post_init__(self):
        if self.T < 0:
            raise ValueError(f"T must be >= 0, got {self.T}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")


def _stack(msgs) -> np.ndarray:
    arr = np.asarray(msgs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("need a non-empty list of equal-length soft messages")
    return arr


def pairwise_differences(msgs) -> np.ndarray:
    """N x N matrix of Hamming distances between the binarized messages."""
    hard = binarize(_stack(msgs)).astype(np.int64)
    return np.abs(hard[:, None, :] - hard[None, :, :]).sum(axis=2)


def fuse_many(batch, cfg: FusionConfig = FusionConfig()) -> np.ndarray:
    """Vectorised :func:`fuse` over a (B, N, L) batch; returns (B, L) bits."""
    soft = np.asarray(batch, dtype=np.float64)
    if soft.ndim != 3 or soft.shape[1] == 0:
        raise ValueError(f"expected a (B, N, L) batch with N >= 1, got {soft.shape}")
    hard = binarize(soft).astype(np.int16)
    dist = np.abs(hard[:, :, None, :] - hard[:, None, :, :]).sum(axis=3)

    b = soft.shape[0]
    rows = np.arange(b)
    done = np.zeros(b, dtype=bool)
    members = np.ones(dist.shape[:2], dtype=bool)  # fallback: everyone
    for t in range(cfg.T + 1):
        within = dist <= t
        counts = within.sum(axis=2)
        best = counts.argmax(axis=1)  # first maximum -> lowest index
        hit = ~done & (counts[rows, best] >= cfg.K)
        members[hit] = within[rows[hit], best[hit]]
        done |= hit
    weights = members.astype(np.float64)
    mean = (weights[:, :, None] * soft).sum(axis=1) / weights.sum(axis=1)[:, None]
    return binarize(mean)


def fuse(msgs, cfg: FusionConfig = FusionConfig()) -> np.ndarray:
    return fuse_many(_stack(msgs)[None], cfg)[0]
