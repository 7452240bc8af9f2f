"""Sparse random block placement and per-block embedding."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .codec import DEFAULT_CODEC, BlockCodec

Rect = tuple[int, int, int, int]  # x, y, h, w
GAP = 8


@dataclass(frozen=True)
class PlacementPlan:
    rects: tuple[Rect, ...]
    seed: int
    q: float
    cap: int

    def mask(self, height: int, width: int) -> np.ndarray:
        m = np.zeros((height, width), dtype=bool)
        for x, y, h, w in self.rects:
            m[y : y + h, x : x + w] = True
        return m


@dataclass
class PlacementRecord:
    """Sidecar written next to a watermarked image; only used for oracle evaluation."""

    image_id: str
    seed: int
    q: float
    cap: int
    rects: list[dict] = field(default_factory=list)
    key_id: str = ""
    height: int = 0
    width: int = 0

    @property
    def plan(self) -> PlacementPlan:
        rects = tuple((r["x"], r["y"], r["h"], r["w"]) for r in self.rects)
        return PlacementPlan(rects, self.seed, self.q, self.cap)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PlacementRecord":
        return cls(**json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "PlacementRecord":
        return cls.from_json(Path(path).read_text())


def key_id(key: int) -> str:
    return hashlib.sha256(f"blockmark-key:{int(key)}".encode()).hexdigest()[:16]


def block_count(height: int, width: int, q: float, cap: int, block: int = 128) -> int:
    n = math.floor(q / 100.0 * height * width / (block * block))
    # never more than a grid packing can hold
    n = min(n, cap, (height // block) * (width // block))
    return max(1, n)


def _overlaps(a: Rect, b: Rect, gap: int = 0) -> bool:
    ax, ay, ah, aw = a
    bx, by, bh, bw = b
    return ax < bx + bw + gap and bx < ax + aw + gap and ay < by + bh + gap and by < ay + ah + gap


def plan_placements(height: int, width: int, q: float = 25.0, cap: int = 20, seed: int = 0,
                    block: int = 128, gap: int = GAP, avoid=()) -> PlacementPlan:
    """Pick non-overlapping ``block``-sized squares covering about ``q`` percent of the image.

    Rejection sampling of uniform top-left corners, keeping ``gap`` pixels between
    accepted blocks so their detected regions stay separate. If the quota is still
    open after ``1000 * cap`` draws, free cells of a randomly offset grid (no gap)
    fill the rest. Rects in ``avoid`` (say, another copy's blocks) are never
    overlapped; if that makes the quota impossible a ValueError is raised.
    """
    avoid = [tuple(int(v) for v in r) for r in avoid]
    if height < block or width < block:
        raise ValueError(f"image {height}x{width} is smaller than one {block}x{block} block")
    if not 0 < q <= 100:
        raise ValueError(f"area proportion must be in (0, 100], got {q}")
    if cap < 1:
        raise ValueError("cap must be at least 1")
    n = block_count(height, width, q, cap, block)
    rng = np.random.Generator(np.random.PCG64(seed))
    rects: list[Rect] = []
    for _ in range(1000 * cap):
        if len(rects) == n:
            break
        y = int(rng.integers(0, height - block + 1))
        x = int(rng.integers(0, width - block + 1))
        cand = (x, y, block, block)
        if not any(_overlaps(cand, r, gap) for r in rects) and not any(_overlaps(cand, r) for r in avoid):
            rects.append(cand)

    if len(rects) < n:
        oy = int(rng.integers(0, height % block + 1))
        ox = int(rng.integers(0, width % block + 1))
        grid = [
            (ox + j * block, oy + i * block, block, block)
            for i in range(height // block)
            for j in range(width // block)
        ]
        order = rng.permutation(len(grid))
        for idx in order:
            cand = grid[idx]
            if len(rects) == n:
                break
            if not any(_overlaps(cand, r) for r in rects + avoid):
                rects.append(cand)
        if len(rects) < n and avoid:
            raise ValueError(f"cannot place {n} blocks clear of the {len(avoid)} avoided rects")
        if len(rects) < n:
            # random picks fragmented the grid; fall back to grid cells only
            rects = [grid[i] for i in order[:n]]
    return PlacementPlan(tuple(rects), seed, q, cap)


def embed_image(cover: np.ndarray, msg, key: int, plan: PlacementPlan, codec: BlockCodec = DEFAULT_CODEC,
                target_psnr: float = 35.0, image_id: str = "") -> tuple[np.ndarray, PlacementRecord]:
    cover = np.asarray(cover)
    if cover.ndim != 3 or cover.shape[2] != 3 or cover.dtype != np.uint8:
        raise ValueError(f"cover must be an HxWx3 uint8 array, got {cover.shape} {cover.dtype}")
    height, width = cover.shape[:2]
    for x, y, h, w in plan.rects:
        if h != codec.block_size or w != codec.block_size:
            raise ValueError(f"plan block {h}x{w} does not match codec block size {codec.block_size}")
        if x < 0 or y < 0 or x + w > width or y + h > height:
            raise ValueError(f"plan rect {(x, y, h, w)} falls outside the {height}x{width} image")
    for i, a in enumerate(plan.rects):
        for b in plan.rects[i + 1 :]:
            if _overlaps(a, b):
                raise ValueError(f"plan rects {a} and {b} overlap")

    out = cover.copy()
    for x, y, h, w in plan.rects:
        out[y : y + h, x : x + w] = codec.embed_block(cover[y : y + h, x : x + w], msg, key, target_psnr)
    record = PlacementRecord(
        image_id=image_id,
        seed=plan.seed,
        q=plan.q,
        cap=plan.cap,
        rects=[{"x": x, "y": y, "h": h, "w": w} for x, y, h, w in plan.rects],
        key_id=key_id(key),
        height=height,
        width=width,
    )
    return out, record
