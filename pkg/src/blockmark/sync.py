"""Locating, measuring and rectifying embedded blocks in an attacked image.

Pipeline: tile the image (pad & split), run a detector per tile, merge the tile
masks, fit a minimum-area rectangle to every connected region, estimate one
rotation and per-axis scale from the rectangles, undo them, and cut 128x128
blocks around the rectified region centres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy import ndimage

from . import geometry as G
from .attacks import AttackSpec, transform_mask
from .codec import carriers, luminance
from .placement import PlacementRecord

BLOCK = 128
TILE = 512
MIN_AREA = 0.25 * BLOCK * BLOCK
SIZE_TOL = 0.25
# MAD floors so that near-identical estimates are not thrown away as outliers
MAD_FLOOR = {"angle": 0.5, "scale": 0.01}
MAD_K = 2.5


# --- pad & split -------------------------------------------------------------------


def padded_size(n: int, tile: int = TILE) -> int:
    # already a multiple -> no extra tile
    return n + (-n) % tile


def pad_and_split(img: np.ndarray, tile: int = TILE) -> list[tuple[np.ndarray, tuple[int, int]]]:
    """Zero-pad bottom/right to a multiple of ``tile`` and cut into tiles with (y, x) offsets."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    if h < 1 or w < 1:
        raise ValueError("empty image")
    ph, pw = padded_size(h, tile), padded_size(w, tile)
    pad = [(0, ph - h), (0, pw - w)] + [(0, 0)] * (img.ndim - 2)
    canvas = np.pad(img, pad)
    return [
        (canvas[y : y + tile, x : x + tile], (y, x))
        for y in range(0, ph, tile)
        for x in range(0, pw, tile)
    ]


def merge_masks(tiles, height: int, width: int) -> np.ndarray:
    """Reassemble tile masks and crop the padding. Tiles must cover the padded canvas once."""
    tiles = list(tiles)
    if not tiles:
        raise ValueError("no tiles to merge")
    tile = tiles[0][0].shape[0]
    ph, pw = padded_size(height, tile), padded_size(width, tile)
    canvas = np.zeros((ph, pw), dtype=bool)
    hits = np.zeros((ph, pw), dtype=np.int32)
    for m, (y, x) in tiles:
        m = np.asarray(m)
        th, tw = m.shape[:2]
        if y < 0 or x < 0 or y + th > ph or x + tw > pw:
            raise ValueError(f"tile at {(y, x)} of size {m.shape} leaves the {ph}x{pw} canvas")
        canvas[y : y + th, x : x + tw] = m.astype(bool)
        hits[y : y + th, x : x + tw] += 1
    if hits.max() > 1:
        raise ValueError("tiles overlap")
    if hits.min() < 1:
        raise ValueError("tiles leave part of the canvas uncovered")
    return canvas[:height, :width]


# --- detectors ---------------------------------------------------------------------


class Detector:
    """Per-tile segmentation interface; a trained segmenter can subclass this."""

    def begin(self, image: np.ndarray) -> None:
        """Called once per image before any tile."""

    def predict(self, tile: np.ndarray, offset: tuple[int, int]) -> np.ndarray:
        raise NotImplementedError


class OracleDetector(Detector):
    """Answers with the ground truth from a placement record.

    When the attacks applied to the image are known the ground-truth mask is
    pushed through them, so the result is exact up to rasterisation.
    """

    def __init__(self, record: PlacementRecord, attacks: list[AttackSpec] | tuple = ()):
        self.record = record
        self.attacks = list(attacks)
        mask = record.plan.mask(record.height, record.width)
        for spec in self.attacks:
            mask = transform_mask(mask, spec)
        self.mask = mask
        self._canvas = None

    def begin(self, image: np.ndarray) -> None:
        h, w = image.shape[:2]
        if self.mask.shape != (h, w):
            raise ValueError(
                f"oracle mask is {self.mask.shape} but the image is {(h, w)}; "
                "pass the attacks that were applied"
            )
        self._canvas = self.mask

    def predict(self, tile: np.ndarray, offset: tuple[int, int]) -> np.ndarray:
        y, x = offset
        th, tw = tile.shape[:2]
        out = np.zeros((th, tw), dtype=bool)
        part = self._canvas[y : y + th, x : x + tw]
        out[: part.shape[0], : part.shape[1]] = part
        return out


# frozen after tuning on synthetic and photographic covers; see tests/test_sync.py
RESIDUAL_THRESHOLD = 1.2
DECOYS = 16


def decoy_key(key: int) -> int:
    return (int(key) * 0x9E3779B97F4A7C15 + 0x5DEECE66D) & 0xFFFFFFFFFFFFFFFF


class ResidualEnergyDetector(Detector):
    """Blind detector for the reference codec.

    Every block-sized window is correlated with the key's carriers. A window
    holding an embedded block has a large correlation on every carrier at once,
    because informed embedding guarantees each bit a margin. The score is the
    smallest absolute correlation divided by the RMS correlation of the same
    window with decoy carriers from an unrelated key; the decoys track how much
    mid-band texture the window has, so strong edges do not fire. Windows
    scoring above ``threshold`` are kept with greedy non-maximum suppression
    and painted as full blocks.

    The search needs the whole image, so it runs in :meth:`begin`; the
    per-tile calls then just read the painted mask.
    """

    def __init__(self, key: int, msg_len: int = 30, block: int = BLOCK, threshold: float = RESIDUAL_THRESHOLD):
        self.key = key
        self.msg_len = msg_len
        self.block = block
        self.threshold = threshold
        self.mask = None
        self.hits: list[tuple[int, int, float]] = []

    def score_map(self, image: np.ndarray) -> np.ndarray:
        """Score for every block-sized window, indexed by its top-left (y, x)."""
        y = luminance(image).astype(np.float32)
        h, w = y.shape
        b = self.block
        if h < b or w < b:
            return np.zeros((0, 0))
        kern = np.concatenate([
            carriers(self.key, self.msg_len, b),
            carriers(decoy_key(self.key), DECOYS, b),
        ]).reshape(-1, b, b).astype(np.float32)
        fh, fw = sfft.next_fast_len(h + b - 1, real=True), sfft.next_fast_len(w + b - 1, real=True)
        fy = sfft.rfft2(y - y.mean(), s=(fh, fw))
        fk = sfft.rfft2(kern[:, ::-1, ::-1], s=(fh, fw), axes=(1, 2))
        corr = sfft.irfft2(fk * fy, s=(fh, fw), axes=(1, 2))[:, b - 1 : h, b - 1 : w]
        signal = np.abs(corr[: self.msg_len]).min(axis=0)
        noise = np.sqrt((corr[self.msg_len :] ** 2).mean(axis=0)) + 1e-6
        return (signal / noise).astype(np.float64)

    def begin(self, image: np.ndarray) -> None:
        h, w = image.shape[:2]
        b = self.block
        score = self.score_map(image)
        mask = np.zeros((h, w), dtype=bool)
        self.hits = []
        if score.size:
            ys, xs = np.nonzero(score > self.threshold)
            order = np.argsort(-score[ys, xs], kind="stable")
            for i in order:
                y0, x0 = int(ys[i]), int(xs[i])
                if any(abs(y0 - py) < b and abs(x0 - px) < b for py, px, _ in self.hits):
                    continue
                self.hits.append((y0, x0, float(score[y0, x0])))
                mask[y0 : y0 + b, x0 : x0 + b] = True
        self.mask = mask

    def predict(self, tile: np.ndarray, offset: tuple[int, int]) -> np.ndarray:
        y, x = offset
        th, tw = tile.shape[:2]
        out = np.zeros((th, tw), dtype=bool)
        part = self.mask[y : y + th, x : x + tw]
        out[: part.shape[0], : part.shape[1]] = part
        return out


def detect(img: np.ndarray, detector: Detector, tile: int = TILE) -> np.ndarray:
    img = np.asarray(img)
    detector.begin(img)
    tiles = [(detector.predict(t, off), off) for t, off in pad_and_split(img, tile)]
    return merge_masks(tiles, img.shape[0], img.shape[1])


# --- rectangles --------------------------------------------------------------------


@dataclass(frozen=True)
class BoundingBox:
    cx: float
    cy: float
    a: float  # side along the box's x direction
    b: float  # side along the box's y direction
    angle: float  # degrees, counter-clockwise as displayed, in (-45, 45]
    area: int = 0  # pixel count of the region
    bounds: tuple[int, int, int, int] = (0, 0, 0, 0)  # pixel extent x0, y0, x1, y1 (exclusive ends)
    cut: tuple[bool, bool, bool, bool] = (False, False, False, False)  # left, top, right, bottom

    @property
    def truncated(self) -> bool:
        """Region runs into the image edge, so part of its block may be missing."""
        return any(self.cut)

    def corners(self) -> np.ndarray:
        t = math.radians(self.angle)
        ux = np.array([math.cos(t), -math.sin(t)])
        uy = np.array([math.sin(t), math.cos(t)])
        c = np.array([self.cx, self.cy])
        return np.array([c + sx * self.a / 2 * ux + sy * self.b / 2 * uy for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))])


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices counter-clockwise (in x-right/y-up terms)."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(tuple(p))
    upper: list = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(tuple(p))
    return np.array(lower[:-1] + upper[:-1])


def normalize_angle(angle: float, a: float, b: float) -> tuple[float, float, float]:
    """Fold a rectangle orientation into (-45, 45], swapping sides on every quarter turn."""
    while angle > 45.0:
        angle -= 90.0
        a, b = b, a
    while angle <= -45.0:
        angle += 90.0
        a, b = b, a
    return angle, a, b


def min_area_rect(points: np.ndarray) -> BoundingBox:
    """Minimum-area enclosing rectangle by rotating calipers over the hull edges.

    ``points`` are (x, y) in image coordinates (y down).
    """
    hull = convex_hull(points)
    if len(hull) == 1:
        return BoundingBox(hull[0, 0], hull[0, 1], 0.0, 0.0, 0.0)
    edges = np.roll(hull, -1, axis=0) - hull
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    keep = lengths > 0
    u = edges[keep] / lengths[keep, None]  # edge directions
    n = np.stack([-u[:, 1], u[:, 0]], axis=1)
    pu = hull @ u.T  # (points, edges)
    pn = hull @ n.T
    wu = pu.max(axis=0) - pu.min(axis=0)
    wn = pn.max(axis=0) - pn.min(axis=0)
    area = wu * wn
    # prefer the smallest area; among equal areas the most axis-aligned edge
    tilt = np.abs(np.degrees(np.arctan2(-u[:, 1], u[:, 0])))
    tilt = np.minimum(tilt % 90.0, 90.0 - tilt % 90.0)
    i = int(np.lexsort((tilt, np.round(area, 6)))[0])
    mid_u = (pu[:, i].max() + pu[:, i].min()) / 2
    mid_n = (pn[:, i].max() + pn[:, i].min()) / 2
    centre = mid_u * u[i] + mid_n * n[i]
    angle = math.degrees(math.atan2(-u[i, 1], u[i, 0]))
    angle, a, b = normalize_angle(angle, float(wu[i]), float(wn[i]))
    return BoundingBox(float(centre[0]), float(centre[1]), a, b, angle)


def _region_outline(ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Pixel-corner points at the left/right end of every row: enough for the hull."""
    order = np.lexsort((xs, ys))
    ys, xs = ys[order], xs[order]
    first = np.r_[True, ys[1:] != ys[:-1]]
    last = np.r_[ys[1:] != ys[:-1], True]
    lx, ly = xs[first], ys[first]
    rx, ry = xs[last] + 1, ys[last]
    return np.concatenate([
        np.stack([lx, ly], 1), np.stack([lx, ly + 1], 1),
        np.stack([rx, ry], 1), np.stack([rx, ry + 1], 1),
    ]).astype(np.float64)


def _cut_sides(region: np.ndarray, outside: np.ndarray, sl) -> tuple[bool, bool, bool, bool]:
    """Which sides of a region's pixel extent touch ``outside`` (padded by one pixel)."""
    ys, xs = sl
    y0, y1, x0, x1 = ys.start, ys.stop, xs.start, xs.stop
    # ``outside`` is offset by one pixel of padding
    left = bool((region[:, 0] & outside[y0 + 1 : y1 + 1, x0]).any())
    right = bool((region[:, -1] & outside[y0 + 1 : y1 + 1, x1 + 1]).any())
    top = bool((region[0, :] & outside[y0, x0 + 1 : x1 + 1]).any())
    bottom = bool((region[-1, :] & outside[y1 + 1, x0 + 1 : x1 + 1]).any())
    return left, top, right, bottom


def extract_boxes(mask: np.ndarray, min_area: float = MIN_AREA, support: np.ndarray | None = None) -> list[BoundingBox]:
    """Minimum-area rectangles of the 8-connected regions with at least ``min_area`` pixels.

    Rectangles are measured on pixel corners, so a filled 128x128 square yields
    sides of exactly 128. ``support`` marks pixels that hold image content
    (all of them by default); regions that reach its edge are flagged as cut.
    """
    m = np.asarray(mask).astype(bool)
    sup = np.ones_like(m) if support is None else np.asarray(support).astype(bool)
    if sup.shape != m.shape:
        raise ValueError(f"support shape {sup.shape} does not match mask {m.shape}")
    outside = ~np.pad(sup, 1, constant_values=False)
    labels, n = ndimage.label(m, structure=np.ones((3, 3), dtype=int))
    boxes = []
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        region = labels[sl] == idx
        ys, xs = np.nonzero(region)
        if len(ys) < min_area:
            continue
        pts = _region_outline(ys + sl[0].start, xs + sl[1].start)
        box = min_area_rect(pts)
        bounds = (sl[1].start, sl[0].start, sl[1].stop, sl[0].stop)
        boxes.append(BoundingBox(box.cx, box.cy, box.a, box.b, box.angle, int(len(ys)), bounds,
                                 _cut_sides(region, outside, sl)))
    return boxes


# --- geometry estimate -------------------------------------------------------------


@dataclass
class GeometricEstimate:
    angle: float = 0.0
    scale_x: float = 1.0
    scale_y: float = 1.0
    raw: list = field(default_factory=list)  # per-box (angle, scale_x, scale_y)

    def __post_init__(self):
        if self.scale_x <= 0 or self.scale_y <= 0:
            raise ValueError(f"scale factors must be positive, got {self.scale_x}, {self.scale_y}")

    @property
    def is_identity(self) -> bool:
        return self.angle == 0.0 and self.scale_x == 1.0 and self.scale_y == 1.0


class NoWatermarkFound(ValueError):
    pass


def robust_mean(values, floor: float, k: float = MAD_K) -> float:
    """Average after dropping points more than ``k`` MADs from the median.

    Falls back to the median when fewer than two points survive.
    """
    v = np.asarray(values, dtype=np.float64)
    med = float(np.median(v))
    mad = max(float(np.median(np.abs(v - med))), floor)
    kept = v[np.abs(v - med) <= k * mad]
    if len(kept) < 2:
        return med
    return float(kept.mean())


def estimate_geometry(boxes, block_side: int = BLOCK) -> GeometricEstimate:
    """Robust rotation and per-axis scale from the box sides.

    Boxes cut by the image edge only ever look smaller than their block, so they
    are left out whenever at least one uncut box exists.
    """
    boxes = list(boxes)
    if not boxes:
        raise NoWatermarkFound("no watermark found: no candidate regions")
    whole = [b for b in boxes if not b.truncated]
    boxes = whole or boxes
    raw = [(b.angle, b.a / block_side, b.b / block_side) for b in boxes]
    arr = np.array(raw)
    return GeometricEstimate(
        angle=robust_mean(arr[:, 0], MAD_FLOOR["angle"]),
        scale_x=robust_mean(arr[:, 1], MAD_FLOOR["scale"]),
        scale_y=robust_mean(arr[:, 2], MAD_FLOOR["scale"]),
        raw=raw,
    )


def rectify(img: np.ndarray, mask: np.ndarray, est: GeometricEstimate) -> tuple[np.ndarray, np.ndarray]:
    """Undo rotation, then scaling; bilinear for the image, nearest for the mask."""
    if est.scale_x <= 0 or est.scale_y <= 0:
        raise ValueError("degenerate scale estimate")
    img = np.asarray(img)
    m = np.asarray(mask).astype(bool)
    if est.is_identity:
        return img.copy(), m.copy()
    out = img.astype(np.float64)
    mf = m.astype(np.float64)
    if est.angle != 0.0:
        out = G.rotate(out, -est.angle)
        mf = G.rotate(mf, -est.angle, order=0)
    if est.scale_x != 1.0 or est.scale_y != 1.0:
        h, w = out.shape[:2]
        nh, nw = max(1, G.iround(h / est.scale_y)), max(1, G.iround(w / est.scale_x))
        out = G.resize(out, nh, nw)
        mf = G.resize(mf, nh, nw, order=0)
    return G.to_uint8(out), mf >= 0.5


def rectified_support(height: int, width: int, est: GeometricEstimate) -> np.ndarray:
    """Where the rectified image holds real content, as opposed to rotation fill."""
    ones = np.ones((height, width, 1), dtype=np.uint8)
    return rectify(ones, ones[..., 0], est)[1]


@dataclass
class SyncBlock:
    pixels: np.ndarray
    box: BoundingBox
    origin: tuple[float, float]  # (x, y) of the block's top-left pixel in the rectified image


def crop_block(img: np.ndarray, cx: float, cy: float, size: int = BLOCK,
               clamp: bool = True) -> tuple[np.ndarray, tuple[float, float]]:
    """``size`` x ``size`` block centred at (cx, cy) in pixel-corner coordinates.

    With ``clamp`` the window is pushed inside the image; otherwise pixels
    beyond the edge are black. Fractional positions are resampled bilinearly,
    integral ones inside the image are copied exactly.
    """
    h, w = img.shape[:2]
    x0 = cx - size / 2.0
    y0 = cy - size / 2.0
    if clamp and w >= size:
        x0 = min(max(x0, 0.0), w - size)
    if clamp and h >= size:
        y0 = min(max(y0, 0.0), h - size)
    inside = 0 <= x0 <= w - size and 0 <= y0 <= h - size
    if float(x0).is_integer() and float(y0).is_integer() and inside:
        xi, yi = int(x0), int(y0)
        return img[yi : yi + size, xi : xi + size].copy(), (x0, y0)
    gx, gy = np.meshgrid(x0 + np.arange(size), y0 + np.arange(size))
    return G.to_uint8(G.sample(img, gx, gy)), (x0, y0)


def _grid_count(side: float, block: int, tol: float) -> int:
    """How many blocks laid end to end explain ``side``; 0 if none does within ``tol``."""
    k = max(1, G.iround(side / block))
    return k if abs(side / k - block) <= tol * block else 0


def _anchor(lo: int, hi: int, cut_lo: bool, cut_hi: bool, block: int) -> float | None:
    """Block centre along one axis when exactly one end of the extent was cut off."""
    if cut_lo and not cut_hi:
        return hi - block / 2.0
    if cut_hi and not cut_lo:
        return lo + block / 2.0
    return None


def extract_synchronized_blocks(img: np.ndarray, mask: np.ndarray, block: int = BLOCK,
                                min_area: float = MIN_AREA, tol: float = SIZE_TOL,
                                support: np.ndarray | None = None) -> list[SyncBlock]:
    """Cut a block around each rectified region centre.

    Regions whose sides are off by more than ``tol`` are dropped. Blocks that sat
    edge to edge form one region whose sides are whole multiples of the block
    size; such a region is cut into its individual blocks. A single block cut by
    the image edge is aligned on its surviving edge instead of its centre, and
    the missing part reads as black.
    """
    img = np.asarray(img)
    out = []
    for box in extract_boxes(mask, min_area, support):
        na, nb = _grid_count(box.a, block, tol), _grid_count(box.b, block, tol)
        if na == 0 or nb == 0:
            continue
        if box.truncated and na == 1 and nb == 1:
            x0, y0, x1, y1 = box.bounds
            left, top, right, bottom = box.cut
            ax = _anchor(x0, x1, left, right, block)
            ay = _anchor(y0, y1, top, bottom, block)
            cx = box.cx if ax is None else ax
            cy = box.cy if ay is None else ay
            pixels, origin = crop_block(img, cx, cy, block, clamp=False)
            out.append(SyncBlock(pixels, box, origin))
            continue
        t = math.radians(box.angle)
        ux = np.array([math.cos(t), -math.sin(t)])
        uy = np.array([math.sin(t), math.cos(t)])
        for i in range(nb):
            for j in range(na):
                off = (j - (na - 1) / 2) * box.a / na * ux + (i - (nb - 1) / 2) * box.b / nb * uy
                pixels, origin = crop_block(img, box.cx + off[0], box.cy + off[1], block)
                out.append(SyncBlock(pixels, box, origin))
    return out
