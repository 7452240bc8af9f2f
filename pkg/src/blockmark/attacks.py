"""Seeded distortions: single attacks, combinations and collusion.

An :class:`AttackSpec` holds the sampled strength parameters; placements that
depend on the image size (crop offsets, paste positions, dropout pixels, noise)
are drawn at application time from a stream derived from the same seed, so a
spec replays bit-identically on any input of the same size.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import convolve1d

from . import geometry as G

SINGLE_KINDS = (
    "identity", "resize", "crop", "rotate", "padding", "pip",
    "jpeg", "gn", "gf", "color", "dropout", "occlusion",
)
COLLUSION_KINDS = ("collusion-min", "collusion-max", "collusion-mean")
GEOMETRIC = {"resize", "crop", "rotate", "padding", "pip"}

# open intervals unless noted
RANGES = {
    "resize": {"r1": (0.5, 2.0), "r2": (0.5, 2.0)},
    "crop": {"c1": (0.7, 1.0), "c2": (0.7, 1.0)},
    "rotate": {"angle": (-30.0, 30.0)},
    "pip": {"e1": (1.0, 2.0), "e2": (1.0, 2.0)},
    "jpeg": {"quality": (50.0, 100.0)},
    "color": {"factor": (0.5, 1.5)},
    "dropout": {"p": (0.0, 30.0)},
    "occlusion": {"o1": (0.25, 0.5), "o2": (0.25, 0.5)},
}
PADDING_RANGE = (1, 99)  # integer pixels, i.e. the open interval (0, 100)
GN_VARIANCES = tuple(range(3, 11))
GF_KERNELS = (3, 5, 7)


@dataclass
class AttackSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def to_dict(self) -> dict:
        params = dict(self.params)
        if self.kind == "combined":
            params["attacks"] = [a.to_dict() for a in params["attacks"]]
        return {"kind": self.kind, "params": params, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "AttackSpec":
        params = dict(d.get("params", {}))
        if d["kind"] == "combined":
            params["attacks"] = [cls.from_dict(a) for a in params["attacks"]]
        return cls(d["kind"], params, int(d.get("seed", 0)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def name(self) -> str:
        if self.kind == "combined":
            return "&".join(a.name for a in self.params["attacks"])
        return self.kind


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from any mix of ints and strings."""
    words = []
    for p in parts:
        if isinstance(p, str):
            words.extend(p.encode())
        else:
            words.append(int(p) & 0xFFFFFFFF)
            words.append((int(p) >> 32) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(words).generate_state(2, np.uint64)[0] >> np.uint64(1))


def _open_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    while True:
        v = float(rng.uniform(lo, hi))
        if lo < v < hi:
            return v


def sample_attack(kind: str, seed: int) -> AttackSpec:
    kind = kind.lower()
    rng = np.random.Generator(np.random.PCG64(seed))
    if kind in RANGES:
        params = {k: _open_uniform(rng, lo, hi) for k, (lo, hi) in RANGES[kind].items()}
    elif kind == "padding":
        lo, hi = PADDING_RANGE
        params = {s: int(rng.integers(lo, hi + 1)) for s in ("top", "bottom", "left", "right")}
    elif kind == "gn":
        params = {"variance": int(rng.choice(GN_VARIANCES))}
    elif kind == "gf":
        params = {"kernel": int(rng.choice(GF_KERNELS))}
    elif kind in ("identity",) + COLLUSION_KINDS:
        params = {}
    else:
        raise ValueError(f"unknown attack kind {kind!r}")
    return AttackSpec(kind, params, seed)


def combined(kinds, seed: int) -> AttackSpec:
    parts = [sample_attack(k, derive_seed(seed, i, k)) for i, k in enumerate(kinds)]
    return AttackSpec("combined", {"attacks": parts}, seed)


def parse_spec(text: str, seed: int | None = None) -> AttackSpec:
    """Parse ``"rotate:seed=7"``, ``"crop&jpeg:seed=3"`` or ``"jpeg:quality=75"``.

    Explicit parameters override the sampled ones (single attacks only). A
    ``seed`` argument takes precedence over one written in the text.
    """
    head, _, tail = text.strip().partition(":")
    opts = {}
    for item in filter(None, (s.strip() for s in tail.split(","))):
        k, _, v = item.partition("=")
        opts[k.strip()] = v.strip()
    written = int(opts.pop("seed", 0))
    seed = written if seed is None else int(seed)
    kinds = [k.strip().lower() for k in head.split("&")]
    if len(kinds) > 1:
        if opts:
            raise ValueError("explicit parameters are only supported for single attacks")
        return combined(kinds, seed)
    spec = sample_attack(kinds[0], seed)
    for k, v in opts.items():
        if k not in spec.params:
            raise ValueError(f"{kinds[0]} has no parameter {k!r}")
        spec.params[k] = type(spec.params[k])(float(v)) if isinstance(spec.params[k], int) else float(v)
    return spec


def load_specs(path) -> list[AttackSpec]:
    """Read attack specs from JSON (list of dicts or strings) or one spec string per line."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = [ln.split("#")[0].strip() for ln in text.splitlines()]
        data = [ln for ln in data if ln]
    return [parse_spec(d) if isinstance(d, str) else AttackSpec.from_dict(d) for d in data]


# --- application -------------------------------------------------------------------


def _layout_rng(spec: AttackSpec) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed & 0xFFFFFFFF, spec.seed >> 32, 1])))


def _layout(spec: AttackSpec, h: int, w: int) -> dict:
    """Size-dependent placement shared by image and mask paths."""
    rng = _layout_rng(spec)
    p = spec.params
    if spec.kind == "resize":
        return {"size": (max(1, G.iround(p["r1"] * h)), max(1, G.iround(p["r2"] * w)))}
    if spec.kind == "crop":
        ch, cw = max(1, G.iround(p["c1"] * h)), max(1, G.iround(p["c2"] * w))
        return {"size": (ch, cw), "y": int(rng.integers(0, h - ch + 1)), "x": int(rng.integers(0, w - cw + 1))}
    if spec.kind == "pip":
        ch, cw = G.iround(p["e1"] * h), G.iround(p["e2"] * w)
        return {"size": (ch, cw), "y": int(rng.integers(0, ch - h + 1)), "x": int(rng.integers(0, cw - w + 1))}
    if spec.kind == "occlusion":
        oh, ow = max(1, G.iround(p["o1"] * h)), max(1, G.iround(p["o2"] * w))
        return {
            "size": (oh, ow),
            "y": int(rng.integers(0, h - oh + 1)),
            "x": int(rng.integers(0, w - ow + 1)),
            "rng": rng,
        }
    return {"rng": rng}


def _gaussian_kernel(k: int) -> np.ndarray:
    sigma = 0.3 * ((k - 1) * 0.5 - 1) + 0.8
    x = np.arange(k) - (k - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def jpeg(img: np.ndarray, quality: int) -> np.ndarray:
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="JPEG", quality=int(quality))
    buf.seek(0)
    return np.array(Image.open(buf).convert("RGB"))


def color_jitter(img: np.ndarray, f: float) -> np.ndarray:
    x = img.astype(np.float64)
    x = np.clip(x * f, 0, 255)  # brightness
    gray = 0.299 * x[..., 0] + 0.587 * x[..., 1] + 0.114 * x[..., 2]
    x = np.clip((x - gray.mean()) * f + gray.mean(), 0, 255)  # contrast
    gray = 0.299 * x[..., 0] + 0.587 * x[..., 1] + 0.114 * x[..., 2]
    x = np.clip(gray[..., None] + (x - gray[..., None]) * f, 0, 255)  # saturation
    return G.to_uint8(x)


def _need(arr, name: str, kind: str, shape=None) -> np.ndarray:
    if arr is None:
        raise ValueError(f"{kind} attack requires a {name} image")
    arr = np.asarray(arr)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"{kind}: {name} shape {arr.shape} does not match image {shape}")
    return arr


def apply_attack(img: np.ndarray, spec: AttackSpec, cover=None, clean=None, other=None) -> np.ndarray:
    """Apply one attack. ``cover`` feeds Dropout, ``clean`` feeds PIP/Occlusion and
    ``other`` is the second copy for collusion."""
    img = np.asarray(img)
    if spec.kind == "combined":
        return apply_combined(img, spec.params["attacks"], cover=cover, clean=clean, other=other)
    h, w = img.shape[:2]
    p = spec.params
    kind = spec.kind
    if kind == "identity":
        return img.copy()
    if kind in COLLUSION_KINDS:
        return collude(img, _need(other, "second watermarked", kind), kind.split("-")[1])
    lay = _layout(spec, h, w)
    if kind == "resize":
        return G.to_uint8(G.resize(img, *lay["size"]))
    if kind == "crop":
        ch, cw = lay["size"]
        return img[lay["y"] : lay["y"] + ch, lay["x"] : lay["x"] + cw].copy()
    if kind == "rotate":
        return G.to_uint8(G.rotate(img, p["angle"]))
    if kind == "padding":
        return np.pad(img, ((p["top"], p["bottom"]), (p["left"], p["right"]), (0, 0)))
    if kind == "pip":
        canvas_h, canvas_w = lay["size"]
        donor = _need(clean, "clean", kind)
        canvas = G.to_uint8(G.resize(donor, canvas_h, canvas_w))
        canvas[lay["y"] : lay["y"] + h, lay["x"] : lay["x"] + w] = img
        return canvas
    if kind == "jpeg":
        return jpeg(img, G.iround(p["quality"]))
    if kind == "gn":
        noise = lay["rng"].normal(0.0, math.sqrt(p["variance"]), size=img.shape)
        return G.to_uint8(img.astype(np.float64) + noise)
    if kind == "gf":
        k = _gaussian_kernel(p["kernel"])
        out = convolve1d(img.astype(np.float64), k, axis=0, mode="mirror")
        out = convolve1d(out, k, axis=1, mode="mirror")
        return G.to_uint8(out)
    if kind == "color":
        return color_jitter(img, p["factor"])
    if kind == "dropout":
        src = _need(cover, "cover", kind, img.shape)
        n = math.floor(p["p"] / 100.0 * h * w)
        idx = lay["rng"].choice(h * w, size=n, replace=False)
        out = img.reshape(h * w, -1).copy()
        out[idx] = src.reshape(h * w, -1)[idx]
        return out.reshape(img.shape)
    if kind == "occlusion":
        oh, ow = lay["size"]
        donor = _need(clean, "clean", kind)
        if donor.shape[0] < oh or donor.shape[1] < ow:
            donor = G.to_uint8(G.resize(donor, h, w))
        rng = lay["rng"]
        dy = int(rng.integers(0, donor.shape[0] - oh + 1))
        dx = int(rng.integers(0, donor.shape[1] - ow + 1))
        out = img.copy()
        out[lay["y"] : lay["y"] + oh, lay["x"] : lay["x"] + ow] = donor[dy : dy + oh, dx : dx + ow]
        return out
    raise ValueError(f"unknown attack kind {kind!r}")


def apply_combined(img: np.ndarray, specs, cover=None, clean=None, other=None) -> np.ndarray:
    """Apply ``specs`` left to right. Dropout after a geometric step has no aligned
    cover and is rejected by the size check."""
    specs = list(specs)
    if not specs:
        raise ValueError("combined attack needs at least one component")
    out = np.asarray(img)
    for s in specs:
        out = apply_attack(out, s, cover=cover, clean=clean, other=other)
    return out


def transform_mask(mask: np.ndarray, spec: AttackSpec) -> np.ndarray:
    """Push a ground-truth embedding mask through the same attack.

    Geometric steps move the mask exactly like the image; the PIP canvas and
    padding carry no watermark and stay empty. Non-geometric attacks, occlusion
    included, leave the mask where it was.
    """
    m = np.asarray(mask).astype(bool)
    if spec.kind == "combined":
        for s in spec.params["attacks"]:
            m = transform_mask(m, s)
        return m
    h, w = m.shape
    p = spec.params
    kind = spec.kind
    if kind not in GEOMETRIC:
        return m.copy()
    lay = _layout(spec, h, w)
    if kind == "resize":
        return G.resize(m.astype(np.float64), *lay["size"]) >= 0.5
    if kind == "crop":
        ch, cw = lay["size"]
        return m[lay["y"] : lay["y"] + ch, lay["x"] : lay["x"] + cw].copy()
    if kind == "rotate":
        return G.rotate(m.astype(np.float64), p["angle"]) >= 0.5
    if kind == "padding":
        return np.pad(m, ((p["top"], p["bottom"]), (p["left"], p["right"])))
    # pip
    out = np.zeros(lay["size"], dtype=bool)
    out[lay["y"] : lay["y"] + h, lay["x"] : lay["x"] + w] = m
    return out


def collude(x1: np.ndarray, x2: np.ndarray, mode: str) -> np.ndarray:
    a = np.asarray(x1)
    b = np.asarray(x2)
    if a.shape != b.shape:
        raise ValueError(f"collusion inputs differ in shape: {a.shape} vs {b.shape}")
    if mode == "min":
        return np.minimum(a, b)
    if mode == "max":
        return np.maximum(a, b)
    if mode == "mean":
        # round half up
        return ((a.astype(np.uint16) + b.astype(np.uint16) + 1) // 2).astype(np.uint8)
    raise ValueError(f"unknown collusion mode {mode!r}")
