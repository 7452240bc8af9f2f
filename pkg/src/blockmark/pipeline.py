"""End-to-end embed / extract and the robustness bench."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import io as bio
from .attacks import COLLUSION_KINDS, AttackSpec, apply_attack, derive_seed, parse_spec
from .codec import DEFAULT_CODEC, BlockCodec, SpreadSpectrumCodec, binarize
from .core import CRC_BITS, MSG_LEN, bit_accuracy, bits_to_hex, byte_increase_rate, crc8_encode, crc8_verify, psnr
from .fusion import FusionConfig, fuse
from .placement import PlacementRecord, embed_image, plan_placements
from .sync import (
    Detector,
    GeometricEstimate,
    NoWatermarkFound,
    OracleDetector,
    ResidualEnergyDetector,
    detect,
    estimate_geometry,
    extract_boxes,
    extract_synchronized_blocks,
    rectified_support,
    rectify,
)

log = logging.getLogger(__name__)

PAYLOAD_BITS = MSG_LEN - CRC_BITS
CRC_IDS = ("crc8-0x07",)


@dataclass(frozen=True)
class Config:
    block_size: int = 128
    tile_size: int = 512
    q: float = 25.0
    cap: int = 20
    target_psnr: float = 35.0
    T: int = 5
    K: int = 2
    crc: str = "crc8-0x07"

    def __post_init__(self):
        if self.crc not in CRC_IDS:
            raise ValueError(f"unsupported crc {self.crc!r}; known: {', '.join(CRC_IDS)}")
        if self.block_size < 8 or self.block_size % 8:
            raise ValueError("block_size must be a positive multiple of 8")
        if self.tile_size < 1:
            raise ValueError("tile_size must be positive")
        FusionConfig(self.T, self.K)

    @property
    def fusion(self) -> FusionConfig:
        return FusionConfig(self.T, self.K)

    @property
    def codec(self) -> BlockCodec:
        if self.block_size == DEFAULT_CODEC.block_size:
            return DEFAULT_CODEC
        return SpreadSpectrumCodec(block_size=self.block_size)

    @classmethod
    def from_dict(cls, d: dict) -> "Config":
        d = dict(d or {})
        fusion = d.pop("fusion", None) or {}
        d.setdefault("T", fusion.get("T", cls.T))
        d.setdefault("K", fusion.get("K", cls.K))
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "Config":
        """Read a YAML or JSON file (JSON parses as YAML)."""
        return cls.from_dict(yaml.safe_load(Path(path).read_text()))


DEFAULT_CONFIG = Config()


# --- embed -------------------------------------------------------------------------


def embed(cover: np.ndarray, payload, key: int, config: Config = DEFAULT_CONFIG, seed: int = 0,
          image_id: str = "") -> tuple[np.ndarray, PlacementRecord]:
    """Frame the 22-bit payload with CRC-8 and embed it in randomly placed blocks."""
    cover = np.asarray(cover)
    if cover.ndim != 3 or cover.shape[2] != 3:
        raise ValueError(f"cover must be an HxWx3 image, got shape {cover.shape}")
    h, w = cover.shape[:2]
    if h < config.block_size or w < config.block_size:
        raise ValueError(f"cover {h}x{w} is smaller than one {config.block_size}x{config.block_size} block")
    frame = crc8_encode(payload, MSG_LEN).bits
    plan = plan_placements(h, w, config.q, config.cap, seed, config.block_size)
    return embed_image(cover, frame, key, plan, config.codec, config.target_psnr, image_id)


# --- extract -----------------------------------------------------------------------


@dataclass
class ExtractionReport:
    status: str  # "found" or "not_found"
    fused: np.ndarray | None = None  # hard bits
    block_softs: list = field(default_factory=list)
    block_crc: list = field(default_factory=list)
    fused_crc: bool = False
    estimate: GeometricEstimate | None = None
    reason: str = ""

    @property
    def n_blocks(self) -> int:
        return len(self.block_softs)

    @property
    def found(self) -> bool:
        return self.status == "found"

    @property
    def verified_frame(self) -> np.ndarray | None:
        """First CRC-passing message: the fused one, else the first passing block."""
        if self.fused_crc:
            return self.fused
        for soft, ok in zip(self.block_softs, self.block_crc):
            if ok:
                return binarize(soft)
        return None

    @property
    def payload(self) -> np.ndarray | None:
        frame = self.verified_frame
        return None if frame is None else frame[:PAYLOAD_BITS]

    def to_dict(self) -> dict:
        est = None
        if self.estimate is not None:
            est = {"angle": self.estimate.angle, "scale_x": self.estimate.scale_x, "scale_y": self.estimate.scale_y}
        return {
            "status": self.status,
            "n_blocks": self.n_blocks,
            "fused": None if self.fused is None else "".join(map(str, self.fused.tolist())),
            "fused_crc": self.fused_crc,
            "payload_hex": None if self.payload is None else bits_to_hex(self.payload),
            "blocks": [
                {"bits": "".join(map(str, binarize(s).tolist())), "crc": ok}
                for s, ok in zip(self.block_softs, self.block_crc)
            ],
            "estimate": est,
            "reason": self.reason,
        }


def extract(img: np.ndarray, key: int, detector: Detector | None = None,
            config: Config = DEFAULT_CONFIG) -> ExtractionReport:
    """Locate, rectify, decode and fuse. Absence of a watermark is a status, not an error."""
    img = np.asarray(img)
    codec = config.codec
    if detector is None:
        detector = ResidualEnergyDetector(key, codec.msg_len, config.block_size)
    mask = detect(img, detector, config.tile_size)
    min_area = 0.25 * config.block_size**2
    boxes = extract_boxes(mask, min_area)
    try:
        est = estimate_geometry(boxes, config.block_size)
    except NoWatermarkFound as exc:
        return ExtractionReport("not_found", reason=str(exc))
    rect_img, rect_mask = rectify(img, mask, est)
    support = rectified_support(img.shape[0], img.shape[1], est)
    blocks = extract_synchronized_blocks(rect_img, rect_mask, config.block_size, min_area, support=support)
    if not blocks:
        return ExtractionReport("not_found", estimate=est, reason="no block survived rectification")
    # a block cut by the image edge decodes from partial data and can agree with
    # another cut block on the same wrong bit; only fall back to them when
    # nothing whole survived
    whole = [b for b in blocks if not b.box.truncated]
    blocks = whole or blocks
    softs = [codec.decode_block(b.pixels, key) for b in blocks]
    block_crc = [crc8_verify(binarize(s)) for s in softs]
    fused = fuse(softs, config.fusion)
    return ExtractionReport(
        status="found",
        fused=fused,
        block_softs=softs,
        block_crc=block_crc,
        fused_crc=crc8_verify(fused),
        estimate=est,
    )


# --- bench -------------------------------------------------------------------------


@dataclass(frozen=True)
class ImageKeys:
    key: int
    payload: np.ndarray
    placement_seed: int


def image_keys(master_seed: int, index: int, role: str = "primary") -> ImageKeys:
    """Key, payload and placement seed for one bench image, independent of the attack list."""
    rng = np.random.Generator(np.random.PCG64(derive_seed(master_seed, index, role)))
    key = int(rng.integers(1, 2**31))
    payload = rng.integers(0, 2, PAYLOAD_BITS).astype(np.uint8)
    return ImageKeys(key, payload, int(rng.integers(0, 2**31)))


def _bench_image(args) -> dict:
    index, path, attack_texts, config, master_seed, detector_kind = args
    try:
        cover = bio.read_image(path)
        primary = image_keys(master_seed, index)
        wm, record = embed(cover, primary.payload, primary.key, config, primary.placement_seed, Path(path).name)
    except Exception as exc:  # unreadable or too small: counted, not fatal
        return {"index": index, "skipped": f"{type(exc).__name__}: {exc}"}
    frame = crc8_encode(primary.payload).bits
    quality = {
        "psnr": psnr(wm, cover),
        "byte_increase_rate": byte_increase_rate(len(bio.png_bytes(cover)), len(bio.png_bytes(wm))),
    }
    second = None
    rows = {}
    for text in attack_texts:
        spec = parse_spec(text, seed=derive_seed(master_seed, index, text))
        other = None
        if spec.kind in COLLUSION_KINDS:
            if second is None:
                alt = image_keys(master_seed, index, "collusion")
                second, _ = embed(cover, alt.payload, alt.key, config, alt.placement_seed)
            other = second
        attacked = apply_attack(wm, spec, cover=cover, clean=cover, other=other)
        if detector_kind == "oracle":
            det = OracleDetector(record, [spec])
        else:
            det = ResidualEnergyDetector(primary.key, MSG_LEN, config.block_size)
        t0 = time.perf_counter()
        rep = extract(attacked, primary.key, det, config)
        elapsed = time.perf_counter() - t0
        if rep.found:
            acc = bit_accuracy(rep.fused, frame)
        else:
            acc = 0.5  # nothing decoded: chance level
        verified = rep.verified_frame
        rows[text] = {
            "bit_accuracy": acc,
            "check": bool(verified is not None and np.array_equal(verified, frame)),
            "found": rep.found,
            "n_blocks": rep.n_blocks,
            "seconds": elapsed,
        }
    return {"index": index, "name": Path(path).name, "quality": quality, "rows": rows}


def bench(dataset_dir, attacks, config: Config = DEFAULT_CONFIG, master_seed: int = 0,
          detector: str = "oracle", workers: int = 1) -> tuple[dict, dict]:
    """Run every attack on every image.

    Returns ``(report, timing)``. The report holds only deterministic
    quantities; wall-clock seconds per attack are kept apart in ``timing``.
    """
    if detector not in ("oracle", "residual"):
        raise ValueError(f"detector must be 'oracle' or 'residual', got {detector!r}")
    paths = bio.list_images(dataset_dir)
    if not paths:
        raise ValueError(f"no images found in {dataset_dir}")
    texts = [a if isinstance(a, str) else a.kind for a in attacks]
    if not texts:
        raise ValueError("attack list is empty")
    if len(set(texts)) != len(texts):
        raise ValueError("attack list contains duplicates")
    jobs = [(i, str(p), texts, config, master_seed, detector) for i, p in enumerate(paths)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_bench_image, jobs))
    else:
        results = [_bench_image(j) for j in jobs]
    results.sort(key=lambda r: r["index"])

    ok = [r for r in results if "skipped" not in r]
    skipped = [r for r in results if "skipped" in r]
    for r in skipped:
        log.warning("skipped %s: %s", paths[r["index"]].name, r["skipped"])
    if not ok:
        raise ValueError("every image in the dataset was skipped")
    mean_psnr = float(np.mean([r["quality"]["psnr"] for r in ok]))
    mean_bir = float(np.mean([r["quality"]["byte_increase_rate"] for r in ok]))
    rows, timing = [], {}
    for text in texts:
        per = [r["rows"][text] for r in ok]
        rows.append({
            "attack": text,
            "bit_accuracy": float(np.mean([p["bit_accuracy"] for p in per])),
            "bit_check_accuracy": float(np.mean([p["check"] for p in per])),
            "found_rate": float(np.mean([p["found"] for p in per])),
            "mean_blocks": float(np.mean([p["n_blocks"] for p in per])),
            "psnr": mean_psnr,
            "byte_increase_rate": mean_bir,
        })
        timing[text] = float(sum(p["seconds"] for p in per))
    report = {
        "master_seed": int(master_seed),
        "detector": detector,
        "config": asdict(config),
        "images": len(ok),
        "skipped": len(skipped),
        "rows": rows,
    }
    return report, timing


def report_json(report: dict) -> str:
    # fixed float formatting keeps the file byte-stable across platforms
    def fix(o):
        if isinstance(o, float):
            return float(f"{o:.10g}")
        if isinstance(o, dict):
            return {k: fix(v) for k, v in o.items()}
        if isinstance(o, list):
            return [fix(v) for v in o]
        return o

    return json.dumps(fix(report), indent=2, sort_keys=True) + "\n"
