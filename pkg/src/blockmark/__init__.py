"""Dispersed block watermarking with geometric synchronization and message fusion."""

from .attacks import AttackSpec, apply_attack, parse_spec, sample_attack
from .codec import BlockCodec, SpreadSpectrumCodec
from .core import bit_accuracy, crc8_encode, crc8_verify, ms_ssim, psnr
from .fusion import FusionConfig, fuse
from .pipeline import Config, ExtractionReport, bench, embed, extract
from .placement import PlacementRecord, plan_placements
from .sync import OracleDetector, ResidualEnergyDetector, detect

__all__ = [
    "AttackSpec", "apply_attack", "parse_spec", "sample_attack",
    "BlockCodec", "SpreadSpectrumCodec",
    "bit_accuracy", "crc8_encode", "crc8_verify", "ms_ssim", "psnr",
    "FusionConfig", "fuse",
    "Config", "ExtractionReport", "bench", "embed", "extract",
    "PlacementRecord", "plan_placements",
    "OracleDetector", "ResidualEnergyDetector", "detect",
]
