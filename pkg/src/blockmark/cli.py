"""Command line entry point: ``blockmark {embed,extract,attack,detect,bench}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io as bio
from . import report as rpt
from .attacks import apply_combined, load_specs, parse_spec
from .core import PSNR_CAP, bits_from_hex, psnr
from .pipeline import PAYLOAD_BITS, Config, bench, embed, extract, report_json
from .placement import PlacementRecord, key_id
from .sync import OracleDetector, ResidualEnergyDetector, detect


def _config(args) -> Config:
    cfg = Config.load(args.config) if args.config else Config()
    over = {}
    for name in ("q", "cap"):
        v = getattr(args, name, None)
        if v is not None:
            over[name] = v
    if over:
        cfg = Config.from_dict({**cfg.__dict__, **over})
    return cfg


def _sidecar(path) -> Path:
    return Path(path).with_suffix(".json")


def _attack_specs(text: str | None):
    if not text:
        return []
    if Path(text).is_file():
        return load_specs(text)
    return [parse_spec(text)]


def _detector(args):
    if args.detector == "oracle":
        rec_path = args.record or _sidecar(args.input)
        if not Path(rec_path).is_file():
            raise SystemExit(f"oracle detector needs a placement record; {rec_path} not found")
        record = PlacementRecord.load(rec_path)
        if args.key is not None and record.key_id and record.key_id != key_id(args.key):
            logging.warning("record %s was written for a different key", rec_path)
        return OracleDetector(record, _attack_specs(args.attack))
    if args.key is None:
        raise SystemExit("the residual detector needs --key")
    return ResidualEnergyDetector(args.key)


def cmd_embed(args) -> int:
    cfg = _config(args)
    cover = bio.read_image(args.input)
    payload = bits_from_hex(args.payload, PAYLOAD_BITS)
    wm, record = embed(cover, payload, args.key, cfg, args.seed, Path(args.input).name)
    out = Path(args.output)
    if out.suffix.lower() != ".png":
        logging.warning("writing PNG data to %s; lossy formats would damage the watermark", out)
    wm_bytes = bio.write_png(out, wm)
    record.save(_sidecar(out))
    p = psnr(wm, cover)
    print(f"blocks={len(record.rects)} psnr={p:.2f}{' (capped)' if p >= PSNR_CAP else ''} "
          f"bytes={wm_bytes} record={_sidecar(out)}")
    return 0


def cmd_extract(args) -> int:
    cfg = _config(args)
    img = bio.read_image(args.input)
    rep = extract(img, args.key, _detector(args), cfg)
    print(json.dumps(rep.to_dict(), indent=2))
    return 0 if rep.found else 1


def cmd_attack(args) -> int:
    img = bio.read_image(args.input)
    specs = _attack_specs(args.spec)
    cover = bio.read_image(args.cover) if args.cover else None
    clean = bio.read_image(args.clean) if args.clean else cover
    other = bio.read_image(args.other) if args.other else None
    out = apply_combined(img, specs, cover=cover, clean=clean, other=other)
    bio.write_png(args.output, out)
    print(json.dumps([s.to_dict() for s in specs]))
    return 0


def cmd_detect(args) -> int:
    img = bio.read_image(args.input)
    cfg = _config(args)
    mask = detect(img, _detector(args), cfg.tile_size)
    bio.write_mask(args.output, mask)
    print(f"masked_pixels={int(mask.sum())} of {mask.size}")
    return 0


def cmd_bench(args) -> int:
    cfg = _config(args)
    attacks = [ln.split("#")[0].strip() for ln in Path(args.attacks).read_text().splitlines()]
    attacks = [a for a in attacks if a]
    report, timing = bench(args.dataset, attacks, cfg, args.master_seed, args.detector, args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report_json(report))
    (out / "report.csv").write_text(rpt.render_csv(report))
    (out / "report.txt").write_text(rpt.render_table(report))
    (out / "timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")
    rpt.plot_accuracy(report, out / "accuracy.png")
    print("=== bench ===")
    print(rpt.render_table(report, timing), end="")
    print("=== end ===")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blockmark", description="Dispersed block watermarking toolkit")
    ap.add_argument("--config", help="YAML/JSON config file")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="embed a 22-bit payload")
    p.add_argument("input")
    p.add_argument("output", help="watermarked PNG; the placement record goes next to it as .json")
    p.add_argument("--payload", required=True, help="22-bit payload as hex, e.g. 3a5f01")
    p.add_argument("--key", type=int, required=True)
    p.add_argument("--seed", type=int, default=0, help="placement seed")
    p.add_argument("--q", type=float, help="area proportion in percent")
    p.add_argument("--cap", type=int, help="maximum block count")
    p.set_defaults(func=cmd_embed)

    for name, fn, helptext in (("extract", cmd_extract, "decode the message"),
                               ("detect", cmd_detect, "write the detection mask")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("input")
        if name == "detect":
            p.add_argument("output", help="1-bit PNG mask")
        p.add_argument("--key", type=int)
        p.add_argument("--detector", choices=("oracle", "residual"), default="residual")
        p.add_argument("--record", help="placement record for the oracle detector (default: input.json)")
        p.add_argument("--attack", help="attack spec or file applied to the image, for the oracle")
        p.set_defaults(func=fn)

    p = sub.add_parser("attack", help="apply an attack spec")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("spec", help='spec string such as "rotate:seed=3" or "crop&jpeg:seed=1", or a spec file')
    p.add_argument("--cover", help="unwatermarked cover (dropout)")
    p.add_argument("--clean", help="clean donor image (pip, occlusion); defaults to --cover")
    p.add_argument("--other", help="second watermarked copy (collusion)")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("bench", help="robustness bench over a dataset")
    p.add_argument("dataset")
    p.add_argument("attacks", help="file with one attack spec per line")
    p.add_argument("out")
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--detector", choices=("oracle", "residual"), default="oracle")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "extract" and args.key is None:
        raise SystemExit("extract needs --key")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
