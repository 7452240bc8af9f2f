"""Acceptance criteria 1 to 9, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v``; the verdicts are repeated in
the terminal summary. Criterion 3 is the slow one (a few minutes).
"""

import time

import numpy as np
import pytest

from acceptance_log import verdict
from blockmark import io as bio
from blockmark.attacks import AttackSpec, COLLUSION_KINDS, apply_attack, derive_seed, sample_attack
from blockmark.cli import main
from blockmark.core import MSG_LEN, bit_accuracy, crc8_encode, crc8_verify, psnr
from blockmark.datasets import synthetic_cover, write_synthetic_dataset
from blockmark.fusion import FusionConfig, fuse_many
from blockmark.pipeline import PAYLOAD_BITS, embed, extract
from blockmark.placement import embed_image, plan_placements
from blockmark.sync import (
    OracleDetector,
    detect,
    estimate_geometry,
    extract_boxes,
    merge_masks,
    pad_and_split,
)
from oracles import fuse_bitmask

pytestmark = pytest.mark.acceptance


def payload_for(seed):
    return np.random.default_rng(seed).integers(0, 2, PAYLOAD_BITS).astype(np.uint8)


@pytest.fixture(scope="module")
def covers100():
    return [synthetic_cover(5000 + i) for i in range(100)]


def test_1_identity_round_trip(covers100):
    t0 = time.perf_counter()
    good = 0
    for i, cover in enumerate(covers100):
        payload = payload_for(i)
        wm, record = embed(cover, payload, key=10 + i, seed=i)
        rep = extract(wm, 10 + i, OracleDetector(record))
        frame = crc8_encode(payload).bits
        good += rep.found and rep.fused_crc and bit_accuracy(rep.fused, frame) == 1.0
    elapsed = time.perf_counter() - t0
    ok = good == 100 and elapsed < 60
    verdict(1, ok, f"{good}/100 exact with CRC pass, {elapsed:.1f} s (limit 60 s)")
    assert ok


def all_lists(n, length):
    """Every list of n binary messages of the given length, as ints and as a (B, n, length) array."""
    idx = np.arange(2 ** (n * length), dtype=np.int64)
    ints = np.stack([(idx >> (length * j)) & (2**length - 1) for j in range(n)], axis=1)
    bits = ((ints[:, :, None] >> np.arange(length)) & 1).astype(np.float64)
    return ints, bits


def test_2_fusion_oracle_equivalence():
    t0 = time.perf_counter()
    cases = mismatches = 0
    for n in range(1, 5):
        for length in range(1, 6):
            ints, bits = all_lists(n, length)
            expected = [fuse_bitmask(row, length) for row in ints.tolist()]
            weights = 1 << np.arange(length)
            for T in range(6):
                for K in (1, 2, 3):
                    got = np.concatenate([
                        fuse_many(bits[i : i + 65536], FusionConfig(T, K)) @ weights
                        for i in range(0, len(bits), 65536)
                    ])
                    want = np.array([e[(T, K)] for e in expected])
                    mismatches += int((got != want).sum())
                    cases += len(want)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 300
    verdict(2, ok, f"{mismatches} mismatches over {cases} cases, {elapsed:.1f} s (limit 300 s)")
    assert ok


def test_3_geometry_recovery(covers100):
    worst_angle = worst_scale = 0.0
    accs = []
    for i in range(200):
        cover = covers100[i % 100]
        payload = payload_for(1000 + i)
        wm, record = embed(cover, payload, key=77, seed=i)
        resize = sample_attack("resize", derive_seed(3, i, "resize"))
        rotate = sample_attack("rotate", derive_seed(3, i, "rotate"))
        attacked = apply_attack(apply_attack(wm, resize), rotate)
        mask = detect(attacked, OracleDetector(record, [resize, rotate]))
        est = estimate_geometry(extract_boxes(mask))
        r1, r2 = resize.params["r1"], resize.params["r2"]  # vertical, horizontal
        worst_angle = max(worst_angle, abs(est.angle - rotate.params["angle"]))
        worst_scale = max(worst_scale, abs(est.scale_y - r1) / r1, abs(est.scale_x - r2) / r2)
        rep = extract(attacked, 77, OracleDetector(record, [resize, rotate]))
        accs.append(bit_accuracy(rep.fused, crc8_encode(payload).bits) if rep.found else 0.5)
    mean_acc = float(np.mean(accs))
    ok = worst_angle <= 1.0 and worst_scale <= 0.05 and mean_acc >= 0.98
    verdict(3, ok, f"max |angle err| {worst_angle:.3f} deg, max rel scale err {worst_scale:.4f}, "
                   f"mean fused bit accuracy {mean_acc:.4f} over 200 draws")
    assert ok


def intact_blocks(record, spec, shape):
    """Blocks whose every pixel comes through the attack untouched by the occluder or the crop."""
    h, w = shape
    count = 0
    for x, y, bh, bw in record.plan.rects:
        probe = np.zeros((h, w, 3), np.uint8)
        probe[y : y + bh, x : x + bw] = 255
        out = apply_attack(probe, spec, clean=np.zeros_like(probe), cover=np.zeros_like(probe))
        count += int((out[..., 0] == 255).sum()) == bh * bw
    return count


def test_4_crop_and_occlusion_survival(covers100):
    survived = exact_when_survived = with_survivor = 0
    for i in range(500):
        cover = covers100[i % 100]
        payload = payload_for(2000 + i)
        frame = crc8_encode(payload).bits
        wm, record = embed(cover, payload, key=5, seed=i)
        assert len(record.rects) == 4
        kind = "crop" if i % 2 == 0 else "occlusion"
        spec = sample_attack(kind, derive_seed(4, i, kind))
        attacked = apply_attack(wm, spec, clean=cover)
        if intact_blocks(record, spec, cover.shape[:2]) == 0:
            continue
        survived += 1
        rep = extract(attacked, 5, OracleDetector(record, [spec]))
        with_survivor += 1
        exact_when_survived += rep.found and np.array_equal(rep.fused, frame)
    rate = survived / 500
    ok = rate >= 0.95 and exact_when_survived == with_survivor
    verdict(4, ok, f"survival {survived}/500 ({rate:.1%}, need 95%), "
                   f"exact fused message in {exact_when_survived}/{with_survivor} surviving trials")
    assert ok


def test_5_crc():
    rng = np.random.default_rng(55)
    single_fail = True
    for _ in range(1000):
        frame = crc8_encode(rng.integers(0, 2, PAYLOAD_BITS)).bits
        for k in range(MSG_LEN):
            bad = frame.copy()
            bad[k] ^= 1
            single_fail &= not crc8_verify(bad)
    silent = 0
    trials = 10_000
    for _ in range(trials):
        frame = crc8_encode(rng.integers(0, 2, PAYLOAD_BITS)).bits
        err = np.zeros(MSG_LEN, np.uint8)
        while not err.any():
            err = rng.integers(0, 2, MSG_LEN).astype(np.uint8)
        silent += crc8_verify(frame ^ err)
    rate = silent / trials
    ok = single_fail and rate <= 0.006
    verdict(5, ok, f"single-bit flips all rejected: {single_fail}; silent passes {silent}/{trials} ({rate:.2%}, limit 0.6%)")
    assert ok


def test_6_psnr(tmp_path, covers100):
    block_psnrs = []
    for i, cover in enumerate(covers100[:25]):
        wm, record = embed(cover, payload_for(i), key=3, seed=i)
        bio.write_png(tmp_path / "w.png", wm)
        back = bio.read_image(tmp_path / "w.png")
        for x, y, h, w in record.plan.rects:
            block_psnrs.append(psnr(back[y : y + h, x : x + w], cover[y : y + h, x : x + w]))
    whole = []
    for i in range(3):
        cover = synthetic_cover(9000 + i, 1024, 1024)
        wm, _ = embed(cover, payload_for(i), key=3, seed=i)
        whole.append(psnr(wm, cover))
    lo, hi = min(block_psnrs), max(block_psnrs)
    ok = lo >= 34.5 and hi <= 35.5 and min(whole) > 40
    verdict(6, ok, f"{len(block_psnrs)} blocks in [{lo:.3f}, {hi:.3f}] dB (need 35 +- 0.5); "
                   f"1024x1024 whole-image min {min(whole):.2f} dB (need > 40)")
    assert ok


def test_7_pad_split_exactness():
    rng = np.random.default_rng(7)
    sizes = [(512, 512), (1024, 512), (512, 1536), (1, 1), (511, 513), (100, 200)]
    while len(sizes) < 1000:
        sizes.append(tuple(int(v) for v in rng.integers(1, 1600, 2)))
    failures = 0
    for h, w in sizes:
        mask = rng.random((h, w)) < 0.5
        failures += not np.array_equal(merge_masks(pad_and_split(mask), h, w), mask)
    verdict(7, failures == 0, f"{len(sizes) - failures}/{len(sizes)} split-merge round trips exact")
    assert failures == 0


def test_8_collusion(covers100):
    disjoint = recovered = 0
    for i, cover in enumerate(covers100):
        p1, p2 = payload_for(3000 + i), payload_for(4000 + i)
        wm1, rec1 = embed(cover, p1, key=101, seed=i)
        plan2 = None
        for attempt in range(20):
            try:
                plan2 = plan_placements(512, 512, seed=derive_seed(8, i, attempt), avoid=rec1.plan.rects)
                break
            except ValueError:
                continue
        if plan2 is None:
            continue  # no disjoint second placement exists for this draw
        wm2, rec2 = embed_image(cover, crc8_encode(p2).bits, 202, plan2)
        for kind in COLLUSION_KINDS:
            disjoint += 1
            mixed = apply_attack(wm1, AttackSpec(kind), other=wm2)
            r1 = extract(mixed, 101, OracleDetector(rec1))
            r2 = extract(mixed, 202, OracleDetector(rec2))
            recovered += (r1.found and r2.found
                          and np.array_equal(r1.fused, crc8_encode(p1).bits)
                          and np.array_equal(r2.fused, crc8_encode(p2).bits))
    rate = recovered / disjoint if disjoint else 0.0
    ok = disjoint > 0 and rate >= 0.95
    verdict(8, ok, f"both messages recovered in {recovered}/{disjoint} disjoint min/max/mean cases ({rate:.1%}, need 95%)")
    assert ok


def test_9_determinism(tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    write_synthetic_dataset(data, 3, seed=9)
    attacks = tmp_path / "attacks.txt"
    attacks.write_text("\n".join([
        "identity", "jpeg", "resize", "crop", "rotate", "padding", "gn", "gf", "color", "dropout",
        "pip", "occlusion", "crop&jpeg", "resize&rotate", "collusion-mean", "collusion-min", "collusion-max",
    ]) + "\n")
    names = ("report.json", "report.csv", "report.txt", "accuracy.png")
    runs = []
    for run in ("a", "b"):
        assert main(["bench", str(data), str(attacks), str(tmp_path / run), "--master-seed", "2024"]) == 0
        runs.append({n: (tmp_path / run / n).read_bytes() for n in names})
    same = runs[0] == runs[1]
    verdict(9, same, f"{sum(runs[0][n] == runs[1][n] for n in names)}/{len(names)} report files byte-identical across two runs")
    assert same
