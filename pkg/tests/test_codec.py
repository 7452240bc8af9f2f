import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blockmark.attacks import collude
from blockmark.codec import (
    DEFAULT_CODEC,
    binarize,
    carriers,
    decode_block,
    embed_block,
    luminance,
    solve_margin,
)
from blockmark.core import psnr


def _block(cover, i=0):
    y, x = divmod(i, 4)
    return np.ascontiguousarray(cover[128 * y : 128 * (y + 1), 128 * x : 128 * (x + 1)])


def test_binarize_threshold():
    assert binarize([0.9, 0.1, 0.5]).tolist() == [1, 0, 1]
    assert binarize(np.zeros(5)).tolist() == [0] * 5
    assert binarize(np.ones(5)).tolist() == [1] * 5


def test_carriers_are_orthonormal():
    c = carriers(7)
    assert c.shape == (30, 128 * 128)
    assert np.allclose(c @ c.T, np.eye(30), atol=1e-10)
    with pytest.raises(ValueError):
        c[0, 0] = 1.0  # cached arrays are read-only


def test_solve_margin_hits_energy():
    r = np.random.default_rng(0)
    m = r.normal(0, 50, 30)
    for energy in (1.0, 1e3, 3.4e5):
        beta = solve_margin(m, energy)
        assert np.sum(np.maximum(0, beta - m) ** 2) == pytest.approx(energy, rel=1e-9)


@given(st.integers(0, 5), st.integers(0, 15), st.integers(0, 2**40), st.lists(st.integers(0, 1), min_size=30, max_size=30))
def test_round_trip_and_psnr(covers, ci, bi, key, msg):
    cover = _block(covers[ci], bi)
    wm = embed_block(cover, msg, key)
    assert binarize(decode_block(wm, key)).tolist() == msg
    assert 34.5 <= psnr(wm, cover) <= 35.5


def test_soft_values_on_correct_side(covers):
    msg = np.random.default_rng(3).integers(0, 2, 30)
    soft = decode_block(embed_block(_block(covers[0], 5), msg, 11), 11)
    assert np.all((soft >= 0) & (soft <= 1))
    assert np.all(np.where(msg == 1, soft > 0.5, soft < 0.5))


def test_embed_deterministic(covers):
    cover = _block(covers[1], 2)
    msg = [1, 0] * 15
    assert np.array_equal(embed_block(cover, msg, 5), embed_block(cover, msg, 5))


def test_target_psnr_tracks_request(covers):
    cover = _block(covers[2], 7)
    for target in (30.0, 35.0, 40.0):
        assert abs(psnr(embed_block(cover, [1] * 30, 9, target), cover) - target) <= 0.5


def test_wrong_shapes_rejected(covers):
    with pytest.raises(ValueError):
        embed_block(covers[0][:64, :64], [0] * 30, 1)
    with pytest.raises(ValueError):
        embed_block(_block(covers[0]), [0] * 29, 1)
    with pytest.raises(ValueError):
        decode_block(covers[0][:100, :128], 1)


def test_keys_give_near_orthogonal_residuals(covers):
    r = np.random.default_rng(5)
    cover = _block(covers[3], 9)
    corr = []
    for _ in range(100):
        k1, k2 = (int(v) for v in r.integers(1, 2**62, 2))
        msg = r.integers(0, 2, 30)
        a = DEFAULT_CODEC.residual(cover, msg, k1).ravel()
        b = DEFAULT_CODEC.residual(cover, msg, k2).ravel()
        corr.append(abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    assert max(corr) < 0.2


def test_random_blocks_decode_at_chance():
    r = np.random.default_rng(6)
    msg = r.integers(0, 2, 30)
    hits = 0
    for i in range(1000):
        block = r.integers(0, 256, (128, 128, 3), dtype=np.uint8)
        hits += int((binarize(decode_block(block, 1000 + i)) == msg).sum())
    assert abs(hits / 30000 - 0.5) <= 0.05


def test_mean_collusion_of_block_still_decodes(covers):
    # the other copy is the clean cover, so the residual is halved
    cover = _block(covers[4], 3)
    msg = np.random.default_rng(8).integers(0, 2, 30)
    wm = embed_block(cover, msg, 77)
    assert np.array_equal(binarize(decode_block(collude(wm, cover, "mean"), 77)), msg)


def test_decision_invariant_to_residual_scaling(covers):
    cover = _block(covers[5], 4)
    msg = np.random.default_rng(9).integers(0, 2, 30)
    delta = DEFAULT_CODEC.residual(cover, msg, 3)
    c = carriers(3)
    base = luminance(cover).ravel()
    sign = np.where(msg == 1, 1.0, -1.0)
    push = c @ delta.ravel()
    assert np.all(push * sign >= 0)  # energy only ever pushes towards the message
    for s in (0.25, 1.0, 4.0):
        moved = c @ (base + s * delta.ravel()) - c @ base
        assert np.array_equal(np.sign(moved), np.sign(push))


def test_chroma_untouched(covers):
    cover = _block(covers[0], 6).astype(np.int16)
    wm = embed_block(cover.astype(np.uint8), [0, 1] * 15, 4).astype(np.int16)
    d = wm - cover
    # same offset on R, G, B apart from clipping
    inside = (cover > 2).all(axis=2) & (cover < 253).all(axis=2)
    assert np.all(np.abs(d[..., 0] - d[..., 1])[inside] <= 1)
    assert np.all(np.abs(d[..., 1] - d[..., 2])[inside] <= 1)
