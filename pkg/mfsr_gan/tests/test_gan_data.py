"""Dataset reading and packed-RAW demosaicing, checked against the engine CLI."""

import numpy as np
import pytest
import torch

from gan_fixtures import make_dataset, read_rgb16_codes, run_engine, write_raw16

from mfsr_gan import (
    BurstFolder,
    DatasetError,
    load_dataset,
    nn_demosaic_np,
    nn_demosaic_torch,
    unpack_torch,
)

CFAS = ["RGGB", "BGGR", "GRBG", "GBRG"]


@pytest.fixture()
def rng():
    return np.random.default_rng(20240814)


def test_reader_loads_engine_output(tmp_path, rng):
    out = make_dataset(tmp_path, rng, scenes=2, size=32, frames=4, patch_size=16)
    records = load_dataset(out)
    assert len(records) == 2
    for rec in records:
        assert rec.frames.shape == (4, 4, 4, 4)
        assert rec.gt.shape == (3, 16, 16)
        assert rec.frames.dtype == np.float32
        assert rec.gt.dtype == np.float32
        assert rec.frames.min() >= 0.0 and rec.frames.max() <= 1.0
        assert rec.gt.min() >= 0.0 and rec.gt.max() <= 1.0
        assert rec.meta["lr_cfa"] in CFAS

    folder = BurstFolder(out)
    assert len(folder) == 2
    frames, gt = folder[0]
    assert isinstance(frames, torch.Tensor) and frames.dtype == torch.float32
    assert tuple(frames.shape) == (4, 4, 4, 4)
    assert tuple(gt.shape) == (3, 16, 16)
    assert folder.cfa in CFAS


def test_reader_verifies_checksums(tmp_path, rng):
    out = make_dataset(tmp_path, rng, scenes=1, size=32, frames=2, patch_size=16)
    victim = sorted(out.glob("sample_*/frame_*.raw4"))[0]
    blob = bytearray(victim.read_bytes())
    blob[0] ^= 0xFF
    victim.write_bytes(bytes(blob))
    with pytest.raises(DatasetError):
        load_dataset(out)
    # opting out of verification must still read the payload
    assert len(load_dataset(out, verify=False)) == 1


def test_reader_rejects_missing_manifest(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "empty")


@pytest.mark.parametrize("cfa", CFAS)
def test_demosaic_parity_with_engine_cli(tmp_path, rng, cfa):
    black, white = 32, 2047
    codes = rng.integers(black, white + 1, size=(12, 16))
    raw = tmp_path / f"frame_{cfa}.raw16"
    write_raw16(raw, codes, cfa=cfa, black=black, white=white)
    out = tmp_path / f"rgb_{cfa}.rgb16"
    run_engine("demosaic", raw, out)
    engine_codes = read_rgb16_codes(out)

    plane = (codes.astype(np.float64) - black) / (white - black)
    mine = nn_demosaic_np(plane, cfa)
    mine_codes = np.round(np.clip(mine, 0.0, 1.0) * 65535.0).astype(np.uint16)
    assert np.array_equal(mine_codes, engine_codes)


@pytest.mark.parametrize("cfa", CFAS)
def test_torch_demosaic_matches_numpy(rng, cfa):
    plane = rng.random((10, 14))
    ref = nn_demosaic_np(plane, cfa)
    got = nn_demosaic_torch(torch.from_numpy(plane), cfa)
    assert tuple(got.shape) == (3, 10, 14)
    assert np.array_equal(got.numpy().transpose(1, 2, 0), ref)
    # float32 batched path stays within rounding of the float64 reference
    batch = torch.from_numpy(plane).float().expand(2, 3, 10, 14).contiguous()
    got32 = nn_demosaic_torch(batch, cfa)
    assert tuple(got32.shape) == (2, 3, 3, 10, 14)
    assert np.allclose(got32[1, 2].numpy().transpose(1, 2, 0), ref, atol=1e-6)


def test_unpack_matches_manual_interleave(rng):
    frames = torch.from_numpy(rng.random((2, 4, 3, 5), dtype=np.float32))
    mosaic = unpack_torch(frames, cfa="RGGB")
    assert tuple(mosaic.shape) == (2, 6, 10)
    ch = frames.numpy()
    # RGGB packing order: R, G (R row), G (B row), B
    for n in range(2):
        expect = np.zeros((6, 10), dtype=np.float32)
        expect[0::2, 0::2] = ch[n, 0]
        expect[0::2, 1::2] = ch[n, 1]
        expect[1::2, 0::2] = ch[n, 2]
        expect[1::2, 1::2] = ch[n, 3]
        assert np.array_equal(mosaic[n].numpy(), expect)


def test_unpack_respects_cfa_layout(rng):
    frames = torch.from_numpy(rng.random((4, 2, 2), dtype=np.float32))
    mosaic = unpack_torch(frames, cfa="BGGR").numpy()
    # BGGR: blue top-left, red bottom-right; packed order is R, G in the
    # red row (bottom), G in the blue row (top), B
    assert mosaic[0, 0] == frames[3, 0, 0]
    assert mosaic[1, 1] == frames[0, 0, 0]
    assert mosaic[1, 0] == frames[1, 0, 0]
    assert mosaic[0, 1] == frames[2, 0, 0]


@pytest.mark.parametrize("cfa", CFAS)
def test_constant_mosaic_demosaics_to_constant(cfa):
    plane = np.full((8, 8), 0.375)
    rgb = nn_demosaic_np(plane, cfa)
    assert np.array_equal(rgb, np.full((8, 8, 3), 0.375))
