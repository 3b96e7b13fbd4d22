"""Readers for the burstsynth dataset format, plus the demosaic used by the
model's input stage.

This package talks to the data engine only through its files: little-endian
u16 arrays with JSON sidecars (``.raw4`` packed Bayer frames, ``.rgb16``
ground truth) grouped into ``sample_NNNNN/`` directories under a
``manifest.json`` with sha256 checksums. Nothing here imports the engine.

The demosaic reimplements the engine's documented nearest-neighbour policy
exactly (green fill per tile position: (0,0) below, (0,1) left, (1,0) above,
(1,1) left; chroma sources at distance-1 ties step even coordinates +1 and
odd ones -1; reconstruction grouped as ``(g - g[src]) + m[src]``) so that
model inputs match the engine's own RGB conversion bit for bit — a parity
test drives the engine CLI on shared fixtures to hold this in place.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import torch

DATASET_FORMAT_VERSION = 1

# channel per 2x2 tile position, by CFA name (0=R, 1=G, 2=B)
CFA_TILES = {
    "RGGB": ((0, 1), (1, 2)),
    "BGGR": ((2, 1), (1, 0)),
    "GRBG": ((1, 0), (2, 1)),
    "GBRG": ((1, 2), (0, 1)),
}


class DatasetError(ValueError):
    pass


def _site_of(cfa: str, channel: int):
    tile = CFA_TILES[cfa]
    for ty in range(2):
        for tx in range(2):
            if tile[ty][tx] == channel:
                return ty, tx
    raise DatasetError(f"channel {channel} not present in {cfa}")


def pack_positions(cfa: str):
    """Tile positions of the packed channel order R, G(R row), G(B row), B."""
    ry, rx = _site_of(cfa, 0)
    by, bx = _site_of(cfa, 2)
    return (ry, rx), (ry, 1 - rx), (by, 1 - bx), (by, bx)


# ---------------------------------------------------------------------------
# demosaic
# ---------------------------------------------------------------------------


def _step_to_parity(coords: np.ndarray, parity: int) -> np.ndarray:
    stepped = np.where(coords % 2 == 0, coords + 1, coords - 1)
    return np.where(coords % 2 != parity, stepped, coords)


@lru_cache(maxsize=64)
def demosaic_maps(height: int, width: int, cfa: str):
    """Source-index maps implementing the engine's demosaic policy.

    Returns (gy, gx, ((ry, rx), (by, bx))): green-fill sources for every
    pixel, then chroma sources for the R and B channels.
    """
    if height % 2 or width % 2 or height < 2 or width < 2:
        raise DatasetError(f"mosaic dims must be even and >= 2, got {width}x{height}")
    tile = CFA_TILES[cfa]
    yy, xx = np.mgrid[0:height, 0:width]
    gy, gx = yy.copy(), xx.copy()
    for ty in range(2):
        for tx in range(2):
            if tile[ty][tx] == 1:
                continue
            mask = (yy % 2 == ty) & (xx % 2 == tx)
            if tx == 1:
                gx[mask] -= 1  # green to the left
            elif ty == 0:
                gy[mask] += 1  # green below
            else:
                gy[mask] -= 1  # green above
    chroma = []
    for channel in (0, 2):
        ty, tx = _site_of(cfa, channel)
        chroma.append((_step_to_parity(yy, ty), _step_to_parity(xx, tx)))
    return gy, gx, tuple(chroma)


def nn_demosaic_np(plane: np.ndarray, cfa: str) -> np.ndarray:
    """(H, W) normalised mosaic -> (H, W, 3) RGB, float64."""
    m = np.asarray(plane, dtype=np.float64)
    gy, gx, chroma = demosaic_maps(m.shape[0], m.shape[1], cfa)
    g = m[gy, gx]
    rgb = np.empty(m.shape + (3,), dtype=np.float64)
    rgb[..., 1] = g
    for channel, (sy, sx) in zip((0, 2), chroma):
        # grouped so the subtraction cancels exactly when g == g[sy, sx]
        rgb[..., channel] = (g - g[sy, sx]) + m[sy, sx]
    return rgb


_TORCH_MAPS: dict = {}


def _torch_maps(height: int, width: int, cfa: str, device: torch.device):
    key = (height, width, cfa, str(device))
    if key not in _TORCH_MAPS:
        gy, gx, chroma = demosaic_maps(height, width, cfa)
        as_t = lambda a: torch.as_tensor(a, dtype=torch.long, device=device)
        _TORCH_MAPS[key] = (
            as_t(gy),
            as_t(gx),
            tuple((as_t(sy), as_t(sx)) for sy, sx in chroma),
        )
    return _TORCH_MAPS[key]


def nn_demosaic_torch(mosaic: torch.Tensor, cfa: str) -> torch.Tensor:
    """(..., H, W) normalised mosaic -> (..., 3, H, W). Same source-index
    policy as nn_demosaic_np; pure gathers plus one grouped add."""
    h, w = mosaic.shape[-2:]
    gy, gx, chroma = _torch_maps(h, w, cfa, mosaic.device)
    g = mosaic[..., gy, gx]
    out = [None, g, None]
    for channel, (sy, sx) in zip((0, 2), chroma):
        out[channel] = (g - g[..., sy, sx]) + mosaic[..., sy, sx]
    return torch.stack(out, dim=-3)


def unpack_torch(frames: torch.Tensor, cfa: str = "RGGB") -> torch.Tensor:
    """(..., 4, h, w) packed channels -> (..., 2h, 2w) Bayer plane."""
    h, w = frames.shape[-2:]
    out = frames.new_empty(frames.shape[:-3] + (2 * h, 2 * w))
    for idx, (ty, tx) in enumerate(pack_positions(cfa)):
        out[..., ty::2, tx::2] = frames[..., idx, :, :]
    return out


# ---------------------------------------------------------------------------
# dataset files
# ---------------------------------------------------------------------------


def _sidecar(path: Path) -> dict:
    side = path.with_suffix(".json")
    if not side.exists():
        raise DatasetError(f"missing sidecar {side}")
    return json.loads(side.read_text())


def read_raw4(path) -> tuple[np.ndarray, dict]:
    """Packed LR frame -> (normalised float32 (4, h, w), sidecar dict)."""
    path = Path(path)
    meta = _sidecar(path)
    w, h = int(meta["width"]), int(meta["height"])
    black, white = int(meta["black_level"]), int(meta["white_level"])
    blob = path.read_bytes()
    if len(blob) != 2 * 4 * w * h:
        raise DatasetError(f"{path}: {len(blob)} bytes, expected {2 * 4 * w * h}")
    codes = np.frombuffer(blob, dtype="<u2").reshape(4, h, w)
    data = (codes.astype(np.float32) - black) / (white - black)
    return data, meta


def read_rgb16(path) -> np.ndarray:
    """Ground truth -> float32 (3, H, W) in [0, 1]."""
    path = Path(path)
    meta = _sidecar(path)
    w, h = int(meta["width"]), int(meta["height"])
    blob = path.read_bytes()
    if len(blob) != 2 * w * h * 3:
        raise DatasetError(f"{path}: {len(blob)} bytes, expected {2 * w * h * 3}")
    data = np.frombuffer(blob, dtype="<u2").reshape(h, w, 3)
    return (data.astype(np.float32) / 65535.0).transpose(2, 0, 1)


@dataclass
class BurstRecord:
    """One training pair: packed LR burst + HR ground truth + metadata."""

    frames: np.ndarray  # (F, 4, h, w) float32, normalised
    gt: np.ndarray  # (3, H, W) float32
    meta: dict


def load_dataset(root, verify: bool = True) -> list[BurstRecord]:
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise DatasetError(f"{root} has no manifest.json")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != DATASET_FORMAT_VERSION:
        raise DatasetError(
            f"unsupported dataset format_version {manifest.get('format_version')!r}"
        )
    if verify:
        for rel, expected in sorted(manifest.get("checksums", {}).items()):
            f = root / rel
            if not f.exists():
                raise DatasetError(f"dataset file {rel} is missing")
            if hashlib.sha256(f.read_bytes()).hexdigest() != expected:
                raise DatasetError(f"checksum mismatch for {rel}")

    records = []
    for name in manifest.get("samples", []):
        sample_dir = root / name
        frame_paths = sorted(sample_dir.glob("frame_*.raw4"))
        if not frame_paths:
            raise DatasetError(f"sample {name} has no frames")
        frames = np.stack([read_raw4(p)[0] for p in frame_paths])
        gt = read_rgb16(sample_dir / "gt.rgb16")
        meta = json.loads((sample_dir / "meta.json").read_text())
        records.append(BurstRecord(frames=frames, gt=gt, meta=meta))
    return records


class BurstFolder(torch.utils.data.Dataset):
    """Map-style view over a dataset directory; everything stays in memory
    (samples are small patches)."""

    def __init__(self, root, verify: bool = True):
        self.records = load_dataset(root, verify=verify)
        if not self.records:
            raise DatasetError(f"dataset {root} holds no samples")
        self.cfa = self.records[0].meta.get("lr_cfa", "RGGB")

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, index: int):
        rec = self.records[index]
        return torch.from_numpy(rec.frames.copy()), torch.from_numpy(rec.gt.copy())
