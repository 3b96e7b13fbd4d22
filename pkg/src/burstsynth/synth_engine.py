"""Burst synthesis: aligned LR-HR training pair generation and dataset I/O.

The main pipeline (``synthesize_ours``) turns one real multi-exposure scene
into a burst of noisy low-resolution RAW frames plus a clean high-resolution
RGB ground truth:

    short exposure -> normalize -> NN demosaic -> warp (frames > 0)
                   -> NN 2x downsample -> remosaic (RGGB) -> pack 4-channel

Every step from demosaic through remosaic is nearest-neighbour, so for
unwarped content the LR samples are bit-exact copies of original sensor
samples of the same CFA colour: the real noise survives. No synthetic noise
is ever added on this path. Motion comes from measured handheld
trajectories, applied about the image centre with a safety margin cropped
off so no frame samples outside the source.

``synthesize_baseline`` is the conventional alternative for comparison:
bilinear downsampling of the ground truth, uniform random motion, and
Gaussian shot/read noise.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from burstsynth.errors import (
    DataError,
    DatasetChecksumError,
    DatasetTruncatedError,
    DatasetVersionError,
)
from burstsynth.motion import Homography, sample_uniform_motion
from burstsynth.raw_core import (
    CfaPattern,
    PackedRaw4,
    RawBayerFrame,
    RgbImage,
    mosaic,
    nn_demosaic,
    nn_downsample_2x,
    normalize,
    pack_raw4,
    read_raw4,
    read_rgb16,
    warp_perspective,
    write_raw4,
    write_rgb16,
)

DATASET_FORMAT_VERSION = 1

#: CFA pattern of all synthesised LR frames, regardless of the source CFA.
LR_CFA = CfaPattern.RGGB


@dataclass
class NoiseParams:
    """Gaussian sensor noise model for the baseline pipeline:
    variance = shot_gain * signal + read_sigma**2 (normalised units)."""

    shot_gain: float
    read_sigma: float
    seed: int = 0

    def __post_init__(self) -> None:
        if self.shot_gain < 0 or self.read_sigma < 0:
            raise DataError("noise parameters must be >= 0")
        self.seed = int(self.seed)


@dataclass
class BurstSample:
    """One training example: a burst of packed LR frames, the HR ground
    truth, and metadata recording how the pair was produced."""

    frames: list[PackedRaw4]
    gt: RgbImage
    meta: dict

    def equals(self, other: "BurstSample") -> bool:
        """Bit-exact equality of frames, ground truth, and metadata."""
        if len(self.frames) != len(other.frames):
            return False
        for a, b in zip(self.frames, other.frames):
            if (
                a.cfa != b.cfa
                or a.black_level != b.black_level
                or a.white_level != b.white_level
                or not np.array_equal(a.data, b.data)
            ):
                return False
        if not np.array_equal(self.gt.data, other.gt.data):
            return False
        return _canonical_json(self.meta) == _canonical_json(other.meta)


def _canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Ground-truth fusion
# ---------------------------------------------------------------------------


def fuse_exposures(frames: Sequence[RawBayerFrame], scales: Sequence[float]) -> RgbImage:
    """Fuse an aligned exposure stack into a clean RGB ground truth.

    Each frame is normalised, demosaiced, divided by its exposure scale
    (relative to the reference exposure), and the per-pixel mean is taken;
    averaging N frames cuts noise by about sqrt(N). The result is clamped
    to [0, 1].
    """
    if not frames:
        raise DataError("need at least one exposure")
    if len(frames) != len(scales):
        raise DataError(f"{len(frames)} frames but {len(scales)} scales")
    if any(s <= 0 for s in scales):
        raise DataError("exposure scales must be > 0")
    first = frames[0]
    acc = np.zeros((first.height, first.width, 3), dtype=np.float64)
    for frame, scale in zip(frames, scales):
        if (frame.height, frame.width) != (first.height, first.width):
            raise DataError("exposure stack frames differ in size")
        if frame.cfa != first.cfa:
            raise DataError("exposure stack frames differ in CFA pattern")
        acc += nn_demosaic(normalize(frame), frame.cfa).data / float(scale)
    acc /= len(frames)
    return RgbImage(np.clip(acc, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Geometry helpers
# ---------------------------------------------------------------------------


def _max_displacement(h: Homography, width: int, height: int) -> float:
    """Largest displacement |H(p) - p| of the centre-anchored transform over
    a boundary + interior probe grid (exact at the corners for affine
    motion; the probe grid guards the tiny projective remainder)."""
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    ts = np.linspace(0.0, 1.0, 17)
    xs = ts * (width - 1)
    ys = ts * (height - 1)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    centred = pts - np.array([cx, cy])
    mapped = h.apply(centred) + np.array([cx, cy])
    disp = np.hypot(*(mapped - pts).T)
    return float(disp.max())


def safety_margin(motions: Sequence[Homography], width: int, height: int) -> int:
    """Border width (HR pixels, multiple of 4) that must be cropped so that
    no warped frame reads outside the source image. Covers both the forward
    and inverse transforms of every motion."""
    worst = 0.0
    for h in motions:
        worst = max(
            worst,
            _max_displacement(h, width, height),
            _max_displacement(h.invert(), width, height),
        )
    return 4 * math.ceil(worst / 4.0)


def _floor4(v: int) -> int:
    return (v // 4) * 4


def _patch_geometry(width, height, margin, patch_size):
    """Centered patch origin/size in HR pixels, everything a multiple of 4
    so the patch tiles whole packed-LR pixels."""
    if width % 4 or height % 4:
        raise DataError(f"source dimensions must be multiples of 4, got {width}x{height}")
    if patch_size is None:
        pw = _floor4(width - 2 * margin)
        ph = _floor4(height - 2 * margin)
        if pw < 4 or ph < 4:
            raise DataError(
                f"motion margin {margin}px leaves no usable area in {width}x{height}"
            )
    else:
        patch_size = int(patch_size)
        if patch_size < 4 or patch_size % 4:
            raise DataError(f"patch_size must be a positive multiple of 4, got {patch_size}")
        if patch_size > min(width, height) - 2 * margin:
            raise DataError(
                f"patch {patch_size}px + margin {margin}px do not fit in {width}x{height}"
            )
        pw = ph = patch_size
    x0 = _floor4((width - pw) // 2)
    y0 = _floor4((height - ph) // 2)
    return x0, y0, pw, ph


def _snap_to_grid(values: np.ndarray, span: int) -> np.ndarray:
    """Clamp to [0, 1] and round onto the {k / span} grid the 16-bit
    serialisation uses, so in-memory samples and a written/re-read dataset
    are bit-identical. Values already on the grid pass through unchanged."""
    return np.round(np.clip(values, 0.0, 1.0) * span) / span


def _motion_matrices(motions: Sequence[Homography]) -> list[list[list[float]]]:
    return [h.m.tolist() for h in motions]


# ---------------------------------------------------------------------------
# Pair synthesis
# ---------------------------------------------------------------------------


def synthesize_ours(
    short_frames: Sequence[RawBayerFrame],
    hr_gt: RgbImage,
    motions: Sequence[Homography],
    patch_size: int | None = None,
    scene_id: str = "scene",
) -> BurstSample:
    """Build one LR-HR training pair from real short exposures.

    ``motions[0]`` must be the identity: the base frame is never warped and
    stays pixel-aligned with the ground truth. Later frames are warped about
    the image centre by their homography before downsampling. The output is
    a centred crop (``patch_size`` HR pixels, multiple of 4; full usable
    area when None) inset by the motion safety margin.

    Deterministic; adds no noise of its own. LR values are snapped onto each
    frame's own 16-bit sensor grid so serialisation is lossless -- for
    unwarped samples the snap is an exact no-op.
    """
    if not short_frames:
        raise DataError("need at least one short exposure frame")
    if len(motions) != len(short_frames):
        raise DataError(f"{len(short_frames)} frames but {len(motions)} motions")
    if not motions[0].is_identity():
        raise DataError("motions[0] must be the identity (base frame is unwarped)")
    first = short_frames[0]
    for frame in short_frames:
        if (frame.height, frame.width) != (first.height, first.width):
            raise DataError("short frames differ in size")
        if frame.cfa != first.cfa:
            raise DataError("short frames differ in CFA pattern")
    if (hr_gt.height, hr_gt.width) != (first.height, first.width):
        raise DataError(
            f"ground truth {hr_gt.width}x{hr_gt.height} does not match "
            f"frames {first.width}x{first.height}"
        )

    width, height = first.width, first.height
    margin = safety_margin(motions[1:], width, height)
    x0, y0, pw, ph = _patch_geometry(width, height, margin, patch_size)

    packed_frames = []
    for i, frame in enumerate(short_frames):
        rgb = nn_demosaic(normalize(frame), frame.cfa)
        if i > 0:
            rgb = warp_perspective(rgb, motions[i], center_anchored=True)
        lr = nn_downsample_2x(rgb)
        plane = mosaic(lr, LR_CFA)
        crop = plane[y0 // 2 : (y0 + ph) // 2, x0 // 2 : (x0 + pw) // 2]
        span = frame.white_level - frame.black_level
        packed_frames.append(
            pack_raw4(
                _snap_to_grid(crop, span),
                LR_CFA,
                black_level=frame.black_level,
                white_level=frame.white_level,
            )
        )

    gt = RgbImage(_snap_to_grid(hr_gt.data[y0 : y0 + ph, x0 : x0 + pw], 65535))
    meta = {
        "variant": "ours",
        "scene_id": scene_id,
        "source_cfa": first.cfa.value,
        "lr_cfa": LR_CFA.value,
        "homographies": _motion_matrices(motions),
        "black_levels": [f.black_level for f in short_frames],
        "white_levels": [f.white_level for f in short_frames],
        "source_size_hr": [width, height],
        "margin_hr": margin,
        "patch_origin_hr": [x0, y0],
        "patch_size_hr": [pw, ph],
        "noise": None,
        "seed": None,
    }
    return BurstSample(frames=packed_frames, gt=gt, meta=meta)


def _bilinear_downsample_2x(data: np.ndarray) -> np.ndarray:
    return 0.25 * (
        data[0::2, 0::2] + data[0::2, 1::2] + data[1::2, 0::2] + data[1::2, 1::2]
    )


def synthesize_baseline(
    hr_gt: RgbImage,
    num_frames: int,
    max_translation: float,
    max_rotation: float,
    noise: NoiseParams,
    patch_size: int | None = None,
    scene_id: str = "scene",
) -> BurstSample:
    """Conventional degradation pipeline for comparison: the ground truth is
    warped by uniform random motion, downsampled with a 2x2 box average, and
    corrupted with Gaussian noise of variance shot_gain * signal +
    read_sigma**2. All randomness derives from ``noise.seed``."""
    if num_frames < 1:
        raise DataError(f"num_frames must be >= 1, got {num_frames}")
    width, height = hr_gt.width, hr_gt.height
    rng = np.random.default_rng(noise.seed)
    motions = sample_uniform_motion(max_translation, max_rotation, num_frames, rng)
    margin = safety_margin(motions[1:], width, height)
    x0, y0, pw, ph = _patch_geometry(width, height, margin, patch_size)

    gt_data = np.clip(hr_gt.data, 0.0, 1.0)
    packed_frames = []
    for i in range(num_frames):
        rgb = gt_data if i == 0 else warp_perspective(
            RgbImage(gt_data), motions[i], center_anchored=True
        ).data
        lr = _bilinear_downsample_2x(rgb)
        if noise.shot_gain > 0 or noise.read_sigma > 0:
            sigma = np.sqrt(noise.shot_gain * lr + noise.read_sigma**2)
            lr = lr + rng.standard_normal(lr.shape) * sigma
        plane = mosaic(RgbImage(np.clip(lr, 0.0, 1.0)), LR_CFA)
        crop = plane[y0 // 2 : (y0 + ph) // 2, x0 // 2 : (x0 + pw) // 2]
        packed_frames.append(pack_raw4(_snap_to_grid(crop, 65535), LR_CFA))

    gt = RgbImage(_snap_to_grid(gt_data[y0 : y0 + ph, x0 : x0 + pw], 65535))
    meta = {
        "variant": "baseline",
        "scene_id": scene_id,
        "source_cfa": None,
        "lr_cfa": LR_CFA.value,
        "homographies": _motion_matrices(motions),
        "black_levels": [0] * num_frames,
        "white_levels": [65535] * num_frames,
        "source_size_hr": [width, height],
        "margin_hr": margin,
        "patch_origin_hr": [x0, y0],
        "patch_size_hr": [pw, ph],
        "noise": {
            "shot_gain": noise.shot_gain,
            "read_sigma": noise.read_sigma,
            "max_translation": max_translation,
            "max_rotation": max_rotation,
        },
        "seed": noise.seed,
    }
    return BurstSample(frames=packed_frames, gt=gt, meta=meta)


# ---------------------------------------------------------------------------
# Patching
# ---------------------------------------------------------------------------


def extract_patches(
    sample: BurstSample,
    patch_size: int = 256,
    stride: int | None = None,
    rng=None,
    max_patches: int | None = None,
) -> list[BurstSample]:
    """Tile a sample into patches (sizes/strides in HR pixels, multiples
    of 4). Crops are pure views copied out of the arrays, so patch content
    is bit-identical to re-cropping the source sample. An optional rng
    shuffles patch order; ``max_patches`` truncates after the optional
    shuffle."""
    if patch_size < 4 or patch_size % 4:
        raise DataError(f"patch_size must be a positive multiple of 4, got {patch_size}")
    stride = patch_size if stride is None else int(stride)
    if stride < 4 or stride % 4:
        raise DataError(f"stride must be a positive multiple of 4, got {stride}")
    height, width = sample.gt.height, sample.gt.width
    if patch_size > min(width, height):
        raise DataError(
            f"patch {patch_size}px exceeds sample size {width}x{height}"
        )
    base_origin = sample.meta.get("patch_origin_hr", [0, 0])

    patches = []
    for y0 in range(0, height - patch_size + 1, stride):
        for x0 in range(0, width - patch_size + 1, stride):
            frames = [
                PackedRaw4(
                    f.data[
                        :, y0 // 4 : (y0 + patch_size) // 4, x0 // 4 : (x0 + patch_size) // 4
                    ].copy(),
                    f.cfa,
                    black_level=f.black_level,
                    white_level=f.white_level,
                )
                for f in sample.frames
            ]
            gt = RgbImage(sample.gt.data[y0 : y0 + patch_size, x0 : x0 + patch_size].copy())
            meta = dict(sample.meta)
            meta["patch_offset_hr"] = [x0, y0]
            meta["patch_origin_hr"] = [base_origin[0] + x0, base_origin[1] + y0]
            meta["patch_size_hr"] = [patch_size, patch_size]
            patches.append(BurstSample(frames=frames, gt=gt, meta=meta))

    if rng is not None:
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        patches = [patches[i] for i in rng.permutation(len(patches))]
    if max_patches is not None:
        patches = patches[: int(max_patches)]
    return patches


# ---------------------------------------------------------------------------
# Dataset persistence
# ---------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_dataset(samples: Sequence[BurstSample], path) -> None:
    """Write samples to a dataset directory.

    Layout: one ``sample_NNNNN/`` directory per sample holding
    ``frame_NN.raw4`` (+ JSON sidecars), ``gt.rgb16`` (+ sidecar), and
    ``meta.json``; a top-level ``manifest.json`` lists the samples in order
    with SHA-256 checksums of every file. The manifest is written last, so a
    dataset without one is incomplete by construction.
    """
    root = Path(path)
    if root.exists() and any(root.iterdir()):
        raise DataError(f"refusing to write dataset into non-empty directory {root}")
    root.mkdir(parents=True, exist_ok=True)

    names = []
    checksums = {}
    for index, sample in enumerate(samples):
        name = f"sample_{index:05d}"
        names.append(name)
        sample_dir = root / name
        sample_dir.mkdir()
        files = []
        for j, frame in enumerate(sample.frames):
            frame_path = sample_dir / f"frame_{j:02d}.raw4"
            write_raw4(frame_path, frame)
            files += [frame_path, frame_path.with_suffix(".json")]
        gt_path = sample_dir / "gt.rgb16"
        write_rgb16(gt_path, sample.gt)
        files += [gt_path, gt_path.with_suffix(".json")]
        meta_path = sample_dir / "meta.json"
        meta_path.write_text(json.dumps(sample.meta, indent=1, sort_keys=True))
        files.append(meta_path)
        for f in files:
            checksums[f.relative_to(root).as_posix()] = _sha256(f)

    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "sample_count": len(names),
        "samples": names,
        "checksums": checksums,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def read_manifest(path) -> dict:
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise DatasetTruncatedError(f"dataset {root} has no manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest.json is not valid JSON: {exc}") from exc
    version = manifest.get("format_version")
    if version != DATASET_FORMAT_VERSION:
        raise DatasetVersionError(
            f"dataset format_version {version!r} is not supported "
            f"(expected {DATASET_FORMAT_VERSION})"
        )
    return manifest


def read_dataset(path, verify: bool = True) -> list[BurstSample]:
    """Read a dataset back in manifest order.

    With ``verify`` (default) every file is checked against its manifest
    checksum first: a missing/short file raises DatasetTruncatedError and a
    content mismatch raises DatasetChecksumError, both naming the file.
    """
    root = Path(path)
    manifest = read_manifest(root)
    if verify:
        for rel, expected in sorted(manifest.get("checksums", {}).items()):
            f = root / rel
            if not f.exists():
                raise DatasetTruncatedError(f"dataset file {rel} is missing")
            if _sha256(f) != expected:
                raise DatasetChecksumError(f"checksum mismatch for {rel}")

    samples = []
    for name in manifest.get("samples", []):
        sample_dir = root / name
        if not sample_dir.is_dir():
            raise DatasetTruncatedError(f"sample directory {name} is missing")
        frame_paths = sorted(sample_dir.glob("frame_*.raw4"))
        if not frame_paths:
            raise DatasetTruncatedError(f"sample {name} has no frames")
        frames = [read_raw4(p) for p in frame_paths]
        gt = read_rgb16(sample_dir / "gt.rgb16")
        try:
            meta = json.loads((sample_dir / "meta.json").read_text())
        except FileNotFoundError as exc:
            raise DatasetTruncatedError(f"sample {name} has no meta.json") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"{name}/meta.json is not valid JSON: {exc}") from exc
        samples.append(BurstSample(frames=frames, gt=gt, meta=meta))
    return samples
