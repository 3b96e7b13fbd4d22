"""Command-line interface.

Subcommands cover the full pipeline: ``fuse-gt`` (exposure fusion),
``synthesize`` (dataset generation), motion utilities (``sample-motion``,
``estimate-h``, ``stats-motion``), single-image kernels (``demosaic``,
``mosaic``, ``downsample``), and ``metrics``.

``synthesize`` reads a JSON config file; any flag given on the command line
overrides the corresponding config key. Exit codes: 0 success, 2 bad
configuration/usage, 3 malformed data, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

import burstsynth
from burstsynth.errors import ConfigError, DataError
from burstsynth.metrics import evaluate_pair
from burstsynth.motion import (
    Homography,
    estimate_dlt,
    load_motion_dataset,
    sample_burst_motion,
    trajectory_stats,
)
from burstsynth.raw_core import (
    RawBayerFrame,
    mosaic,
    nn_demosaic,
    nn_downsample_2x,
    normalize,
    read_raw16,
    read_rgb16,
    write_raw16,
    write_rgb16,
)
from burstsynth.synth_engine import (
    NoiseParams,
    extract_patches,
    synthesize_baseline,
    synthesize_ours,
    write_dataset,
)

BURSTS_FORMAT_VERSION = 1

_SYNTH_DEFAULTS = {
    "variant": "ours",
    "scenes_dir": None,
    "output": None,
    "motion_dataset": None,
    "frames": 8,
    "patch_size": 256,
    "stride": None,
    "seed": 0,
    "workers": 1,
    "max_translation": 8.0,
    "max_rotation": 0.035,
    "shot_gain_range": [1e-4, 1e-2],
    "read_sigma_range": [1e-3, 2e-2],
}


def _json_safe(value):
    if isinstance(value, float) and math.isinf(value):
        return "+inf" if value > 0 else "-inf"
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def _emit(payload: dict, output: str | None) -> None:
    text = json.dumps(_json_safe(payload), indent=1, sort_keys=True)
    if output:
        Path(output).write_text(text)
    else:
        print(text)


# ---------------------------------------------------------------------------
# synthesize
# ---------------------------------------------------------------------------


def _load_synth_config(args) -> dict:
    config = dict(_SYNTH_DEFAULTS)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must contain a JSON object")
        unknown = set(loaded) - set(_SYNTH_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        config.update(loaded)
    # Command-line flags win over config-file values.
    for key in (
        "variant",
        "scenes_dir",
        "output",
        "motion_dataset",
        "frames",
        "patch_size",
        "stride",
        "seed",
        "workers",
        "max_translation",
        "max_rotation",
    ):
        value = getattr(args, key)
        if value is not None:
            config[key] = value
    return config


def _validate_synth_config(config: dict) -> None:
    if config["variant"] not in ("ours", "baseline"):
        raise ConfigError(f"variant must be 'ours' or 'baseline', got {config['variant']!r}")
    for key in ("scenes_dir", "output"):
        if not config[key]:
            raise ConfigError(f"config key '{key}' is required")
    if config["variant"] == "ours" and not config["motion_dataset"]:
        raise ConfigError("variant 'ours' requires a motion_dataset")
    if int(config["frames"]) < 1:
        raise ConfigError("frames must be >= 1")
    if int(config["workers"]) < 1:
        raise ConfigError("workers must be >= 1")
    if config["patch_size"] is not None and (
        int(config["patch_size"]) < 4 or int(config["patch_size"]) % 4
    ):
        raise ConfigError("patch_size must be a positive multiple of 4")
    for key in ("shot_gain_range", "read_sigma_range"):
        rng = config[key]
        if (
            not isinstance(rng, (list, tuple))
            or len(rng) != 2
            or not all(isinstance(v, (int, float)) for v in rng)
            or not 0 < rng[0] <= rng[1]
        ):
            raise ConfigError(f"{key} must be [lo, hi] with 0 < lo <= hi")
    if not Path(config["scenes_dir"]).is_dir():
        raise ConfigError(f"scenes_dir {config['scenes_dir']} is not a directory")


def _discover_scenes(scenes_dir: Path, variant: str) -> list[Path]:
    scenes = []
    for entry in sorted(scenes_dir.iterdir()):
        if not entry.is_dir() or not (entry / "gt.rgb16").exists():
            continue
        if variant == "ours" and not sorted(entry.glob("short_*.raw16")):
            continue
        scenes.append(entry)
    if not scenes:
        raise DataError(
            f"no usable scenes under {scenes_dir} (need gt.rgb16"
            + (" and short_*.raw16" if variant == "ours" else "")
            + ")"
        )
    return scenes


def _synthesize_scene(job: dict) -> list:
    """One scene -> list of samples. Module-level so worker processes can
    unpickle it; all randomness is fixed by the per-scene seed in the job."""
    config = job["config"]
    scene_dir = Path(job["scene_dir"])
    rng = np.random.default_rng(job["scene_seed"])
    hr_gt = read_rgb16(scene_dir / "gt.rgb16")
    frames = int(config["frames"])
    # Tiling mode synthesises the full usable area, then cuts the grid.
    synth_patch = None if config["stride"] is not None else config["patch_size"]

    if config["variant"] == "ours":
        dataset = load_motion_dataset(config["motion_dataset"])
        motions = sample_burst_motion(dataset, frames, rng)
        shorts = [read_raw16(p) for p in sorted(scene_dir.glob("short_*.raw16"))]
        if len(shorts) < frames:
            raise DataError(
                f"scene {scene_dir.name} has {len(shorts)} short exposures, "
                f"need frames={frames}"
            )
        shorts = shorts[:frames]
        sample = synthesize_ours(
            shorts, hr_gt, motions, patch_size=synth_patch, scene_id=scene_dir.name
        )
    else:
        lo, hi = config["shot_gain_range"]
        shot_gain = float(10.0 ** rng.uniform(math.log10(lo), math.log10(hi)))
        lo, hi = config["read_sigma_range"]
        read_sigma = float(10.0 ** rng.uniform(math.log10(lo), math.log10(hi)))
        noise = NoiseParams(
            shot_gain=shot_gain,
            read_sigma=read_sigma,
            seed=int(rng.integers(2**31 - 1)),
        )
        sample = synthesize_baseline(
            hr_gt,
            frames,
            float(config["max_translation"]),
            float(config["max_rotation"]),
            noise,
            patch_size=synth_patch,
            scene_id=scene_dir.name,
        )

    if config["stride"] is not None:
        return extract_patches(
            sample, patch_size=int(config["patch_size"]), stride=int(config["stride"])
        )
    return [sample]


def _cmd_synthesize(args) -> int:
    config = _load_synth_config(args)
    _validate_synth_config(config)
    scenes = _discover_scenes(Path(config["scenes_dir"]), config["variant"])

    seed = int(config["seed"])
    children = np.random.SeedSequence(seed).spawn(len(scenes))
    jobs = [
        {"config": config, "scene_dir": str(scene), "scene_seed": child}
        for scene, child in zip(scenes, children)
    ]

    workers = int(config["workers"])
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_scene = list(pool.map(_synthesize_scene, jobs))
    else:
        per_scene = [_synthesize_scene(job) for job in jobs]
    samples = [sample for scene_samples in per_scene for sample in scene_samples]

    output = Path(config["output"])
    write_dataset(samples, output)

    config_blob = json.dumps(_json_safe(config), sort_keys=True, separators=(",", ":"))
    run_manifest = {
        "command": "synthesize",
        "package_version": burstsynth.__version__,
        "numpy_version": np.__version__,
        "config": _json_safe(config),
        "config_sha256": hashlib.sha256(config_blob.encode()).hexdigest(),
        "seed": seed,
        "scenes": [s.name for s in scenes],
        "sample_count": len(samples),
    }
    (output / "run_manifest.json").write_text(
        json.dumps(run_manifest, indent=1, sort_keys=True)
    )
    print(f"wrote {len(samples)} samples from {len(scenes)} scenes to {output}")
    return 0


# ---------------------------------------------------------------------------
# fuse-gt and single-image kernels
# ---------------------------------------------------------------------------


def _cmd_fuse_gt(args) -> int:
    from burstsynth.synth_engine import fuse_exposures

    if len(args.scales) != len(args.exposures):
        raise ConfigError(
            f"{len(args.exposures)} exposures but {len(args.scales)} scales"
        )
    frames = [read_raw16(p) for p in args.exposures]
    gt = fuse_exposures(frames, args.scales)
    write_rgb16(args.output, gt)
    print(f"fused {len(frames)} exposures -> {args.output}")
    return 0


def _cmd_demosaic(args) -> int:
    frame = read_raw16(args.input)
    write_rgb16(args.output, nn_demosaic(normalize(frame), frame.cfa))
    return 0


def _cmd_mosaic(args) -> int:
    image = read_rgb16(args.input)
    plane = mosaic(image, args.cfa)
    span = args.white_level - args.black_level
    if span <= 0:
        raise ConfigError("white level must exceed black level")
    data = (np.round(np.clip(plane, 0.0, 1.0) * span) + args.black_level).astype(np.uint16)
    write_raw16(
        args.output,
        RawBayerFrame(
            data=data,
            cfa=args.cfa,
            black_level=args.black_level,
            white_level=args.white_level,
        ),
    )
    return 0


def _cmd_downsample(args) -> int:
    write_rgb16(args.output, nn_downsample_2x(read_rgb16(args.input)))
    return 0


# ---------------------------------------------------------------------------
# Motion utilities
# ---------------------------------------------------------------------------


def _cmd_sample_motion(args) -> int:
    dataset = load_motion_dataset(args.dataset)
    rng = np.random.default_rng(args.seed)
    bursts = [
        [h.m.reshape(-1).tolist() for h in sample_burst_motion(dataset, args.frames, rng)]
        for _ in range(args.count)
    ]
    _emit({"format_version": BURSTS_FORMAT_VERSION, "bursts": bursts}, args.output)
    return 0


def _load_bursts(path: str) -> list[list[Homography]]:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"bursts file is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "bursts" not in payload:
        raise DataError("bursts file must be an object with a 'bursts' list")
    bursts = []
    for rows in payload["bursts"]:
        bursts.append([Homography(np.asarray(r, dtype=np.float64).reshape(3, 3)) for r in rows])
    return bursts


def _cmd_stats_motion(args) -> int:
    if bool(args.bursts) == bool(args.dataset):
        raise ConfigError("give exactly one of --bursts or --dataset")
    if args.bursts:
        bursts = _load_bursts(args.bursts)
    else:
        dataset = load_motion_dataset(args.dataset)
        bursts = [
            [Homography.identity()] + list(c.homographies) for c in dataset.captures
        ]
    stats = trajectory_stats(bursts)
    _emit(stats.to_dict(), args.output)
    return 0


def _cmd_estimate_h(args) -> int:
    try:
        payload = json.loads(Path(args.points).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"points file is not valid JSON: {exc}") from exc
    if isinstance(payload, dict) and "src" in payload and "dst" in payload:
        src, dst = payload["src"], payload["dst"]
    elif isinstance(payload, list):
        try:
            src = [pair[0] for pair in payload]
            dst = [pair[1] for pair in payload]
        except (TypeError, IndexError) as exc:
            raise DataError("points list must hold [[x, y], [u, v]] pairs") from exc
    else:
        raise DataError("points file must be {'src': [...], 'dst': [...]} or a pair list")
    h = estimate_dlt(np.asarray(src, dtype=np.float64), np.asarray(dst, dtype=np.float64))
    _emit({"homography": h.m.tolist()}, args.output)
    return 0


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _cmd_metrics(args) -> int:
    if args.pairs:
        try:
            listed = json.loads(Path(args.pairs).read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"pairs file is not valid JSON: {exc}") from exc
        pairs = [(p[0], p[1]) for p in listed]
    elif args.pred and args.ref:
        pairs = [(args.pred, args.ref)]
    else:
        raise ConfigError("give --pred and --ref, or --pairs")

    per_pair = []
    for pred_path, ref_path in pairs:
        entry = evaluate_pair(read_rgb16(pred_path), read_rgb16(ref_path))
        entry["pred"] = str(pred_path)
        entry["ref"] = str(ref_path)
        per_pair.append(entry)
    finite = [p["psnr"] for p in per_pair if math.isfinite(p["psnr"])]
    report = {
        "pairs": per_pair,
        "mean": {
            "psnr": float(np.mean(finite)) if finite else math.inf,
            "ssim": float(np.mean([p["ssim"] for p in per_pair])),
            "ms_ssim": float(np.mean([p["ms_ssim"] for p in per_pair])),
        },
    }
    _emit(report, args.output)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="burstsynth",
        description="Synthetic RAW burst engine for multi-frame super-resolution data",
    )
    parser.add_argument("--version", action="version", version=burstsynth.__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="generate an LR-HR burst dataset")
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--variant", choices=["ours", "baseline"])
    p.add_argument("--scenes-dir", dest="scenes_dir")
    p.add_argument("--output")
    p.add_argument("--motion-dataset", dest="motion_dataset")
    p.add_argument("--frames", type=int)
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--max-translation", dest="max_translation", type=float)
    p.add_argument("--max-rotation", dest="max_rotation", type=float)
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("fuse-gt", help="fuse an exposure stack into an RGB ground truth")
    p.add_argument("--exposures", nargs="+", required=True)
    p.add_argument("--scales", type=float, nargs="+", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_fuse_gt)

    p = sub.add_parser("sample-motion", help="draw burst trajectories from a motion dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.set_defaults(func=_cmd_sample_motion)

    p = sub.add_parser("estimate-h", help="estimate a homography from correspondences")
    p.add_argument("--points", required=True, help="JSON correspondences")
    p.add_argument("--output")
    p.set_defaults(func=_cmd_estimate_h)

    p = sub.add_parser("stats-motion", help="trajectory statistics for bursts")
    p.add_argument("--bursts", help="bursts JSON from sample-motion")
    p.add_argument("--dataset", help="motion dataset JSON (uses its captures)")
    p.add_argument("--output")
    p.set_defaults(func=_cmd_stats_motion)

    p = sub.add_parser("demosaic", help="raw16 -> rgb16 nearest-neighbour demosaic")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=_cmd_demosaic)

    p = sub.add_parser("mosaic", help="rgb16 -> raw16 CFA sampling")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--cfa", default="RGGB")
    p.add_argument("--black-level", dest="black_level", type=int, default=0)
    p.add_argument("--white-level", dest="white_level", type=int, default=65535)
    p.set_defaults(func=_cmd_mosaic)

    p = sub.add_parser("downsample", help="rgb16 -> rgb16 nearest-neighbour 2x decimation")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=_cmd_downsample)

    p = sub.add_parser("metrics", help="PSNR/SSIM/MS-SSIM report for rgb16 pairs")
    p.add_argument("--pred")
    p.add_argument("--ref")
    p.add_argument("--pairs", help="JSON list of [pred, ref] path pairs")
    p.add_argument("--output")
    p.set_defaults(func=_cmd_metrics)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
