import json
import subprocess
import sys

import numpy as np
import pytest

from burstsynth.cli import main
from burstsynth.motion import Capture, Homography, MotionDataset, save_motion_dataset
from burstsynth.raw_core import (
    RawBayerFrame,
    RgbImage,
    read_raw16,
    read_rgb16,
    write_raw16,
    write_rgb16,
)
from burstsynth.synth_engine import read_dataset

from conftest import make_frame, make_rgb


def _write_scene(root, name, rng, size=32, shorts=4, cfa="RGGB", black=64, white=1023):
    scene = root / name
    scene.mkdir(parents=True)
    for i in range(shorts):
        write_raw16(
            scene / f"short_{i:02d}.raw16",
            make_frame(rng, size, size, cfa=cfa, black=black, white=white),
        )
    write_rgb16(scene / "gt.rgb16", make_rgb(rng, size, size))
    return scene


def _write_motion(path, rng, captures=3, frames=6, spread=1.5):
    dataset = MotionDataset(
        captures=[
            Capture(
                capture_id=f"c{i}",
                homographies=[
                    Homography.translation(
                        float(rng.uniform(-spread, spread)),
                        float(rng.uniform(-spread, spread)),
                    )
                    for _ in range(frames - 1)
                ],
            )
            for i in range(captures)
        ]
    )
    save_motion_dataset(dataset, path)
    return dataset


# ---------------------------------------------------------------------------
# kernels as file operations
# ---------------------------------------------------------------------------


def test_demosaic_then_mosaic_roundtrips_bit_exact(tmp_path, rng):
    frame = make_frame(rng, 12, 16, cfa="GRBG", black=32, white=2047)
    write_raw16(tmp_path / "in.raw16", frame)
    assert main(["demosaic", str(tmp_path / "in.raw16"), str(tmp_path / "mid.rgb16")]) == 0
    assert (
        main(
            [
                "mosaic",
                str(tmp_path / "mid.rgb16"),
                str(tmp_path / "out.raw16"),
                "--cfa",
                "GRBG",
                "--black-level",
                "32",
                "--white-level",
                "2047",
            ]
        )
        == 0
    )
    back = read_raw16(tmp_path / "out.raw16")
    assert np.array_equal(back.data, frame.data)
    assert back.cfa == frame.cfa


def test_downsample_command(tmp_path, rng):
    image = make_rgb(rng, 8, 8)
    write_rgb16(tmp_path / "in.rgb16", image)
    assert main(["downsample", str(tmp_path / "in.rgb16"), str(tmp_path / "out.rgb16")]) == 0
    out = read_rgb16(tmp_path / "out.rgb16")
    assert out.data.shape == (4, 4, 3)
    assert np.array_equal(out.data, read_rgb16(tmp_path / "in.rgb16").data[::2, ::2])


def test_fuse_gt_command(tmp_path, rng):
    a = make_frame(rng, 8, 8)
    b = make_frame(rng, 8, 8)
    write_raw16(tmp_path / "e0.raw16", a)
    write_raw16(tmp_path / "e1.raw16", b)
    code = main(
        [
            "fuse-gt",
            "--exposures",
            str(tmp_path / "e0.raw16"),
            str(tmp_path / "e1.raw16"),
            "--scales",
            "1.0",
            "2.0",
            "--output",
            str(tmp_path / "gt.rgb16"),
        ]
    )
    assert code == 0
    assert read_rgb16(tmp_path / "gt.rgb16").data.shape == (8, 8, 3)


# ---------------------------------------------------------------------------
# motion commands
# ---------------------------------------------------------------------------


def test_sample_motion_and_stats_pipeline(tmp_path, rng):
    _write_motion(tmp_path / "motion.json", rng)
    bursts_path = tmp_path / "bursts.json"
    assert (
        main(
            [
                "sample-motion",
                "--dataset",
                str(tmp_path / "motion.json"),
                "--frames",
                "4",
                "--count",
                "50",
                "--seed",
                "3",
                "--output",
                str(bursts_path),
            ]
        )
        == 0
    )
    payload = json.loads(bursts_path.read_text())
    assert len(payload["bursts"]) == 50
    assert all(len(b) == 4 for b in payload["bursts"])
    assert payload["bursts"][0][0] == [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]

    stats_path = tmp_path / "stats.json"
    assert (
        main(["stats-motion", "--bursts", str(bursts_path), "--output", str(stats_path)])
        == 0
    )
    stats = json.loads(stats_path.read_text())
    assert stats["frames"] == 4
    assert stats["num_bursts"] == 50
    assert "lag1_translation_autocorr_mean" in stats

    # stats straight from the dataset captures
    assert main(["stats-motion", "--dataset", str(tmp_path / "motion.json")]) == 0
    assert main(["stats-motion"]) == 2  # neither input given


def test_estimate_h_command(tmp_path):
    h = Homography([[1.01, 0.0, 2.0], [0.02, 0.99, -1.0], [1e-5, 0.0, 1.0]])
    src = np.array([[0.0, 0.0], [40.0, 0.0], [40.0, 30.0], [0.0, 30.0], [17.0, 11.0]])
    payload = {"src": src.tolist(), "dst": h.apply(src).tolist()}
    points = tmp_path / "pts.json"
    points.write_text(json.dumps(payload))
    out = tmp_path / "h.json"
    assert main(["estimate-h", "--points", str(points), "--output", str(out)]) == 0
    est = np.asarray(json.loads(out.read_text())["homography"])
    assert np.max(np.abs(est - h.m)) < 1e-8

    pairs = [[p, q] for p, q in zip(payload["src"], payload["dst"])]
    points.write_text(json.dumps(pairs))
    assert main(["estimate-h", "--points", str(points), "--output", str(out)]) == 0


# ---------------------------------------------------------------------------
# synthesize
# ---------------------------------------------------------------------------


def _synth_config(tmp_path, rng, variant="ours", **overrides):
    scenes = tmp_path / "scenes"
    _write_scene(scenes, "alpha", rng)
    _write_scene(scenes, "beta", rng, cfa="BGGR")
    motion = tmp_path / "motion.json"
    _write_motion(motion, rng)
    config = {
        "variant": variant,
        "scenes_dir": str(scenes),
        "output": str(tmp_path / "out"),
        "motion_dataset": str(motion),
        "frames": 3,
        "patch_size": 16,
        "seed": 7,
    }
    config.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path, config


def test_synthesize_ours_end_to_end(tmp_path, rng):
    config_path, config = _synth_config(tmp_path, rng)
    assert main(["synthesize", "--config", str(config_path)]) == 0
    samples = read_dataset(config["output"])
    assert len(samples) == 2
    assert {s.meta["scene_id"] for s in samples} == {"alpha", "beta"}
    for s in samples:
        assert len(s.frames) == 3
        assert s.gt.data.shape == (16, 16, 3)
        assert s.meta["lr_cfa"] == "RGGB"

    run = json.loads((tmp_path / "out" / "run_manifest.json").read_text())
    assert run["command"] == "synthesize"
    assert run["seed"] == 7
    assert run["sample_count"] == 2
    assert len(run["config_sha256"]) == 64


def test_synthesize_is_deterministic_across_runs(tmp_path, rng):
    config_path, config = _synth_config(tmp_path, rng)
    assert main(["synthesize", "--config", str(config_path), "--output", str(tmp_path / "a")]) == 0
    assert main(["synthesize", "--config", str(config_path), "--output", str(tmp_path / "b")]) == 0
    manifest_a = json.loads((tmp_path / "a" / "manifest.json").read_text())
    manifest_b = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert manifest_a["checksums"] == manifest_b["checksums"]

    # a different seed must change the data
    assert (
        main(
            [
                "synthesize",
                "--config",
                str(config_path),
                "--output",
                str(tmp_path / "c"),
                "--seed",
                "8",
            ]
        )
        == 0
    )
    manifest_c = json.loads((tmp_path / "c" / "manifest.json").read_text())
    assert manifest_a["checksums"] != manifest_c["checksums"]


def test_synthesize_workers_do_not_change_output(tmp_path, rng):
    config_path, _ = _synth_config(tmp_path, rng)
    assert main(["synthesize", "--config", str(config_path), "--output", str(tmp_path / "w1")]) == 0
    assert (
        main(
            [
                "synthesize",
                "--config",
                str(config_path),
                "--output",
                str(tmp_path / "w2"),
                "--workers",
                "2",
            ]
        )
        == 0
    )
    a = json.loads((tmp_path / "w1" / "manifest.json").read_text())
    b = json.loads((tmp_path / "w2" / "manifest.json").read_text())
    assert a["checksums"] == b["checksums"]


def test_synthesize_baseline_via_flags(tmp_path, rng):
    scenes = tmp_path / "scenes"
    _write_scene(scenes, "only", rng, shorts=0)
    out = tmp_path / "out"
    code = main(
        [
            "synthesize",
            "--variant",
            "baseline",
            "--scenes-dir",
            str(scenes),
            "--output",
            str(out),
            "--frames",
            "2",
            "--patch-size",
            "16",
            "--seed",
            "1",
            "--max-translation",
            "1.0",
            "--max-rotation",
            "0.0",
        ]
    )
    assert code == 0
    samples = read_dataset(out)
    assert len(samples) == 1
    assert samples[0].meta["variant"] == "baseline"
    assert samples[0].meta["noise"]["shot_gain"] > 0


def test_synthesize_with_patch_grid(tmp_path, rng):
    config_path, config = _synth_config(
        tmp_path, rng, patch_size=8, stride=8, frames=2
    )
    assert main(["synthesize", "--config", str(config_path)]) == 0
    samples = read_dataset(config["output"])
    # two scenes, each tiled into more than one 8px patch
    assert len(samples) > 2
    assert all(s.gt.data.shape == (8, 8, 3) for s in samples)
    offsets = {tuple(s.meta["patch_offset_hr"]) for s in samples}
    assert len(offsets) > 1


# ---------------------------------------------------------------------------
# metrics command
# ---------------------------------------------------------------------------


def test_metrics_command_reports_pairs(tmp_path, rng):
    a = make_rgb(rng, 24, 24)
    write_rgb16(tmp_path / "a.rgb16", a)
    write_rgb16(tmp_path / "b.rgb16", a)
    noisy = RgbImage(np.clip(a.data + rng.normal(0, 0.05, a.data.shape), 0, 1))
    write_rgb16(tmp_path / "c.rgb16", noisy)

    out = tmp_path / "report.json"
    pairs = tmp_path / "pairs.json"
    pairs.write_text(
        json.dumps(
            [
                [str(tmp_path / "b.rgb16"), str(tmp_path / "a.rgb16")],
                [str(tmp_path / "c.rgb16"), str(tmp_path / "a.rgb16")],
            ]
        )
    )
    assert main(["metrics", "--pairs", str(pairs), "--output", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["pairs"][0]["psnr"] == "+inf"
    assert abs(report["pairs"][0]["ssim"] - 1.0) < 1e-9
    assert report["pairs"][1]["ssim"] < 1.0
    assert main(["metrics"]) == 2


# ---------------------------------------------------------------------------
# exit codes
# ---------------------------------------------------------------------------


def test_exit_code_config_errors(tmp_path):
    assert main(["synthesize", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"variant": "nonsense"}))
    assert main(["synthesize", "--config", str(bad)]) == 2
    bad.write_text(json.dumps({"typo_key": 1}))
    assert main(["synthesize", "--config", str(bad)]) == 2


def test_exit_code_data_errors(tmp_path, rng):
    scenes = tmp_path / "scenes"
    scenes.mkdir()
    out = tmp_path / "out"
    code = main(
        [
            "synthesize",
            "--variant",
            "baseline",
            "--scenes-dir",
            str(scenes),
            "--output",
            str(out),
        ]
    )
    assert code == 3  # no usable scenes

    frame = make_frame(rng, 4, 6)
    write_raw16(tmp_path / "f.raw16", frame)
    (tmp_path / "f.raw16").write_bytes(b"\x00\x01\x02")  # truncated payload
    assert main(["demosaic", str(tmp_path / "f.raw16"), str(tmp_path / "o.rgb16")]) == 3


def test_exit_code_io_errors(tmp_path, rng):
    frame = make_frame(rng, 4, 6)
    write_raw16(tmp_path / "f.raw16", frame)
    blocker = tmp_path / "not_a_dir"
    blocker.write_text("file in the way")
    code = main(
        [
            "demosaic",
            str(tmp_path / "f.raw16"),
            str(blocker / "out.rgb16"),
        ]
    )
    assert code == 4
    # a missing input is reported as missing data (the sidecar check), not I/O
    assert main(["demosaic", str(tmp_path / "nope.raw16"), str(tmp_path / "o.rgb16")]) == 3


def test_console_script_entry_point(tmp_path, rng):
    result = subprocess.run(
        [sys.executable, "-m", "burstsynth.cli", "--version"],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0
    assert result.stdout.strip() == "0.1.0"
