"""Shared helpers: write engine-format files and drive the engine CLI to
produce real datasets for the tests. Kept free of any engine imports — the
file formats and the CLI are the contract."""

import json
import subprocess
import sys

import numpy as np

ENGINE = [sys.executable, "-m", "burstsynth.cli"]


def write_raw16(path, data, cfa="RGGB", black=64, white=1023):
    data = np.asarray(data, dtype=np.uint16)
    path.write_bytes(data.astype("<u2").tobytes())
    path.with_suffix(".json").write_text(
        json.dumps(
            {
                "width": data.shape[1],
                "height": data.shape[0],
                "cfa": cfa,
                "black_level": black,
                "white_level": white,
            }
        )
    )


def write_rgb16(path, rgb):
    rgb = np.asarray(rgb, dtype=np.float64)
    codes = np.round(np.clip(rgb, 0.0, 1.0) * 65535.0).astype("<u2")
    path.write_bytes(codes.tobytes())
    path.with_suffix(".json").write_text(
        json.dumps({"width": rgb.shape[1], "height": rgb.shape[0], "channels": 3})
    )


def read_rgb16_codes(path):
    meta = json.loads(path.with_suffix(".json").read_text())
    return (
        np.frombuffer(path.read_bytes(), dtype="<u2")
        .reshape(meta["height"], meta["width"], 3)
        .copy()
    )


def run_engine(*args):
    result = subprocess.run(ENGINE + [str(a) for a in args], capture_output=True, text=True)
    assert result.returncode == 0, f"engine CLI failed: {result.stderr}"
    return result


def write_motion(path, rng, captures=3, length=8, spread=1.0):
    def translation(tx, ty):
        return [1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0]

    payload = {
        "format_version": 1,
        "captures": [
            {
                "id": f"c{i}",
                "homographies": [
                    translation(*rng.uniform(-spread, spread, 2)) for _ in range(length)
                ],
            }
            for i in range(captures)
        ],
    }
    path.write_text(json.dumps(payload))


def make_dataset(root, rng, scenes=1, size=32, frames=4, patch_size=16, seed=5):
    """Build scenes + motion on disk, then run the engine's synthesize."""
    scenes_dir = root / "scenes"
    for s in range(scenes):
        scene = scenes_dir / f"scene_{s}"
        scene.mkdir(parents=True)
        for i in range(frames):
            write_raw16(
                scene / f"short_{i:02d}.raw16",
                rng.integers(64, 1024, size=(size, size)),
            )
        write_rgb16(scene / "gt.rgb16", rng.random((size, size, 3)))
    motion = root / "motion.json"
    write_motion(motion, rng)
    out = root / "dataset"
    run_engine(
        "synthesize",
        "--scenes-dir", scenes_dir,
        "--output", out,
        "--motion-dataset", motion,
        "--frames", frames,
        "--patch-size", patch_size,
        "--seed", seed,
    )
    return out
