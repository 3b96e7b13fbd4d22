import json
import math

import numpy as np
import pytest
from scipy import stats as scipy_stats

from burstsynth.errors import DataError
from burstsynth.motion import (
    Capture,
    Homography,
    MotionDataset,
    decompose,
    estimate_dlt,
    load_motion_dataset,
    sample_burst_motion,
    sample_uniform_motion,
    save_motion_dataset,
    trajectory_stats,
)


# ---------------------------------------------------------------------------
# Homography algebra
# ---------------------------------------------------------------------------


def test_identity_and_translation_apply():
    assert np.array_equal(Homography.identity().apply((3.0, -4.0)), [3.0, -4.0])
    t = Homography.translation(2.5, -1.0)
    assert np.array_equal(t.apply((1.0, 1.0)), [3.5, 0.0])


def test_projective_row_divides_through():
    h = Homography([[1, 0, 0], [0, 1, 0], [0.001, 0, 1]])
    out = h.apply((10.0, 0.0))
    assert abs(out[0] - 10.0 / 1.01) < 1e-12
    assert out[1] == 0.0
    assert abs(out[0] - 9.900990099009901) < 1e-12


def test_apply_rejects_points_at_infinity():
    h = Homography([[1, 0, 0], [0, 1, 0], [-0.1, 0, 1]])
    with pytest.raises(DataError):
        h.apply((10.0, 0.0))


def test_h33_is_normalised_on_construction():
    h = Homography(2.0 * np.eye(3))
    assert h.is_identity()


def test_constructor_rejects_singular_and_malformed():
    with pytest.raises(DataError):
        Homography(np.zeros((3, 3)))
    m = np.eye(3)
    m[1] = m[0]  # rank 2
    with pytest.raises(DataError):
        Homography(m)
    with pytest.raises(DataError):
        Homography(np.eye(4))
    bad = np.eye(3)
    bad[0, 1] = np.nan
    with pytest.raises(DataError):
        Homography(bad)


def test_compose_applies_right_operand_first(rng):
    a = Homography([[1.1, 0.02, 3.0], [-0.01, 0.97, -2.0], [1e-4, -5e-5, 1.0]])
    b = Homography.translation(5.0, -1.5)
    pts = rng.uniform(-10, 10, size=(20, 2))
    assert np.allclose(a.compose(b).apply(pts), a.apply(b.apply(pts)), atol=1e-12)
    assert np.allclose((a @ b).apply(pts), a.apply(b.apply(pts)), atol=1e-12)


def test_translations_compose_exactly():
    t = Homography.translation(2.0, 3.0) @ Homography.translation(-0.5, 1.0)
    assert t == Homography.translation(1.5, 4.0)


def test_invert_roundtrip(rng):
    h = Homography([[1.02, -0.03, 4.0], [0.05, 0.99, -6.0], [2e-4, -1e-4, 1.0]])
    assert np.allclose((h @ h.invert()).m, np.eye(3), atol=1e-12)
    assert np.allclose((h.invert() @ h).m, np.eye(3), atol=1e-12)


def test_decompose_reads_translation_and_rotation():
    h = Homography.translation(3.0, -7.0) @ Homography.rotation(0.25)
    tx, ty, theta = decompose(h)
    assert (tx, ty) == (3.0, -7.0)
    assert abs(theta - 0.25) < 1e-12
    # scale does not bias the rotation estimate
    scaled = Homography(h.m * np.array([[1.2, 1.2, 1.0]]).T)
    assert abs(decompose(scaled)[2] - 0.25) < 1e-12


# ---------------------------------------------------------------------------
# DLT estimation
# ---------------------------------------------------------------------------


def test_dlt_recovers_translation_from_unit_square():
    src = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    dst = src + np.array([0.3, -0.2])
    h = estimate_dlt(src, dst)
    assert np.allclose(h.m, Homography.translation(0.3, -0.2).m, atol=1e-9)


def test_dlt_recovers_random_homographies(rng):
    for _ in range(25):
        h_true = Homography(
            np.array(
                [
                    [1 + rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02), rng.uniform(-5, 5)],
                    [rng.uniform(-0.02, 0.02), 1 + rng.uniform(-0.02, 0.02), rng.uniform(-5, 5)],
                    [rng.uniform(-1e-4, 1e-4), rng.uniform(-1e-4, 1e-4), 1.0],
                ]
            )
        )
        src = rng.uniform(0, 200, size=(12, 2))
        h_est = estimate_dlt(src, h_true.apply(src))
        assert np.max(np.abs(h_est.m - h_true.m)) < 1e-6


def test_dlt_rejects_degenerate_input():
    collinear = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    with pytest.raises(DataError):
        estimate_dlt(collinear, collinear + 1.0)
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(DataError):
        estimate_dlt(square[:3], square[:3])
    three_collinear = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
    with pytest.raises(DataError):
        estimate_dlt(three_collinear, three_collinear + 0.5)
    same_point = np.zeros((4, 2))
    with pytest.raises(DataError):
        estimate_dlt(same_point, same_point)


# ---------------------------------------------------------------------------
# Motion dataset and sampling
# ---------------------------------------------------------------------------


def _toy_dataset(rng, captures=3, frames=5):
    out = []
    for c in range(captures):
        hs = [
            Homography.translation(
                float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3))
            )
            @ Homography.rotation(float(rng.uniform(-0.02, 0.02)))
            for _ in range(frames - 1)
        ]
        out.append(Capture(capture_id=f"c{c:03d}", homographies=hs))
    return MotionDataset(captures=out)


def test_motion_dataset_json_roundtrip(tmp_path, rng):
    dataset = _toy_dataset(rng)
    path = tmp_path / "motion.json"
    save_motion_dataset(dataset, path)
    back = load_motion_dataset(path)
    assert len(back.captures) == len(dataset.captures)
    for a, b in zip(back.captures, dataset.captures):
        assert a.capture_id == b.capture_id
        assert all(x == y for x, y in zip(a.homographies, b.homographies))


def test_load_motion_dataset_rejects_garbage(tmp_path):
    path = tmp_path / "motion.json"
    path.write_text("not json")
    with pytest.raises(DataError):
        load_motion_dataset(path)
    path.write_text(json.dumps({"captures": [{"id": "x", "homographies": [[1, 2, 3]]}]}))
    with pytest.raises(DataError):
        load_motion_dataset(path)


def test_sample_burst_motion_base_frame_and_membership(rng):
    dataset = _toy_dataset(rng)
    burst = sample_burst_motion(dataset, 5, rng)
    assert burst[0].is_identity()
    for index in range(1, 5):
        assert burst[index] in dataset.bucket(index)


def test_sample_burst_motion_single_capture_is_deterministic(rng):
    dataset = _toy_dataset(rng, captures=1)
    burst = sample_burst_motion(dataset, 5, rng)
    assert burst[1:] == dataset.captures[0].homographies[:4]


def test_sample_burst_motion_errors_when_pool_is_empty(rng):
    dataset = _toy_dataset(rng, captures=2, frames=3)
    with pytest.raises(DataError):
        sample_burst_motion(dataset, 6, rng)


def test_sample_burst_motion_seed_determinism(rng):
    dataset = _toy_dataset(rng)
    a = sample_burst_motion(dataset, 5, np.random.default_rng(7))
    b = sample_burst_motion(dataset, 5, np.random.default_rng(7))
    assert a == b


def test_sample_burst_motion_draws_uniformly(rng):
    dataset = _toy_dataset(rng, captures=3)
    pool = dataset.bucket(1)
    counts = {0: 0, 1: 0, 2: 0}
    n = 600
    for _ in range(n):
        h = sample_burst_motion(dataset, 2, rng)[1]
        counts[pool.index(h)] += 1
    sigma = math.sqrt(n * (1 / 3) * (2 / 3))
    for c in counts.values():
        assert abs(c - n / 3) < 4 * sigma


def test_sample_uniform_motion_zero_bounds_gives_identity(rng):
    burst = sample_uniform_motion(0.0, 0.0, 4, rng)
    assert all(h.is_identity() for h in burst)


def test_sample_uniform_motion_translations_are_uniform():
    rng = np.random.default_rng(99)
    n = 1500
    txs = [
        decompose(sample_uniform_motion(4.0, 0.0, 2, rng)[1])[0] for _ in range(n)
    ]
    result = scipy_stats.kstest(txs, "uniform", args=(-4.0, 8.0))
    assert result.pvalue > 0.01
    assert max(abs(t) for t in txs) <= 4.0


# ---------------------------------------------------------------------------
# Trajectory statistics
# ---------------------------------------------------------------------------


def test_trajectory_stats_all_identity():
    bursts = [[Homography.identity()] * 4 for _ in range(5)]
    s = trajectory_stats(bursts)
    assert s.frames == 4 and s.num_bursts == 5
    assert np.array_equal(s.translation_mean, np.zeros((4, 2)))
    assert np.array_equal(s.translation_var, np.zeros((4, 2)))
    assert s.lag1_translation_autocorr == (0.0, 0.0)


def _drift_bursts(rng, n, frames=6):
    """Random-walk trajectories: consecutive translations share direction."""
    bursts = []
    for _ in range(n):
        vx, vy = rng.uniform(0.5, 2.0), rng.uniform(-2.0, -0.5)
        burst = [Homography.identity()]
        for j in range(1, frames):
            burst.append(
                Homography.translation(
                    j * vx + rng.normal(0, 0.05), j * vy + rng.normal(0, 0.05)
                )
            )
        bursts.append(burst)
    return bursts


def test_trajectory_stats_separates_drift_from_uniform():
    rng = np.random.default_rng(5)
    drift = trajectory_stats(_drift_bursts(rng, 300))
    uniform = trajectory_stats(
        [sample_uniform_motion(4.0, 0.01, 6, rng) for _ in range(300)]
    )
    assert drift.lag1_translation_autocorr_mean > 0.9
    assert abs(uniform.lag1_translation_autocorr_mean) < 0.1


def test_trajectory_stats_per_index_means(rng):
    bursts = [
        [Homography.identity(), Homography.translation(2.0, 1.0)],
        [Homography.identity(), Homography.translation(4.0, 3.0)],
    ]
    s = trajectory_stats(bursts)
    assert np.allclose(s.translation_mean[1], [3.0, 2.0])
    assert np.allclose(s.translation_var[1], [1.0, 1.0])
    d = s.to_dict()
    assert d["frames"] == 2
    assert len(d["translation_mean"]) == 2
