"""Planar homography motion: algebra, estimation, sampling, statistics.

A burst's inter-frame motion is modelled as one 3x3 projective transform per
frame, expressed relative to the base frame (index 0), which is never warped.
Empirical motion is harvested from real handheld captures and stored as
per-frame-index pools of homographies; synthetic bursts draw independently
from the pool matching each frame index, so the sampled trajectories
reproduce the per-index marginal distributions of real hand shake (but not
its temporal correlation -- see ``trajectory_stats``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from burstsynth.errors import DataError

# Denominators (projective scale w, h33) smaller than this are treated as
# degenerate rather than divided through.
_DENOM_EPS = 1e-12
_DLT_COND_LIMIT = 1e8

MOTION_FORMAT_VERSION = 1


def _inverse_3x3(m: np.ndarray) -> np.ndarray:
    """Adjugate-based inverse.

    Used instead of np.linalg.inv so that identity and pure-translation
    matrices invert without rounding error (their cofactors are exact in
    floating point), which the warp relies on for bit-exact no-op paths.
    """
    a, b, c = m[0]
    d, e, f = m[1]
    g, h, i = m[2]
    adj = np.array(
        [
            [e * i - f * h, c * h - b * i, b * f - c * e],
            [f * g - d * i, a * i - c * g, c * d - a * f],
            [d * h - e * g, b * g - a * h, a * e - b * d],
        ],
        dtype=np.float64,
    )
    det = a * adj[0, 0] + b * adj[1, 0] + c * adj[2, 0]
    if abs(det) < _DENOM_EPS:
        raise DataError("matrix is singular and cannot be inverted")
    if det == 1.0:
        return adj
    return adj / det


class Homography:
    """A 3x3 projective transform with h33 normalised to exactly 1.

    Maps a point (x, y) to ((h11 x + h12 y + h13) / w, (h21 x + h22 y + h23) / w)
    with w = h31 x + h32 y + 1.
    """

    __slots__ = ("m",)

    def __init__(self, matrix) -> None:
        m = np.array(matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise DataError(f"homography matrix must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise DataError("homography matrix contains non-finite entries")
        if abs(m[2, 2]) < _DENOM_EPS:
            raise DataError("homography h33 is ~0; cannot normalise")
        if m[2, 2] != 1.0:
            m = m / m[2, 2]
            m[2, 2] = 1.0
        # Reject non-invertible transforms up front.
        _inverse_3x3(m)
        self.m = m

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        m = np.eye(3)
        m[0, 2] = tx
        m[1, 2] = ty
        return cls(m)

    @classmethod
    def rotation(cls, theta: float) -> "Homography":
        """Rotation by theta radians about the origin (counter-clockwise in
        (x right, y down) pixel coordinates it appears clockwise on screen)."""
        c, s = math.cos(theta), math.sin(theta)
        return cls(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]))

    def apply(self, points) -> np.ndarray:
        """Transform one (2,) point or an (N, 2) array of points."""
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        p = np.atleast_2d(pts)
        if p.ndim != 2 or p.shape[1] != 2:
            raise DataError(f"points must have shape (2,) or (N, 2), got {pts.shape}")
        x, y = p[:, 0], p[:, 1]
        m = self.m
        w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
        if np.any(np.abs(w) < _DENOM_EPS):
            raise DataError("point maps to infinity (projective denominator ~0)")
        u = (m[0, 0] * x + m[0, 1] * y + m[0, 2]) / w
        v = (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / w
        out = np.stack([u, v], axis=-1)
        return out[0] if single else out

    def compose(self, other: "Homography") -> "Homography":
        """Return the transform applying ``other`` first, then ``self``."""
        return Homography(self.m @ other.m)

    def __matmul__(self, other: "Homography") -> "Homography":
        return self.compose(other)

    def invert(self) -> "Homography":
        return Homography(_inverse_3x3(self.m))

    def as_matrix(self) -> np.ndarray:
        return self.m.copy()

    def __array__(self, dtype=None, copy=None):
        m = self.m
        if dtype is not None:
            m = m.astype(dtype)
        return np.array(m) if copy else m

    def __eq__(self, other) -> bool:
        if not isinstance(other, Homography):
            return NotImplemented
        return bool(np.array_equal(self.m, other.m))

    def __hash__(self):
        return hash(self.m.tobytes())

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.m, np.eye(3)))

    def __repr__(self) -> str:
        rows = ", ".join("[" + ", ".join(f"{v:.6g}" for v in row) + "]" for row in self.m)
        return f"Homography([{rows}])"


def decompose(h: Homography) -> tuple[float, float, float]:
    """Split a homography into (tx, ty, theta).

    Translation is read off the third column; theta is the rotation angle of
    the orthogonal polar factor of the upper-left 2x2 block, i.e. the
    best-fit rigid rotation ignoring scale/shear/perspective.
    """
    m = h.m
    a = m[:2, :2]
    u, _, vt = np.linalg.svd(a)
    r = u @ vt
    if np.linalg.det(r) < 0:
        r = u @ np.diag([1.0, -1.0]) @ vt
    theta = math.atan2(r[1, 0], r[0, 0])
    return float(m[0, 2]), float(m[1, 2]), theta


def _hartley_normalize(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Translate centroid to origin and scale mean radius to sqrt(2)."""
    centroid = points.mean(axis=0)
    shifted = points - centroid
    mean_dist = np.mean(np.hypot(shifted[:, 0], shifted[:, 1]))
    if mean_dist < _DENOM_EPS:
        raise DataError("correspondence points are coincident")
    s = math.sqrt(2.0) / mean_dist
    t = np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )
    return shifted * s, t


def estimate_dlt(src_points, dst_points) -> Homography:
    """Estimate the homography mapping src points onto dst points.

    Direct linear transform with Hartley normalisation: both point sets are
    centred and scaled, each correspondence contributes two rows

        [-x, -y, -1,  0,  0,  0,  u*x, u*y, u]
        [ 0,  0,  0, -x, -y, -1,  v*x, v*y, v]

    and the solution is the right singular vector of the smallest singular
    value. Needs n >= 4 correspondences; degenerate configurations (e.g.
    three collinear source points) leave the solution underdetermined and
    are rejected via the ratio of the largest to the second-smallest
    singular value.
    """
    src = np.asarray(src_points, dtype=np.float64)
    dst = np.asarray(dst_points, dtype=np.float64)
    if src.ndim != 2 or src.shape[1] != 2 or src.shape != dst.shape:
        raise DataError(
            f"need matching (N, 2) point arrays, got {src.shape} and {dst.shape}"
        )
    n = src.shape[0]
    if n < 4:
        raise DataError(f"homography estimation needs >= 4 correspondences, got {n}")
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
        raise DataError("correspondences contain non-finite coordinates")

    src_n, t_src = _hartley_normalize(src)
    dst_n, t_dst = _hartley_normalize(dst)

    a = np.zeros((2 * n, 9))
    x, y = src_n[:, 0], src_n[:, 1]
    u, v = dst_n[:, 0], dst_n[:, 1]
    a[0::2, 0] = -x
    a[0::2, 1] = -y
    a[0::2, 2] = -1.0
    a[0::2, 6] = u * x
    a[0::2, 7] = u * y
    a[0::2, 8] = u
    a[1::2, 3] = -x
    a[1::2, 4] = -y
    a[1::2, 5] = -1.0
    a[1::2, 6] = v * x
    a[1::2, 7] = v * y
    a[1::2, 8] = v

    _, s, vh = np.linalg.svd(a)
    # A unique solution needs rank(A) == 8, i.e. the 8th-largest singular
    # value must be well clear of zero. (For n == 4 the 8x9 system has an
    # implicit nullspace beyond its 8 listed singular values, so indexing
    # from the small end would miss rank-7 degeneracies such as three
    # collinear points.)
    if s[7] < _DENOM_EPS or s[0] / s[7] > _DLT_COND_LIMIT:
        raise DataError("degenerate correspondences (e.g. collinear points)")
    h_n = vh[-1].reshape(3, 3)
    h = _inverse_3x3(t_dst) @ h_n @ t_src
    if abs(h[2, 2]) < _DENOM_EPS:
        raise DataError("estimated homography has h33 ~ 0")
    return Homography(h)


# ---------------------------------------------------------------------------
# Empirical motion datasets
# ---------------------------------------------------------------------------


@dataclass
class Capture:
    """Motion measured from one real burst: homographies for frames 2..K
    relative to frame 1 (the base frame itself carries no entry)."""

    capture_id: str
    homographies: list[Homography]


@dataclass
class MotionDataset:
    captures: list[Capture]

    def max_frames(self) -> int:
        if not self.captures:
            return 1
        return 1 + max(len(c.homographies) for c in self.captures)

    def bucket(self, frame_index: int) -> list[Homography]:
        """All measured homographies for a given burst frame index (>= 1,
        where index 0 is the base frame)."""
        if frame_index < 1:
            raise DataError(f"frame index must be >= 1, got {frame_index}")
        return [
            c.homographies[frame_index - 1]
            for c in self.captures
            if len(c.homographies) >= frame_index
        ]


def save_motion_dataset(dataset: MotionDataset, path) -> None:
    payload = {
        "format_version": MOTION_FORMAT_VERSION,
        "captures": [
            {
                "id": c.capture_id,
                "homographies": [h.m.reshape(-1).tolist() for h in c.homographies],
            }
            for c in dataset.captures
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True))


def load_motion_dataset(path) -> MotionDataset:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"motion dataset is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "captures" not in payload:
        raise DataError("motion dataset JSON must be an object with a 'captures' list")
    version = payload.get("format_version", MOTION_FORMAT_VERSION)
    if version != MOTION_FORMAT_VERSION:
        raise DataError(f"unsupported motion dataset format_version {version}")
    captures = []
    for entry in payload["captures"]:
        rows = entry.get("homographies", [])
        hs = []
        for flat in rows:
            arr = np.asarray(flat, dtype=np.float64)
            if arr.shape == (9,):
                arr = arr.reshape(3, 3)
            if arr.shape != (3, 3):
                raise DataError("each homography must be 9 numbers (row-major 3x3)")
            hs.append(Homography(arr))
        captures.append(Capture(capture_id=str(entry.get("id", "")), homographies=hs))
    return MotionDataset(captures=captures)


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_burst_motion(dataset: MotionDataset, num_frames: int, rng=None) -> list[Homography]:
    """Draw a burst trajectory from an empirical motion dataset.

    Frame 0 is the base frame and always gets the identity. Each later frame
    index draws uniformly (with replacement) from the dataset's pool of
    measured homographies for that index, independently across indices.
    """
    if num_frames < 1:
        raise DataError(f"num_frames must be >= 1, got {num_frames}")
    rng = _as_rng(rng)
    motions = [Homography.identity()]
    for index in range(1, num_frames):
        pool = dataset.bucket(index)
        if not pool:
            raise DataError(
                f"motion dataset has no samples for frame index {index} "
                f"(captures reach at most {dataset.max_frames()} frames)"
            )
        motions.append(pool[int(rng.integers(len(pool)))])
    return motions


def sample_uniform_motion(
    max_translation: float, max_rotation: float, num_frames: int, rng=None
) -> list[Homography]:
    """Baseline motion model: per frame, independent uniform draws
    tx, ty ~ U(-max_translation, max_translation) and
    theta ~ U(-max_rotation, max_rotation), composed translation-after-rotation.
    Frame 0 is the identity. Draw order per frame is (tx, ty, theta)."""
    if max_translation < 0 or max_rotation < 0:
        raise DataError("motion bounds must be >= 0")
    if num_frames < 1:
        raise DataError(f"num_frames must be >= 1, got {num_frames}")
    rng = _as_rng(rng)
    motions = [Homography.identity()]
    for _ in range(1, num_frames):
        tx = float(rng.uniform(-max_translation, max_translation))
        ty = float(rng.uniform(-max_translation, max_translation))
        theta = float(rng.uniform(-max_rotation, max_rotation))
        motions.append(Homography.translation(tx, ty).compose(Homography.rotation(theta)))
    return motions


@dataclass
class TrajectoryStats:
    """Per-frame-index motion statistics over a set of bursts.

    ``lag1_translation_autocorr`` is the Pearson correlation between
    consecutive frames' (tx, ty), pooled over all bursts and non-base frame
    pairs; it separates drifting trajectories (high correlation, as in real
    hand shake) from independently re-drawn ones (near zero) even when the
    per-index variances match.
    """

    num_bursts: int
    frames: int
    translation_mean: np.ndarray  # (frames, 2)
    translation_var: np.ndarray  # (frames, 2)
    rotation_mean: np.ndarray  # (frames,)
    rotation_var: np.ndarray  # (frames,)
    lag1_translation_autocorr: tuple[float, float]

    @property
    def lag1_translation_autocorr_mean(self) -> float:
        return float(np.mean(self.lag1_translation_autocorr))

    def to_dict(self) -> dict:
        return {
            "num_bursts": self.num_bursts,
            "frames": self.frames,
            "translation_mean": self.translation_mean.tolist(),
            "translation_var": self.translation_var.tolist(),
            "rotation_mean": self.rotation_mean.tolist(),
            "rotation_var": self.rotation_var.tolist(),
            "lag1_translation_autocorr": list(self.lag1_translation_autocorr),
            "lag1_translation_autocorr_mean": self.lag1_translation_autocorr_mean,
        }


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    if a.size < 2:
        return 0.0
    sa, sb = np.std(a), np.std(b)
    if sa < _DENOM_EPS or sb < _DENOM_EPS:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


def trajectory_stats(bursts: Sequence[Sequence[Homography]]) -> TrajectoryStats:
    """Compute per-index mean/variance of translation and rotation plus the
    pooled lag-1 translation autocorrelation for a set of burst trajectories.

    Bursts may have different lengths; per-index statistics aggregate over
    the bursts that reach each index. The base frame (index 0) is excluded
    from autocorrelation pairs since it is identically zero by construction.
    """
    if not bursts:
        raise DataError("need at least one burst")
    frames = max(len(b) for b in bursts)
    if frames < 1:
        raise DataError("bursts must contain at least one frame")

    per_index: list[list[tuple[float, float, float]]] = [[] for _ in range(frames)]
    pairs_x: list[tuple[float, float]] = []
    pairs_y: list[tuple[float, float]] = []
    for burst in bursts:
        decomposed = [decompose(h) for h in burst]
        for i, d in enumerate(decomposed):
            per_index[i].append(d)
        for i in range(1, len(decomposed) - 1):
            pairs_x.append((decomposed[i][0], decomposed[i + 1][0]))
            pairs_y.append((decomposed[i][1], decomposed[i + 1][1]))

    t_mean = np.zeros((frames, 2))
    t_var = np.zeros((frames, 2))
    r_mean = np.zeros(frames)
    r_var = np.zeros(frames)
    for i, entries in enumerate(per_index):
        arr = np.asarray(entries, dtype=np.float64)
        t_mean[i] = arr[:, :2].mean(axis=0)
        t_var[i] = arr[:, :2].var(axis=0)
        r_mean[i] = arr[:, 2].mean()
        r_var[i] = arr[:, 2].var()

    px = np.asarray(pairs_x, dtype=np.float64).reshape(-1, 2)
    py = np.asarray(pairs_y, dtype=np.float64).reshape(-1, 2)
    acx = _pearson(px[:, 0], px[:, 1]) if px.size else 0.0
    acy = _pearson(py[:, 0], py[:, 1]) if py.size else 0.0

    return TrajectoryStats(
        num_bursts=len(bursts),
        frames=frames,
        translation_mean=t_mean,
        translation_var=t_var,
        rotation_mean=r_mean,
        rotation_var=r_var,
        lag1_translation_autocorr=(acx, acy),
    )
