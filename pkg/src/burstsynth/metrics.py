"""Full-reference image quality metrics: PSNR, SSIM, MS-SSIM.

SSIM family metrics are computed on Rec.601 luma (0.299 R + 0.587 G +
0.114 B) with an 11x11 Gaussian window (sigma 1.5) and 'valid' boundary
handling, i.e. windows never extend past the image. PSNR uses the mean
squared error over all channels.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import convolve2d

from burstsynth.errors import DataError
from burstsynth.raw_core import RgbImage

#: Per-scale weights for 5-scale MS-SSIM (renormalised when fewer scales fit).
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)

_REC601 = (0.299, 0.587, 0.114)


def _as_array(image) -> np.ndarray:
    arr = image.data if isinstance(image, RgbImage) else np.asarray(image, dtype=np.float64)
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DataError("metric input contains non-finite values")
    return arr


def _luma(arr: np.ndarray) -> np.ndarray:
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] == 3:
        return _REC601[0] * arr[..., 0] + _REC601[1] * arr[..., 1] + _REC601[2] * arr[..., 2]
    raise DataError(f"images must be (H, W) or (H, W, 3), got shape {arr.shape}")


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB over all channels; +inf for
    identical inputs."""
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise DataError(f"shape mismatch: {x.shape} vs {y.shape}")
    if peak <= 0:
        raise DataError(f"peak must be > 0, got {peak}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


def _ssim_maps(x, y, kernel, peak, k1, k2):
    """Per-window luminance and contrast-structure maps ('valid' windows)."""
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    mu_x = convolve2d(x, kernel, mode="valid")
    mu_y = convolve2d(y, kernel, mode="valid")
    var_x = convolve2d(x * x, kernel, mode="valid") - mu_x * mu_x
    var_y = convolve2d(y * y, kernel, mode="valid") - mu_y * mu_y
    cov = convolve2d(x * y, kernel, mode="valid") - mu_x * mu_y
    lum = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    cs = (2.0 * cov + c2) / (var_x + var_y + c2)
    return lum, cs


def _check_pair(a, b, window_size):
    x, y = _luma(_as_array(a)), _luma(_as_array(b))
    if x.shape != y.shape:
        raise DataError(f"shape mismatch: {x.shape} vs {y.shape}")
    if min(x.shape) < window_size:
        raise DataError(
            f"image {x.shape[1]}x{x.shape[0]} is smaller than the "
            f"{window_size}x{window_size} metric window"
        )
    return x, y


def ssim(
    a,
    b,
    peak: float = 1.0,
    window_size: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    """Mean structural similarity. Can be negative for anti-correlated
    structure; identical images score exactly 1."""
    x, y = _check_pair(a, b, window_size)
    kernel = _gaussian_kernel(window_size, sigma)
    lum, cs = _ssim_maps(x, y, kernel, peak, k1, k2)
    return float(np.mean(lum * cs))


def _avg_pool_2x(x: np.ndarray) -> np.ndarray:
    h2, w2 = x.shape[0] // 2, x.shape[1] // 2
    x = x[: 2 * h2, : 2 * w2]
    return 0.25 * (x[0::2, 0::2] + x[0::2, 1::2] + x[1::2, 0::2] + x[1::2, 1::2])


def ms_ssim(
    a,
    b,
    peak: float = 1.0,
    weights=None,
    window_size: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    full_output: bool = False,
):
    """Multi-scale SSIM with 2x average-pool between scales.

    If the image is too small for all requested scales the scale count is
    reduced to what fits (every scale must still cover one window) and the
    remaining weights are renormalised; ``full_output=True`` additionally
    returns the weights actually used. Contrast terms are clamped to >= 0
    before exponentiation, so the score lies in [0, 1]; with a single scale
    it coincides with plain ``ssim`` (when that is non-negative).
    """
    x, y = _check_pair(a, b, window_size)
    weights = tuple(MS_SSIM_WEIGHTS if weights is None else weights)
    if not weights or any(w <= 0 for w in weights):
        raise DataError("scale weights must be positive")

    min_dim = min(x.shape)
    scales = len(weights)
    while scales > 1 and (min_dim >> (scales - 1)) < window_size:
        scales -= 1
    used = np.asarray(weights[:scales], dtype=np.float64)
    used = used / used.sum()

    kernel = _gaussian_kernel(window_size, sigma)
    score = 1.0
    for level in range(scales):
        lum, cs = _ssim_maps(x, y, kernel, peak, k1, k2)
        if level < scales - 1:
            term = max(float(np.mean(cs)), 0.0)
            x, y = _avg_pool_2x(x), _avg_pool_2x(y)
        else:
            term = max(float(np.mean(lum * cs)), 0.0)
        score *= term ** used[level]
    score = float(score)
    if full_output:
        return score, tuple(float(w) for w in used)
    return score


def evaluate_pair(pred, ref, peak: float = 1.0) -> dict:
    """All metrics for one prediction/reference pair, as a JSON-able dict."""
    value, used = ms_ssim(pred, ref, peak=peak, full_output=True)
    return {
        "psnr": psnr(pred, ref, peak=peak),
        "ssim": ssim(pred, ref, peak=peak),
        "ms_ssim": value,
        "ms_ssim_scales": len(used),
    }
