"""RAW Bayer kernels: normalisation, demosaic/mosaic, downsampling, warping,
4-channel packing, and the binary file formats.

Everything here is deliberately nearest-neighbour and top-left-phased so that
a low-resolution pipeline output can be traced back to individual sensor
samples: with zero motion, every value that survives the
demosaic -> downsample -> mosaic chain is a bit-exact copy of one original
sample of the same CFA colour. That property is what lets the engine carry
real sensor noise into the synthetic burst instead of re-synthesising it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from burstsynth.errors import DataError

_DENOM_EPS = 1e-12

# Channel indices used throughout: 0 = R, 1 = G, 2 = B.
_CFA_TILES = {
    "RGGB": ((0, 1), (1, 2)),
    "BGGR": ((2, 1), (1, 0)),
    "GRBG": ((1, 0), (2, 1)),
    "GBRG": ((1, 2), (0, 1)),
}


class CfaPattern(str, Enum):
    RGGB = "RGGB"
    BGGR = "BGGR"
    GRBG = "GRBG"
    GBRG = "GBRG"

    @property
    def tile(self) -> tuple[tuple[int, int], tuple[int, int]]:
        """2x2 tile of channel indices; tile[y % 2][x % 2] is the channel
        measured at pixel (x, y)."""
        return _CFA_TILES[self.value]

    def channel_at(self, x: int, y: int) -> int:
        return self.tile[y % 2][x % 2]

    def site_of(self, channel: int) -> tuple[int, int]:
        """Tile position (ty, tx) of a non-green channel (0 = R, 2 = B)."""
        for ty in range(2):
            for tx in range(2):
                if self.tile[ty][tx] == channel:
                    return ty, tx
        raise DataError(f"channel {channel} not unique in {self.value}")


def as_cfa(value) -> CfaPattern:
    if isinstance(value, CfaPattern):
        return value
    try:
        return CfaPattern(str(value).upper())
    except ValueError as exc:
        raise DataError(f"unknown CFA pattern {value!r}") from exc


@dataclass
class RawBayerFrame:
    """A single mosaiced sensor readout plus its calibration levels."""

    data: np.ndarray  # (H, W) uint16
    cfa: CfaPattern
    black_level: int
    white_level: int

    def __post_init__(self) -> None:
        if not isinstance(self.data, np.ndarray) or self.data.dtype != np.uint16:
            raise DataError("raw frame data must be a uint16 ndarray")
        if self.data.ndim != 2:
            raise DataError(f"raw frame must be 2-D, got shape {self.data.shape}")
        h, w = self.data.shape
        if h < 2 or w < 2 or h % 2 or w % 2:
            raise DataError(f"raw frame dimensions must be even and >= 2, got {w}x{h}")
        self.cfa = as_cfa(self.cfa)
        self.black_level = int(self.black_level)
        self.white_level = int(self.white_level)
        if not (0 <= self.black_level < self.white_level <= 65535):
            raise DataError(
                f"need 0 <= black < white <= 65535, got "
                f"black={self.black_level} white={self.white_level}"
            )
        lo, hi = int(self.data.min()), int(self.data.max())
        if lo < self.black_level or hi > self.white_level:
            raise DataError(
                f"samples [{lo}, {hi}] fall outside levels "
                f"[{self.black_level}, {self.white_level}]"
            )

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class RgbImage:
    """Float64 RGB raster. Values must be finite; they may exceed [0, 1]
    transiently (e.g. chroma overshoot inside the pipeline) and are clamped
    only at serialisation."""

    data: np.ndarray  # (H, W, 3) float64

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise DataError(f"RGB image must have shape (H, W, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("RGB image contains non-finite values")
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class PackedRaw4:
    """Bayer plane rearranged into 4 half-resolution channels in the fixed
    order R, G (R row), G (B row), B. Values are normalised to [0, 1]; the
    originating calibration levels ride along for serialisation."""

    data: np.ndarray  # (4, h, w) float64
    cfa: CfaPattern
    black_level: int = 0
    white_level: int = 65535

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != 4:
            raise DataError(f"packed raw must have shape (4, h, w), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("packed raw contains non-finite values")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise DataError("packed raw values must lie in [0, 1]")
        self.data = arr
        self.cfa = as_cfa(self.cfa)
        self.black_level = int(self.black_level)
        self.white_level = int(self.white_level)
        if not (0 <= self.black_level < self.white_level <= 65535):
            raise DataError("need 0 <= black < white <= 65535")

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


# ---------------------------------------------------------------------------
# Core kernels
# ---------------------------------------------------------------------------


def normalize(frame: RawBayerFrame) -> np.ndarray:
    """Map sensor samples to [0, 1]: (sample - black) / (white - black)."""
    span = frame.white_level - frame.black_level
    return (frame.data.astype(np.float64) - frame.black_level) / span


def _step_to_parity(coords: np.ndarray, parity: int) -> np.ndarray:
    """Move each coordinate to the nearest one of the given parity: matching
    coordinates stay put, even ones step +1, odd ones step -1. On even-sized
    images the result is always in bounds, so no border clamping is needed."""
    mismatch = coords % 2 != parity
    stepped = np.where(coords % 2 == 0, coords + 1, coords - 1)
    return np.where(mismatch, stepped, coords)


def _green_fill_sources(height: int, width: int, cfa: CfaPattern):
    """Index maps (sy, sx): the site whose measured green fills each pixel.

    Green sites keep their own sample. Non-green sites copy an adjacent
    green by a fixed per-tile-position rule:

      tile (0, 0): the green below   (x, y + 1)
      tile (0, 1): the green left    (x - 1, y)
      tile (1, 0): the green above   (x, y - 1)
      tile (1, 1): the green left    (x - 1, y)

    All four directions land on a green site of every CFA pattern and stay
    in bounds on even-sized images. The directions are chosen so that a
    non-green site and the chroma source used to reconstruct its missing
    colour (see ``_nearest_site_sources``) share the *same* green source;
    that shared green is what makes the chroma-difference reconstruction
    collapse to exact sample copies on the sites the 2x downsample reads.
    """
    yy, xx = np.mgrid[0:height, 0:width]
    sy = yy.copy()
    sx = xx.copy()
    tile = cfa.tile
    for ty in range(2):
        for tx in range(2):
            if tile[ty][tx] == 1:
                continue
            mask = (yy % 2 == ty) & (xx % 2 == tx)
            if tx == 1:
                sx[mask] -= 1
            elif ty == 0:
                sy[mask] += 1
            else:
                sy[mask] -= 1
    return sy, sx


def _nearest_site_sources(height: int, width: int, ty: int, tx: int):
    """Index maps to the nearest pixel at tile position (ty, tx); distance-1
    ties resolve by coordinate parity (even steps +1, odd steps -1), which
    never leaves an even-sized image."""
    yy, xx = np.mgrid[0:height, 0:width]
    return _step_to_parity(yy, ty), _step_to_parity(xx, tx)


def nn_demosaic(mosaic_plane: np.ndarray, cfa) -> RgbImage:
    """Nearest-neighbour demosaic of a normalised Bayer plane.

    Three steps: (1) fill the green channel everywhere by copying each
    non-green site's adjacent green (see ``_green_fill_sources`` for the
    direction policy); (2) form the chroma differences R - G and B - G at
    their measured sites and propagate them to every pixel from the nearest
    same-colour site (distance-1 ties resolve by coordinate parity);
    (3) reconstruct R = G + (R - G) and B = G + (B - G).

    The reconstruction is evaluated as (G - G[src]) + sample[src] so that a
    pixel whose green fill coincides with its chroma source's green fill
    receives the source sample bit-exactly, with no round-off from adding
    and subtracting unequal greens. In particular every measured site keeps
    its own sample in its own channel.
    """
    m = np.asarray(mosaic_plane, dtype=np.float64)
    if m.ndim != 2:
        raise DataError(f"mosaic plane must be 2-D, got shape {m.shape}")
    h, w = m.shape
    if h < 2 or w < 2 or h % 2 or w % 2:
        raise DataError(f"mosaic dimensions must be even and >= 2, got {w}x{h}")
    cfa = as_cfa(cfa)

    gy, gx = _green_fill_sources(h, w, cfa)
    g = m[gy, gx]

    rgb = np.empty((h, w, 3), dtype=np.float64)
    rgb[..., 1] = g
    for channel in (0, 2):
        ty, tx = cfa.site_of(channel)
        sy, sx = _nearest_site_sources(h, w, ty, tx)
        # Grouped for exact cancellation when g == g[sy, sx]; do not
        # rewrite as g + (m[...] - g[...]).
        rgb[..., channel] = (g - g[sy, sx]) + m[sy, sx]
    return RgbImage(rgb)


def mosaic(image: RgbImage, cfa) -> np.ndarray:
    """Sample an RGB image back onto a Bayer plane: each output pixel is the
    input's value in that site's CFA channel, untouched."""
    cfa = as_cfa(cfa)
    data = image.data
    h, w = data.shape[:2]
    if h % 2 or w % 2:
        raise DataError(f"mosaic target dimensions must be even, got {w}x{h}")
    out = np.empty((h, w), dtype=np.float64)
    tile = cfa.tile
    for ty in range(2):
        for tx in range(2):
            out[ty::2, tx::2] = data[ty::2, tx::2, tile[ty][tx]]
    return out


def nn_downsample_2x(image: RgbImage) -> RgbImage:
    """Decimate by 2 keeping the top-left pixel of every 2x2 block:
    out(x, y) = in(2x, 2y). No filtering, so sample values (and their noise)
    pass through bit-identical."""
    data = image.data
    h, w = data.shape[:2]
    if h % 2 or w % 2:
        raise DataError(f"downsample input dimensions must be even, got {w}x{h}")
    return RgbImage(data[0::2, 0::2].copy())


def _translation_matrix(tx: float, ty: float) -> np.ndarray:
    m = np.eye(3)
    m[0, 2] = tx
    m[1, 2] = ty
    return m


def _inverse_3x3(m: np.ndarray) -> np.ndarray:
    # Adjugate inverse: exact for identity / integer-translation matrices,
    # which keeps the no-op warp bit-exact.
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
        raise DataError("homography is singular; cannot warp")
    if det == 1.0:
        return adj
    return adj / det


def warp_perspective(image, h, center_anchored: bool = True):
    """Warp an image by a homography using inverse mapping with bilinear
    interpolation; out-of-bounds reads clamp to the nearest edge pixel.

    ``image`` may be an RgbImage or a bare 2-D/3-D array; the return value
    mirrors the input kind. With ``center_anchored`` the transform is
    conjugated by a shift of the image centre ((W-1)/2, (H-1)/2), i.e.
    rotations/scalings pivot about the centre rather than the top-left
    corner. The identity homography reproduces the input bit-exactly.
    """
    m = np.array(np.asarray(h), dtype=np.float64)
    if m.shape != (3, 3):
        raise DataError(f"homography must be 3x3, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DataError("homography contains non-finite entries")
    wrap = isinstance(image, RgbImage)
    data = image.data if wrap else np.asarray(image, dtype=np.float64)
    if data.ndim not in (2, 3):
        raise DataError(f"image must be 2-D or 3-D, got shape {data.shape}")
    hgt, wid = data.shape[:2]
    if center_anchored:
        cx = (wid - 1) / 2.0
        cy = (hgt - 1) / 2.0
        m = _translation_matrix(cx, cy) @ m @ _translation_matrix(-cx, -cy)
    minv = _inverse_3x3(m)

    yy, xx = np.mgrid[0:hgt, 0:wid].astype(np.float64)
    w = minv[2, 0] * xx + minv[2, 1] * yy + minv[2, 2]
    w = np.where(np.abs(w) < _DENOM_EPS, np.nan, w)
    u = (minv[0, 0] * xx + minv[0, 1] * yy + minv[0, 2]) / w
    v = (minv[1, 0] * xx + minv[1, 1] * yy + minv[1, 2]) / w
    u = np.nan_to_num(np.clip(u, 0, wid - 1))
    v = np.nan_to_num(np.clip(v, 0, hgt - 1))

    x0 = np.floor(u).astype(np.intp)
    y0 = np.floor(v).astype(np.intp)
    x1 = np.minimum(x0 + 1, wid - 1)
    y1 = np.minimum(y0 + 1, hgt - 1)
    fx = u - x0
    fy = v - y0
    if data.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]

    top = (1.0 - fx) * data[y0, x0] + fx * data[y0, x1]
    bottom = (1.0 - fx) * data[y1, x0] + fx * data[y1, x1]
    out = (1.0 - fy) * top + fy * bottom
    return RgbImage(out) if wrap else out


def _pack_positions(cfa: CfaPattern):
    """Tile positions for the packed channel order R, G(R row), G(B row), B."""
    ry, rx = cfa.site_of(0)
    by, bx = cfa.site_of(2)
    return (ry, rx), (ry, 1 - rx), (by, 1 - bx), (by, bx)


def pack_raw4(
    plane: np.ndarray, cfa, black_level: int = 0, white_level: int = 65535
) -> PackedRaw4:
    """Rearrange a normalised Bayer plane into 4 half-resolution channels
    (R, G from the R row, G from the B row, B). Pure reindexing."""
    m = np.asarray(plane, dtype=np.float64)
    if m.ndim != 2:
        raise DataError(f"plane must be 2-D, got shape {m.shape}")
    h, w = m.shape
    if h < 2 or w < 2 or h % 2 or w % 2:
        raise DataError(f"plane dimensions must be even and >= 2, got {w}x{h}")
    cfa = as_cfa(cfa)
    channels = [m[ty::2, tx::2] for ty, tx in _pack_positions(cfa)]
    return PackedRaw4(
        data=np.stack(channels, axis=0),
        cfa=cfa,
        black_level=black_level,
        white_level=white_level,
    )


def unpack_raw4(packed: PackedRaw4) -> np.ndarray:
    """Inverse of pack_raw4: interleave the 4 channels back into a Bayer
    plane of twice the height and width."""
    h, w = packed.height, packed.width
    out = np.empty((2 * h, 2 * w), dtype=np.float64)
    for channel, (ty, tx) in zip(packed.data, _pack_positions(packed.cfa)):
        out[ty::2, tx::2] = channel
    return out


# ---------------------------------------------------------------------------
# File formats: <name>.raw16 / .rgb16 / .raw4, each with a <name>.json sidecar
# ---------------------------------------------------------------------------


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def _write_sidecar(path: Path, payload: dict) -> None:
    _sidecar_path(path).write_text(json.dumps(payload, indent=1, sort_keys=True))


def _read_sidecar(path: Path) -> dict:
    sidecar = _sidecar_path(path)
    if not sidecar.exists():
        raise DataError(f"missing sidecar {sidecar}")
    try:
        payload = json.loads(sidecar.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"sidecar {sidecar} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise DataError(f"sidecar {sidecar} must contain a JSON object")
    return payload


def _expect_bytes(path: Path, blob: bytes, expected: int) -> None:
    if len(blob) != expected:
        raise DataError(
            f"{path} holds {len(blob)} bytes, expected {expected}"
        )


def write_raw16(path, frame: RawBayerFrame) -> None:
    """Little-endian uint16 Bayer plane, row-major, plus JSON sidecar."""
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(frame.data.astype("<u2")).tobytes())
    _write_sidecar(
        path,
        {
            "width": frame.width,
            "height": frame.height,
            "cfa": frame.cfa.value,
            "black_level": frame.black_level,
            "white_level": frame.white_level,
        },
    )


def read_raw16(path) -> RawBayerFrame:
    path = Path(path)
    meta = _read_sidecar(path)
    try:
        width, height = int(meta["width"]), int(meta["height"])
        cfa = as_cfa(meta["cfa"])
        black, white = int(meta["black_level"]), int(meta["white_level"])
    except KeyError as exc:
        raise DataError(f"sidecar for {path} lacks field {exc}") from exc
    blob = path.read_bytes()
    _expect_bytes(path, blob, 2 * width * height)
    data = np.frombuffer(blob, dtype="<u2").reshape(height, width).astype(np.uint16)
    return RawBayerFrame(data=data, cfa=cfa, black_level=black, white_level=white)


def quantize_rgb16(image: RgbImage) -> np.ndarray:
    """Clamp to [0, 1] and quantise to uint16 (rounding to nearest)."""
    return np.round(np.clip(image.data, 0.0, 1.0) * 65535.0).astype(np.uint16)


def write_rgb16(path, image: RgbImage) -> None:
    """Little-endian uint16 interleaved RGB, row-major, plus JSON sidecar.
    Values are clamped to [0, 1] and quantised to 16 bits."""
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(quantize_rgb16(image).astype("<u2")).tobytes())
    _write_sidecar(path, {"width": image.width, "height": image.height, "channels": 3})


def read_rgb16(path) -> RgbImage:
    path = Path(path)
    meta = _read_sidecar(path)
    try:
        width, height = int(meta["width"]), int(meta["height"])
        channels = int(meta.get("channels", 3))
    except KeyError as exc:
        raise DataError(f"sidecar for {path} lacks field {exc}") from exc
    if channels != 3:
        raise DataError(f"{path}: expected 3 channels, sidecar says {channels}")
    blob = path.read_bytes()
    _expect_bytes(path, blob, 2 * width * height * 3)
    data = np.frombuffer(blob, dtype="<u2").reshape(height, width, 3)
    return RgbImage(data.astype(np.float64) / 65535.0)


def write_raw4(path, packed: PackedRaw4) -> None:
    """Little-endian uint16, channel-major (4, h, w), plus JSON sidecar.
    Values are mapped back onto the sensor grid:
    code = round(v * (white - black)) + black."""
    path = Path(path)
    span = packed.white_level - packed.black_level
    codes = np.round(packed.data * span) + packed.black_level
    path.write_bytes(np.ascontiguousarray(codes.astype("<u2")).tobytes())
    _write_sidecar(
        path,
        {
            "width": packed.width,
            "height": packed.height,
            "channels": 4,
            "cfa": packed.cfa.value,
            "black_level": packed.black_level,
            "white_level": packed.white_level,
        },
    )


def read_raw4(path) -> PackedRaw4:
    path = Path(path)
    meta = _read_sidecar(path)
    try:
        width, height = int(meta["width"]), int(meta["height"])
        channels = int(meta.get("channels", 4))
        cfa = as_cfa(meta["cfa"])
        black, white = int(meta["black_level"]), int(meta["white_level"])
    except KeyError as exc:
        raise DataError(f"sidecar for {path} lacks field {exc}") from exc
    if channels != 4:
        raise DataError(f"{path}: expected 4 channels, sidecar says {channels}")
    blob = path.read_bytes()
    _expect_bytes(path, blob, 2 * 4 * width * height)
    codes = np.frombuffer(blob, dtype="<u2").reshape(4, height, width)
    if codes.min() < black or codes.max() > white:
        raise DataError(f"{path}: samples fall outside levels [{black}, {white}]")
    data = (codes.astype(np.float64) - black) / (white - black)
    return PackedRaw4(data=data, cfa=cfa, black_level=black, white_level=white)
