"""Raster type, binary PGM/PPM io and the pixel operations used by the lane pipeline.

Rasters hold 8-bit samples in a read-only numpy array of shape ``(h, w)`` for
single-channel images or ``(h, w, 3)`` for BGR images. Pixel ``(x, y)`` has its
center at integer coordinates, so the geometric center of a ``w x h`` image is
``((w - 1) / 2, (h - 1) / 2)``.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np


class PnmFormatError(ValueError):
    """Raised for malformed or unsupported PGM/PPM files."""


@dataclass(frozen=True)
class Raster:
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
            raise ValueError(f"raster data must be (h, w) or (h, w, 3), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("raster must be at least 1x1")
        if arr.dtype != np.uint8:
            if np.any(arr < 0) or np.any(arr > 255):
                raise ValueError("raster samples must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.array(arr, dtype=np.uint8, copy=True)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    @classmethod
    def zeros(cls, width: int, height: int, channels: int = 1) -> "Raster":
        shape = (height, width) if channels == 1 else (height, width, 3)
        return cls(np.zeros(shape, dtype=np.uint8))

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True)
class Kernel2D:
    """Square odd-sized kernel; morphology uses only its footprint."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 == 0:
            raise ValueError("kernel must be square with odd size")
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def square(cls, size: int) -> "Kernel2D":
        return cls(np.ones((size, size)))


def _to_uint8(values: np.ndarray) -> np.ndarray:
    # round half up; np.rint would round half to even
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# PGM / PPM

def _read_token(buf: bytes, pos: int, field: str) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PnmFormatError(f"missing {field} in header")
    return buf[start:pos], pos


def parse_pnm(buf: bytes) -> Raster:
    """Decode an in-memory binary PGM (P5) or PPM (P6) image with maxval 255."""
    magic, pos = _read_token(buf, 0, "magic")
    if magic not in (b"P5", b"P6"):
        raise PnmFormatError(f"bad magic {magic!r}: expected P5 or P6")
    values = {}
    for field in ("width", "height", "maxval"):
        tok, pos = _read_token(buf, pos, field)
        try:
            values[field] = int(tok)
        except ValueError:
            raise PnmFormatError(f"non-integer {field} {tok!r}") from None
    if values["width"] < 1 or values["height"] < 1:
        raise PnmFormatError(f"bad width/height {values['width']}x{values['height']}")
    if values["maxval"] != 255:
        raise PnmFormatError(f"unsupported maxval {values['maxval']}: only 255 is accepted")
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise PnmFormatError("missing whitespace after maxval")
    pos += 1
    channels = 1 if magic == b"P5" else 3
    w, h = values["width"], values["height"]
    need = w * h * channels
    payload = buf[pos:pos + need]
    if len(payload) < need:
        raise PnmFormatError(f"truncated payload: expected {need} bytes, got {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.uint8)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return Raster(arr.reshape(shape))


def load_pnm(path) -> Raster:
    with open(path, "rb") as fh:
        buf = fh.read()
    try:
        return parse_pnm(buf)
    except PnmFormatError as exc:
        raise PnmFormatError(f"{os.fspath(path)}: {exc}") from None


def encode_pnm(img: Raster) -> bytes:
    magic = "P5" if img.channels == 1 else "P6"
    header = f"{magic}\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.data.tobytes()


def save_pnm(img: Raster, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pnm(img))


# ---------------------------------------------------------------------------
# geometric resampling

def sample_bilinear(src: np.ndarray, xs: np.ndarray, ys: np.ndarray, border: str = "zero") -> np.ndarray:
    """Bilinearly sample ``src`` (h, w[, c]) at float coordinates.

    ``border="zero"`` treats pixels outside the image as 0; ``"clamp"`` clamps
    coordinates to the image bounds. Returns float samples shaped like ``xs``
    (plus the channel axis for color sources).
    """
    src = np.asarray(src, dtype=float)
    h, w = src.shape[:2]
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if border == "clamp":
        xs = np.clip(xs, 0.0, w - 1)
        ys = np.clip(ys, 0.0, h - 1)
    elif border != "zero":
        raise ValueError(f"unknown border mode {border!r}")
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    # a one-pixel zero frame makes every out-of-range tap land on a zero
    pad = np.zeros((h + 2, w + 2) + src.shape[2:])
    pad[1:-1, 1:-1] = src
    flat = pad.reshape((h + 2) * (w + 2), -1)
    xi = np.clip(x0 + 1, 0, w + 1).astype(np.int64)
    xj = np.clip(x0 + 2, 0, w + 1).astype(np.int64)
    yi = np.clip(y0 + 1, 0, h + 1).astype(np.int64) * (w + 2)
    yj = np.clip(y0 + 2, 0, h + 1).astype(np.int64) * (w + 2)
    if src.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
        shape = xs.shape + src.shape[2:]
    else:
        shape = xs.shape

    def tap(row, col):
        return flat.take((row + col).ravel(), axis=0).reshape(shape)

    top = tap(yi, xi) * (1 - fx) + tap(yi, xj) * fx
    bot = tap(yj, xi) * (1 - fx) + tap(yj, xj) * fx
    return top * (1 - fy) + bot * fy


def remap(img: Raster, xs: np.ndarray, ys: np.ndarray, border: str = "zero") -> Raster:
    """Build a raster whose pixel (i, j) is ``img`` sampled at ``(xs[i, j], ys[i, j])``."""
    return Raster(_to_uint8(sample_bilinear(img.data, xs, ys, border)))


def resize(img: Raster, out_w: int, out_h: int) -> Raster:
    if out_w < 1 or out_h < 1:
        raise ValueError(f"resize target must be at least 1x1, got {out_w}x{out_h}")
    if (out_w, out_h) == (img.width, img.height):
        return img
    sx = (np.arange(out_w) + 0.5) * img.width / out_w - 0.5
    sy = (np.arange(out_h) + 0.5) * img.height / out_h - 0.5
    xs, ys = np.meshgrid(sx, sy)
    return remap(img, xs, ys, border="clamp")


def rotation_map(width: int, height: int, angle_deg: float) -> tuple[np.ndarray, np.ndarray]:
    """Source coordinates for a counter-clockwise (as displayed) rotation about the center."""
    th = math.radians(angle_deg)
    c, s = math.cos(th), math.sin(th)
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    xs, ys = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    dx, dy = xs - cx, ys - cy
    return cx + c * dx - s * dy, cy + s * dx + c * dy


def rotate(img: Raster, angle_deg: float) -> Raster:
    """Rotate about the image center, positive angles counter-clockwise on screen.

    Uses the same orientation convention as OpenCV's ``getRotationMatrix2D``.
    """
    if angle_deg == 0:
        return img
    xs, ys = rotation_map(img.width, img.height, angle_deg)
    return remap(img, xs, ys, border="zero")


# ---------------------------------------------------------------------------
# color

def bgr_to_hsv(img: Raster) -> tuple[Raster, Raster, Raster]:
    """Split a BGR raster into H (0-179 half degrees), S and V planes."""
    if img.channels != 3:
        raise ValueError(f"bgr_to_hsv needs a 3-channel raster, got {img.channels}")
    d = img.data.astype(float)
    b, g, r = d[..., 0], d[..., 1], d[..., 2]
    v = np.max(d, axis=2)
    mn = np.min(d, axis=2)
    diff = v - mn
    safe_v = np.where(v > 0, v, 1.0)
    s = np.where(v > 0, 255.0 * diff / safe_v, 0.0)
    safe_d = np.where(diff > 0, diff, 1.0)
    h = np.where(v == r, 60.0 * (g - b) / safe_d,
                 np.where(v == g, 120.0 + 60.0 * (b - r) / safe_d,
                          240.0 + 60.0 * (r - g) / safe_d))
    h = np.where(diff > 0, h, 0.0)
    h = np.where(h < 0, h + 360.0, h)
    h8 = np.floor(h / 2.0 + 0.5)
    h8 = np.where(h8 >= 180, h8 - 180, h8)
    return Raster(h8.astype(np.uint8)), Raster(_to_uint8(s)), Raster(v.astype(np.uint8))


# ---------------------------------------------------------------------------
# filtering

def gaussian_kernel1d(size: int, sigma: float) -> np.ndarray:
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    half = size // 2
    x = np.arange(-half, half + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _convolve_axis(a: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    half = len(k) // 2
    pad = [(0, 0)] * a.ndim
    pad[axis] = (half, half)
    p = np.pad(a, pad, mode="edge")
    n = a.shape[axis]
    out = np.zeros_like(a, dtype=float)
    for i, wi in enumerate(k):
        out += wi * np.take(p, np.arange(i, i + n), axis=axis)
    return out


def gaussian_blur(img: Raster, size: int = 5, sigma: float = 1.5) -> Raster:
    """Separable Gaussian blur with clamp-to-edge borders."""
    if img.channels != 1:
        raise ValueError("gaussian_blur expects a single-channel raster")
    k = gaussian_kernel1d(size, sigma)
    a = img.data.astype(float)
    a = _convolve_axis(_convolve_axis(a, k, 0), k, 1)
    return Raster(_to_uint8(a))


def threshold_binary(img: Raster, t: int, maxval: int = 255) -> Raster:
    if not 0 <= t <= 255:
        raise ValueError(f"threshold must lie in [0, 255], got {t}")
    return Raster(np.where(img.data > t, maxval, 0).astype(np.uint8))


def _sliding_extreme(a: np.ndarray, size: int, fn) -> np.ndarray:
    # square footprint: separable min/max, out-of-bounds samples are 0
    half = size // 2
    out = a
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (half, half)
        p = np.pad(out, pad, mode="constant", constant_values=0)
        n = out.shape[axis]
        acc = np.take(p, np.arange(0, n), axis=axis)
        for i in range(1, size):
            acc = fn(acc, np.take(p, np.arange(i, i + n), axis=axis))
        out = acc
    return out


def _check_binary(img: Raster) -> None:
    if img.channels != 1:
        raise ValueError("morphology expects a single-channel raster")
    levels = np.unique(img.data)
    if len(levels[levels > 0]) > 1:
        raise ValueError(f"morphology expects a binary raster, found levels {levels[:6].tolist()}")


def erode(img: Raster, footprint: Kernel2D) -> Raster:
    _check_binary(img)
    return Raster(_sliding_extreme(img.data, footprint.size, np.minimum))


def dilate(img: Raster, footprint: Kernel2D) -> Raster:
    _check_binary(img)
    return Raster(_sliding_extreme(img.data, footprint.size, np.maximum))


def morph_open(img: Raster, footprint: Kernel2D | None = None) -> Raster:
    """Erosion followed by dilation with a square footprint (default 5x5)."""
    footprint = footprint or Kernel2D.square(5)
    return dilate(erode(img, footprint), footprint)
