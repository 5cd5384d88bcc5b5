"""Lane-line extraction from a binary bird's-eye image and conversion to a reference path.

Image rows grow downward and columns to the right. The reference trajectory is
expressed in a vehicle frame with ``s`` forward and ``y_lat`` positive to the
right of the vehicle (SAE axes), matching the bird's-eye column direction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imaging import Raster


class MissingLaneError(RuntimeError):
    def __init__(self, side: str, detail: str = ""):
        self.side = side
        super().__init__(f"no {side} lane found" + (f": {detail}" if detail else ""))


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class RoiLaw:
    f0: float = 0.55
    k_v: float = 0.05
    f_min: float = 0.30
    f_max: float = 0.60


@dataclass(frozen=True)
class SlidingWindowConfig:
    n_windows: int = 9
    margin: int = 60
    minpix: int = 40
    roi_top_frac: float = 0.55
    degree: int = 3

    def __post_init__(self):
        if self.n_windows < 1 or self.margin < 1:
            raise ValueError("n_windows and margin must be at least 1")
        if not 0 <= self.roi_top_frac < 1:
            raise ValueError(f"roi_top_frac must lie in [0, 1), got {self.roi_top_frac}")


@dataclass(frozen=True)
class LaneFit:
    """Column-of-row polynomials (ascending coefficients) for both lane lines."""

    left: np.ndarray
    right: np.ndarray
    valid_rows: tuple

    def left_col(self, rows):
        return np.polynomial.polynomial.polyval(rows, self.left)

    def right_col(self, rows):
        return np.polynomial.polynomial.polyval(rows, self.right)

    def center_col(self, rows):
        return 0.5 * (self.left_col(rows) + self.right_col(rows))


@dataclass(frozen=True)
class ReferenceTrajectory:
    s: np.ndarray
    y_lat: np.ndarray
    psi: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=float) for a in (self.s, self.y_lat, self.psi, self.kappa)]
        if len({len(a) for a in arrays}) != 1 or len(arrays[0]) == 0:
            raise ValueError("trajectory arrays must be non-empty and equally long")
        if np.any(np.diff(arrays[0]) <= 0):
            raise ValueError("trajectory stations must be strictly increasing")
        for name, a in zip(("s", "y_lat", "psi", "kappa"), arrays):
            object.__setattr__(self, name, a)

    def sample(self, stations):
        """Interpolate (y_lat, psi, kappa) at arc-length stations.

        Past the last sample the last values are held; before the first sample
        the path is extended along the first sample's heading.
        """
        st = np.asarray(stations, dtype=float)
        y = np.interp(st, self.s, self.y_lat)
        psi = np.interp(st, self.s, self.psi)
        kappa = np.interp(st, self.s, self.kappa)
        before = st < self.s[0]
        y = np.where(before, self.y_lat[0] + math.tan(self.psi[0]) * (st - self.s[0]), y)
        return y, psi, kappa


def roi_for_speed(v: float, law: RoiLaw = RoiLaw()) -> float:
    """Top of the region of interest as a fraction of image height."""
    if v < 0:
        raise ValueError(f"speed must be non-negative, got {v}")
    return min(max(law.f0 - law.k_v * v, law.f_min), law.f_max)


def column_histogram(img: Raster, row_lo: int, row_hi: int) -> np.ndarray:
    if not 0 <= row_lo < row_hi <= img.height:
        raise ValueError(f"invalid row range [{row_lo}, {row_hi}) for height {img.height}")
    return np.count_nonzero(img.data[row_lo:row_hi], axis=0)


def find_lane_bases(hist) -> tuple[int, int]:
    hist = np.asarray(hist)
    if hist.size == 0:
        raise ValueError("empty histogram")
    mid = hist.size // 2
    left, right = hist[:mid], hist[mid:]
    if left.size == 0 or not np.any(left > 0):
        raise MissingLaneError("left", "histogram left half is empty")
    if not np.any(right > 0):
        raise MissingLaneError("right", "histogram right half is empty")
    # np.argmax returns the first maximum, i.e. the smallest column on ties
    return int(np.argmax(left)), mid + int(np.argmax(right))


def sliding_window_collect(img: Raster, bases, cfg: SlidingWindowConfig):
    """Track both lane lines bottom-up; returns two (n, 2) integer arrays of (row, col)."""
    h = img.height
    top = int(math.floor(cfg.roi_top_frac * h))
    rows, cols = np.nonzero(img.data[top:])
    rows = rows + top
    edges = np.linspace(h, top, cfg.n_windows + 1)
    out = []
    for base in bases:
        center = float(base)
        picked = []
        for k in range(cfg.n_windows):
            hi, lo = edges[k], edges[k + 1]
            sel = (rows >= lo) & (rows < hi) & (np.abs(cols - center) <= cfg.margin)
            idx = np.flatnonzero(sel)
            picked.append(idx)
            if idx.size >= cfg.minpix:
                center = float(np.mean(cols[idx]))
        idx = np.concatenate(picked) if picked else np.empty(0, dtype=int)
        out.append(np.column_stack([rows[idx], cols[idx]]).astype(np.int64))
    return out[0], out[1]


def polyfit(points, degree: int = 3) -> np.ndarray:
    """Least-squares polynomial col(row), ascending coefficients.

    Rows are mapped to [-1, 1] before the QR solve and the coefficients are
    mapped back to raw row units afterwards.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    rows, cols = pts[:, 0], pts[:, 1]
    if n < degree + 1 or len(np.unique(rows)) < degree + 1:
        raise FitError(f"degree-{degree} fit needs {degree + 1} distinct rows, got {n} points "
                       f"on {len(np.unique(rows)) if n else 0} rows")
    lo, hi = rows.min(), rows.max()
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    t = (rows - mid) / half
    V = np.vander(t, degree + 1, increasing=True)
    Q, R = np.linalg.qr(V)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-12 * diag.max():
        raise FitError(f"rank-deficient fit on {n} points")
    d = np.linalg.solve(R, Q.T @ cols)
    # substitute t = (row - mid) / half and collect powers of row
    a, b = 1.0 / half, -mid / half
    coeffs = np.zeros(degree + 1)
    for j, dj in enumerate(d):
        for k in range(j + 1):
            coeffs[k] += dj * math.comb(j, k) * a ** k * b ** (j - k)
    return coeffs


def fit_lanes(img: Raster, v: float, cfg: SlidingWindowConfig = SlidingWindowConfig(),
              law: RoiLaw = RoiLaw(), prior: LaneFit | None = None) -> LaneFit:
    """Detect and fit both lane lines.

    With a ``prior`` fit from the previous frame the windows start where the
    prior puts each line at the bottom row, which keeps the two sides apart when
    both lines drift into one half of the image. Without one (or if the seeded
    search comes back empty) the bases come from the histogram.
    """
    top_frac = roi_for_speed(v, law)
    cfg = SlidingWindowConfig(cfg.n_windows, cfg.margin, cfg.minpix, top_frac, cfg.degree)
    h = img.height
    top = int(math.floor(top_frac * h))
    left_px = right_px = np.empty((0, 2))
    if prior is not None:
        bases = np.clip([prior.left_col(h - 1), prior.right_col(h - 1)], 0, img.width - 1)
        left_px, right_px = sliding_window_collect(img, bases, cfg)
    if len(left_px) < cfg.minpix or len(right_px) < cfg.minpix:
        hist = column_histogram(img, max(top, h // 2), h)
        bases = find_lane_bases(hist)
        left_px, right_px = sliding_window_collect(img, bases, cfg)
    fits = []
    for side, px in (("left", left_px), ("right", right_px)):
        if len(px) == 0:
            raise MissingLaneError(side, "no pixels collected")
        fits.append(polyfit(px, cfg.degree))
    return LaneFit(fits[0], fits[1], (top, h - 1))


def lane_center_reference(fit: LaneFit, scale, anchor, n_samples: int = 40) -> ReferenceTrajectory:
    """Sample the lane centerline and express it in the vehicle frame.

    ``scale = (m_per_px_x, m_per_px_y)``; ``anchor = (col, row)`` is the image
    position of the vehicle origin.
    """
    mx, my = scale
    if not (mx > 0 and my > 0):
        raise ValueError(f"pixel scales must be positive, got {scale}")
    anchor_col, anchor_row = anchor
    row_lo, row_hi = fit.valid_rows
    rows = np.linspace(row_hi, row_lo, n_samples)
    center = 0.5 * (np.asarray(fit.left, dtype=float) + np.asarray(fit.right, dtype=float))
    P = np.polynomial.polynomial
    c = P.polyval(rows, center)
    dc = P.polyval(rows, P.polyder(center))
    d2c = P.polyval(rows, P.polyder(center, 2))
    s = (anchor_row - rows) * my
    y = (c - anchor_col) * mx
    dy = -dc * mx / my
    d2y = d2c * mx / (my * my)
    psi = np.arctan(dy)
    kappa = d2y / (1.0 + dy * dy) ** 1.5
    return ReferenceTrajectory(s, y, psi, kappa)
