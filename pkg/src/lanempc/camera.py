"""Pinhole camera with Brown-Conrady distortion, planar homographies and a road renderer.

Frames: the vehicle (and world) frame has x forward, y to the left and z up,
with the road surface at z = 0. The camera frame has x to the right, y down and
z along the optical axis. ``CameraModel.rotation``/``translation`` map points
from the frame they were built for into the camera frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .imaging import Raster, remap


class CameraError(ValueError):
    """Invalid camera configuration or a point that cannot be imaged."""


class DegenerateConfigurationError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0
    dist: tuple = (0.0, 0.0, 0.0, 0.0, 0.0)
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise CameraError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        dist = tuple(float(c) for c in self.dist)
        if len(dist) != 5:
            raise CameraError("dist must hold (k1, k2, p1, p2, k3)")
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        T = np.array(self.translation, dtype=float).reshape(3)
        if np.max(np.abs(R.T @ R - np.eye(3))) >= 1e-9 or abs(np.linalg.det(R) - 1.0) >= 1e-9:
            raise CameraError("rotation must be orthonormal with det 1")
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", T)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, self.skew, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def center(self) -> np.ndarray:
        """Camera center in the extrinsic reference frame."""
        return -self.rotation.T @ self.translation

    def with_extrinsics(self, rotation, translation) -> "CameraModel":
        return CameraModel(self.fx, self.fy, self.cx, self.cy, self.skew, self.dist, rotation, translation)

    def at_pose(self, x: float, y: float, psi: float) -> "CameraModel":
        """Compose vehicle-mounted extrinsics with a planar vehicle pose in the world."""
        c, s = math.cos(psi), math.sin(psi)
        R_wv = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])  # world -> vehicle
        t_wv = -R_wv @ np.array([x, y, 0.0])
        return self.with_extrinsics(self.rotation @ R_wv, self.rotation @ t_wv + self.translation)

    def pixel_to_normalized(self, u, v):
        y = (np.asarray(v, dtype=float) - self.cy) / self.fy
        x = (np.asarray(u, dtype=float) - self.cx - self.skew * y) / self.fx
        return x, y

    def normalized_to_pixel(self, x, y):
        return self.fx * x + self.skew * y + self.cx, self.fy * y + self.cy


def mount_camera(fx, fy, cx, cy, dist=(0.0,) * 5, *, height, pitch_deg=0.0, roll_deg=0.0,
                 forward=0.0, lateral=0.0, skew=0.0) -> CameraModel:
    """Camera rigidly mounted on the vehicle, pitched down by ``pitch_deg``.

    ``roll_deg`` rolls the sensor about its optical axis; the resulting image
    appears rotated clockwise by that angle, so ``imaging.rotate(img, roll_deg)``
    levels it again.
    """
    if height <= 0:
        raise CameraError(f"camera height must be above the road plane, got {height}")
    th = math.radians(pitch_deg)
    fwd = np.array([1.0, 0.0, 0.0])
    left = np.array([0.0, 1.0, 0.0])
    up = np.array([0.0, 0.0, 1.0])
    z_c = math.cos(th) * fwd - math.sin(th) * up
    x0 = -left
    y0 = np.cross(z_c, x0)
    ph = math.radians(roll_deg)
    x_c = math.cos(ph) * x0 - math.sin(ph) * y0
    y_c = math.sin(ph) * x0 + math.cos(ph) * y0
    R = np.vstack([x_c, y_c, z_c])
    C = np.array([forward, lateral, height])
    return CameraModel(fx, fy, cx, cy, skew, dist, R, -R @ C)


# ---------------------------------------------------------------------------
# distortion

def distort_point(dist, x, y):
    """Apply radial (k1, k2, k3) and tangential (p1, p2) distortion to normalized coords.

    Works elementwise on scalars or arrays.
    """
    k1, k2, p1, p2, k3 = dist
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
    yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
    if xd.ndim == 0:
        return float(xd), float(yd)
    return xd, yd


def _distort_jacobian(dist, x, y):
    k1, k2, p1, p2, k3 = dist
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    drad = k1 + 2.0 * k2 * r2 + 3.0 * k3 * r2 * r2  # d radial / d r2
    j11 = radial + 2.0 * x * x * drad + 2.0 * p1 * y + 6.0 * p2 * x
    j12 = 2.0 * x * y * drad + 2.0 * p1 * x + 2.0 * p2 * y
    j21 = 2.0 * x * y * drad + 2.0 * p1 * x + 2.0 * p2 * y
    j22 = radial + 2.0 * y * y * drad + 6.0 * p1 * y + 2.0 * p2 * x
    return j11, j12, j21, j22


def undistort_points(dist, xd, yd, tol=1e-10, max_iter=50):
    """Vectorized Newton inversion of :func:`distort_point`.

    Returns ``(x, y, residual)`` where residual is the worst remaining error.
    """
    xd = np.asarray(xd, dtype=float)
    yd = np.asarray(yd, dtype=float)
    x = xd.copy()
    y = yd.copy()
    if not any(dist):
        return x, y, 0.0
    res = np.inf
    for _ in range(max_iter):
        fx, fy = distort_point(dist, x, y)
        ex = np.asarray(fx) - xd
        ey = np.asarray(fy) - yd
        res = float(np.max(np.hypot(ex, ey))) if ex.size else 0.0
        if res < tol:
            break
        j11, j12, j21, j22 = _distort_jacobian(dist, x, y)
        det = j11 * j22 - j12 * j21
        x = x - (j22 * ex - j12 * ey) / det
        y = y - (-j21 * ex + j11 * ey) / det
    else:
        fx, fy = distort_point(dist, x, y)
        res = float(np.max(np.hypot(np.asarray(fx) - xd, np.asarray(fy) - yd)))
    return x, y, res


def undistort_point(dist, xd: float, yd: float, tol=1e-10, max_iter=50) -> tuple[float, float]:
    x, y, res = undistort_points(dist, xd, yd, tol, max_iter)
    if res >= tol:
        raise NumericalError(f"undistortion did not converge after {max_iter} iterations (residual {res:.3e})")
    return float(x), float(y)


def undistort_map(cam: CameraModel, width: int, height: int):
    """Source coordinates (in the distorted image) for every undistorted output pixel."""
    u, v = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    x, y = cam.pixel_to_normalized(u, v)
    xd, yd = distort_point(cam.dist, x, y)
    return cam.normalized_to_pixel(xd, yd)


def undistort_image(cam: CameraModel, img: Raster) -> Raster:
    if not any(cam.dist):
        return img
    xs, ys = undistort_map(cam, img.width, img.height)
    return remap(img, xs, ys, border="zero")


def project_point(cam: CameraModel, p_world) -> tuple[float, float]:
    p_c = cam.rotation @ np.asarray(p_world, dtype=float) + cam.translation
    if p_c[2] <= 0:
        raise CameraError(f"point {tuple(p_world)} is behind the camera (depth {p_c[2]:.4g})")
    xd, yd = distort_point(cam.dist, p_c[0] / p_c[2], p_c[1] / p_c[2])
    u, v = cam.normalized_to_pixel(xd, yd)
    return float(u), float(v)


def project_points(cam: CameraModel, pts) -> np.ndarray:
    """Vectorized :func:`project_point` for an (n, 3) array; returns (n, 2) pixels."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    p_c = pts @ cam.rotation.T + cam.translation
    if np.any(p_c[:, 2] <= 0):
        raise CameraError("one or more points are behind the camera")
    xd, yd = distort_point(cam.dist, p_c[:, 0] / p_c[:, 2], p_c[:, 1] / p_c[:, 2])
    u, v = cam.normalized_to_pixel(xd, yd)
    return np.column_stack([u, v])


def ground_rays(cam: CameraModel, u, v):
    """Intersect the viewing rays of pixels (u, v) with the plane z = 0.

    Returns ``(points, hit)``: points is (..., 3) (NaN where there is no hit)
    and hit marks rays that travel downward to the plane in front of the camera.
    """
    C = cam.center
    if C[2] <= 0:
        raise CameraError(f"camera center at height {C[2]:.4g} is not above the ground plane")
    xd, yd = cam.pixel_to_normalized(u, v)
    x, y, _ = undistort_points(cam.dist, xd, yd)
    d = np.stack([x, y, np.ones_like(x)], axis=-1) @ cam.rotation  # R^T applied to each ray
    hit = d[..., 2] < 0
    t = np.where(hit, -C[2] / np.where(hit, d[..., 2], -1.0), np.nan)
    return C + t[..., None] * d, hit


# ---------------------------------------------------------------------------
# checkerboard and homographies

def checkerboard_grid(cols: int, rows: int, square: float) -> np.ndarray:
    """Interior vertices of a ``cols x rows`` board as an (n, 3) array, row-major, z = 0."""
    if cols < 2 or rows < 2:
        raise ValueError("a checkerboard needs at least 2x2 squares")
    j, i = np.mgrid[1:rows, 1:cols]
    pts = np.column_stack([i.ravel() * square, j.ravel() * square, np.zeros(i.size)])
    return pts.astype(float)


@dataclass(frozen=True)
class Homography:
    h: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=float).reshape(3, 3)
        if abs(np.linalg.det(h)) <= 1e-12:
            raise NumericalError("homography is singular")
        if h[2, 2] != 0:
            h = h / h[2, 2]
        h.flags.writeable = False
        object.__setattr__(self, "h", h)

    def apply(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        q = np.column_stack([pts, np.ones(len(pts))]) @ self.h.T
        return q[:, :2] / q[:, 2:3]

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))


def jacobi_eigh(M: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi eigen-decomposition of a symmetric matrix.

    Returns eigenvalues in ascending order and the matching eigenvectors as columns.
    Iterates until the off-diagonal Frobenius mass is below ``tol`` times the
    total mass, then runs one polishing sweep.
    """
    A = np.array(M, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if scale == 0:
        return np.zeros(n), V
    polish = False
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= tol * scale:
            # convergence is quadratic, so one more sweep is nearly free and
            # sharpens eigenvectors of tightly clustered eigenvalues
            if polish or off == 0.0:
                break
            polish = True
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-18 * (abs(A[p, p]) + abs(A[q, q])):
                    A[p, q] = A[q, p] = 0.0
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp = A[:, p].copy()
                cq = A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    w = np.diag(A).copy()
    order = np.argsort(w)
    return w[order], V[:, order]


def _hartley(pts: np.ndarray) -> np.ndarray:
    mean = pts.mean(axis=0)
    d = np.mean(np.hypot(pts[:, 0] - mean[0], pts[:, 1] - mean[1]))
    if d == 0:
        raise DegenerateConfigurationError("all points coincide")
    s = math.sqrt(2.0) / d
    return np.array([[s, 0.0, -s * mean[0]], [0.0, s, -s * mean[1]], [0.0, 0.0, 1.0]])


def estimate_homography(src, dst) -> Homography:
    """Normalized DLT estimate of the homography taking ``src`` points onto ``dst``."""
    src = np.asarray(src, dtype=float)[:, :2]
    dst = np.asarray(dst, dtype=float)[:, :2]
    if len(src) != len(dst):
        raise ValueError("src and dst must have the same number of points")
    if len(src) < 4:
        raise DegenerateConfigurationError(f"need at least 4 correspondences, got {len(src)}")
    Ts, Td = _hartley(src), _hartley(dst)
    ps = np.column_stack([src, np.ones(len(src))]) @ Ts.T
    pd = np.column_stack([dst, np.ones(len(dst))]) @ Td.T
    n = len(src)
    A = np.zeros((2 * n, 9))
    for i in range(n):
        X = ps[i]
        u, v = pd[i, 0], pd[i, 1]
        A[2 * i, 0:3] = -X
        A[2 * i, 6:9] = u * X
        A[2 * i + 1, 3:6] = -X
        A[2 * i + 1, 6:9] = v * X
    w, V = jacobi_eigh(A.T @ A)
    if w[1] <= 1e-12 * max(w[-1], 1e-300):
        raise DegenerateConfigurationError("correspondences are degenerate (rank < 8)")
    Hn = V[:, 0].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    if abs(H[2, 2]) < 1e-15:
        raise DegenerateConfigurationError("estimated homography has a vanishing h33")
    return Homography(H / H[2, 2])


def birdseye_homography(src_quad, dst_rect) -> Homography:
    src_quad = np.asarray(src_quad, dtype=float)
    dst_rect = np.asarray(dst_rect, dtype=float)
    if src_quad.shape != (4, 2) or dst_rect.shape != (4, 2):
        raise ValueError("bird's-eye mapping needs exactly 4 source and 4 destination points")
    # a proper quadrilateral has all edge cross products of one sign
    e = np.roll(src_quad, -1, axis=0) - src_quad
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    if not (np.all(cross > 0) or np.all(cross < 0)):
        raise DegenerateConfigurationError("source quadrilateral is not convex")
    return estimate_homography(src_quad, dst_rect)


def warp_map(h: Homography, out_w: int, out_h: int):
    hinv = np.linalg.inv(h.h)
    xs, ys = np.meshgrid(np.arange(out_w, dtype=float), np.arange(out_h, dtype=float))
    q = hinv @ np.stack([xs.ravel(), ys.ravel(), np.ones(xs.size)])
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = (q[0] / q[2]).reshape(out_h, out_w)
        sy = (q[1] / q[2]).reshape(out_h, out_w)
    bad = ~np.isfinite(sx) | ~np.isfinite(sy)
    sx[bad] = -10.0
    sy[bad] = -10.0
    return sx, sy


def warp_perspective(img: Raster, h: Homography, out_w: int, out_h: int) -> Raster:
    if abs(np.linalg.det(h.h)) <= 1e-12:
        raise NumericalError("cannot warp with a singular homography")
    xs, ys = warp_map(h, out_w, out_h)
    return remap(img, xs, ys, border="zero")


# ---------------------------------------------------------------------------
# synthetic road view

class PiecewiseCubic:
    """Piecewise cubic in local power form; end segments extend to infinity."""

    def __init__(self, breaks, coeffs):
        self.breaks = np.asarray(breaks, dtype=float)
        self.coeffs = np.asarray(coeffs, dtype=float).reshape(len(self.breaks), 4)

    def _locate(self, s):
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(self.breaks, s, side="right") - 1, 0, len(self.breaks) - 1)
        return idx, s - self.breaks[idx]

    def __call__(self, s, deriv: int = 0):
        idx, t = self._locate(s)
        c = self.coeffs[idx]
        c0, c1, c2, c3 = c[..., 0], c[..., 1], c[..., 2], c[..., 3]
        if deriv == 0:
            out = c0 + t * (c1 + t * (c2 + t * c3))
        elif deriv == 1:
            out = c1 + t * (2.0 * c2 + 3.0 * t * c3)
        elif deriv == 2:
            out = 2.0 * c2 + 6.0 * t * c3
        else:
            raise ValueError("only derivatives up to order 2 are supported")
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class RoadModel:
    """Single lane with painted boundary markings around a centerline y = g(s).

    ``s`` is the world x coordinate and lateral offsets are measured along world y.
    """

    lane_width: float
    marking_width: float
    centerline: PiecewiseCubic
    road_color: tuple = (80, 80, 80)
    marking_color: tuple = (0, 210, 255)
    sky_color: tuple = (235, 206, 135)

    def __post_init__(self):
        if not self.lane_width > self.marking_width > 0:
            raise ValueError("need lane_width > marking_width > 0")

    def marking_mask(self, px, py):
        return self.marking_coverage(px, py) >= 0.5

    def marking_coverage(self, px, py, footprint=None):
        """Fraction of marking paint at ground points; ``footprint`` (m) softens the edges."""
        off = np.asarray(py) - self.centerline(px)
        half = self.marking_width / 2.0
        inside = half - np.minimum(np.abs(off - self.lane_width / 2.0), np.abs(off + self.lane_width / 2.0))
        if footprint is None:
            return (inside >= 0).astype(float)
        return np.clip(0.5 + inside / np.maximum(footprint, 1e-12), 0.0, 1.0)


def straight_road(lane_width=0.35, marking_width=0.02, offset=0.0, **colors) -> RoadModel:
    return RoadModel(lane_width, marking_width, PiecewiseCubic([0.0], [[offset, 0, 0, 0]]), **colors)


class RoadRenderer:
    """Renders road views for one camera; per-pixel rays are computed once."""

    def __init__(self, cam: CameraModel, width: int, height: int, draw_distance: float = 15.0):
        if cam.center[2] <= 0:
            raise CameraError(f"camera height {cam.center[2]:.4g} must be above the road plane")
        self.cam = cam
        self.width = width
        self.height = height
        self.draw_distance = draw_distance
        u, v = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
        xd, yd = cam.pixel_to_normalized(u, v)
        x, y, _ = undistort_points(cam.dist, xd, yd)
        rays_cam = np.stack([x, y, np.ones_like(x)], axis=-1)
        self._rays = rays_cam @ cam.rotation  # vehicle-frame directions
        self._origin = cam.center

    def render(self, road: RoadModel, pose, noise_std: float = 0.0, rng=None) -> Raster:
        x, y, psi = pose
        c, s = math.cos(psi), math.sin(psi)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        d = self._rays @ rot.T
        o = rot @ self._origin + np.array([x, y, 0.0])
        hit = d[..., 2] < 0
        t = np.where(hit, -o[2] / np.where(hit, d[..., 2], -1.0), np.inf)
        dist = t * np.linalg.norm(d, axis=-1)
        ground = hit & (dist <= self.draw_distance)
        px = o[0] + np.where(ground, t, 0.0) * d[..., 0]
        py = o[1] + np.where(ground, t, 0.0) * d[..., 1]
        # lateral offset from the centerline; its per-pixel change is the footprint
        # used to antialias the marking edges
        off = py - road.centerline(px)
        gy, gx = np.gradient(np.where(ground, off, 0.0))
        footprint = np.where(ground, np.abs(gx) + np.abs(gy), np.inf)
        cover = np.where(ground, road.marking_coverage(px, py, footprint), 0.0)[..., None]
        road_c = np.asarray(road.road_color, dtype=float)
        mark_c = np.asarray(road.marking_color, dtype=float)
        out = np.where(ground[..., None], road_c + cover * (mark_c - road_c),
                       np.asarray(road.sky_color, dtype=float))
        if noise_std > 0:
            rng = rng if rng is not None else np.random.default_rng(0)
            out = out + rng.normal(0.0, noise_std, out.shape)
        return Raster(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))


def render_road_view(cam: CameraModel, road: RoadModel, vehicle_pose, width: int = 640,
                     height: int = 480) -> Raster:
    """Render what a vehicle-mounted ``cam`` sees at ``vehicle_pose = (x, y, psi)``."""
    return RoadRenderer(cam, width, height).render(road, vehicle_pose)
