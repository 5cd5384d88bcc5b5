"""End-to-end lane detection: raw camera frame -> LaneFit -> ReferenceTrajectory.

Stages, in order: resize, undistort, rotate, bird's-eye warp, HSV split (S
plane kept), Gaussian blur, threshold, morphological opening, sliding-window
fit. The geometric stages are resampling maps that depend only on the camera
and the configuration, so :class:`VisionPipeline` builds them once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import camera as cam_mod
from .imaging import (Kernel2D, Raster, bgr_to_hsv, gaussian_blur, morph_open, remap, resize,
                      rotation_map, threshold_binary)
from .lanes import (LaneFit, ReferenceTrajectory, RoiLaw, SlidingWindowConfig, fit_lanes,
                    lane_center_reference)

STAGES = ("resize", "undistort", "rotate", "warp", "saturation", "blur", "threshold", "open")


@dataclass(frozen=True)
class VisionConfig:
    width: int = 640
    height: int = 480
    rotate_deg: float = 10.0
    # ground patch seen by the bird's-eye view, vehicle frame, meters
    near: float = 0.5
    patch_length: float = 2.4
    patch_width: float = 1.2
    bev_width: int = 640
    bev_height: int = 480
    blur_size: int = 5
    blur_sigma: float = 1.5
    threshold: int = 30
    open_size: int = 5
    n_samples: int = 40
    windows: SlidingWindowConfig = field(default_factory=SlidingWindowConfig)
    roi: RoiLaw = field(default_factory=RoiLaw)

    def __post_init__(self):
        if not 0 <= self.threshold <= 255:
            raise ValueError(f"threshold must lie in [0, 255], got {self.threshold}")
        if self.blur_size % 2 == 0 or self.open_size % 2 == 0:
            raise ValueError("blur_size and open_size must be odd")
        if min(self.width, self.height, self.bev_width, self.bev_height, self.n_samples) < 1:
            raise ValueError("image sizes and n_samples must be positive")

    @property
    def m_per_px(self) -> tuple[float, float]:
        return self.patch_width / self.bev_width, self.patch_length / self.bev_height

    @property
    def anchor(self) -> tuple[float, float]:
        """Bird's-eye (col, row) of the vehicle origin."""
        return self.bev_width / 2.0 - 0.5, self.bev_height - 0.5 + self.near / self.m_per_px[1]

    def ground_to_bev(self, forward, right):
        """Vehicle-frame ground coordinates (forward, right) to bird's-eye (col, row)."""
        mx, my = self.m_per_px
        col = self.anchor[0] + np.asarray(right) / mx
        row = self.anchor[1] - np.asarray(forward) / my
        return col, row


def birdseye_points(cam: cam_mod.CameraModel, cfg: VisionConfig):
    """Source quad (in the undistorted, rotated frame) and destination rectangle."""
    half = cfg.patch_width / 2.0
    near, far = cfg.near, cfg.near + cfg.patch_length
    ground = np.array([[near, half, 0.0], [near, -half, 0.0], [far, -half, 0.0], [far, half, 0.0]])
    pinhole = cam_mod.CameraModel(cam.fx, cam.fy, cam.cx, cam.cy, cam.skew, (0.0,) * 5,
                                  cam.rotation, cam.translation)
    uv = cam_mod.project_points(pinhole, ground)
    # forward map of imaging.rotate about the image center
    th = math.radians(cfg.rotate_deg)
    c, s = math.cos(th), math.sin(th)
    cx, cy = (cfg.width - 1) / 2.0, (cfg.height - 1) / 2.0
    dx, dy = uv[:, 0] - cx, uv[:, 1] - cy
    src = np.column_stack([cx + c * dx + s * dy, cy - s * dx + c * dy])
    w, h = cfg.bev_width, cfg.bev_height
    dst = np.array([[-0.5, h - 0.5], [w - 0.5, h - 0.5], [w - 0.5, -0.5], [-0.5, -0.5]])
    return src, dst


@dataclass
class VisionResult:
    fit: LaneFit
    reference: ReferenceTrajectory
    stages: dict


class VisionPipeline:
    def __init__(self, cam: cam_mod.CameraModel, cfg: VisionConfig = VisionConfig()):
        self.cam = cam
        self.cfg = cfg
        src, dst = birdseye_points(cam, cfg)
        self.homography = cam_mod.birdseye_homography(src, dst)
        w, h = cfg.width, cfg.height
        self._undistort = cam_mod.undistort_map(cam, w, h) if any(cam.dist) else None
        self._rotate = rotation_map(w, h, cfg.rotate_deg) if cfg.rotate_deg else None
        self._warp = cam_mod.warp_map(self.homography, cfg.bev_width, cfg.bev_height)
        self._footprint = Kernel2D.square(cfg.open_size)

    def binary_birdseye(self, frame: Raster, keep_stages: bool = False):
        cfg = self.cfg
        stages = {}
        img = resize(frame, cfg.width, cfg.height)
        stages["resize"] = img
        if self._undistort is not None:
            img = remap(img, *self._undistort, border="zero")
        stages["undistort"] = img
        if self._rotate is not None:
            img = remap(img, *self._rotate, border="zero")
        stages["rotate"] = img
        img = remap(img, *self._warp, border="zero")
        stages["warp"] = img
        if img.channels == 3:
            _, sat, _ = bgr_to_hsv(img)
        else:
            sat = img
        stages["saturation"] = sat
        img = gaussian_blur(sat, cfg.blur_size, cfg.blur_sigma)
        stages["blur"] = img
        img = threshold_binary(img, cfg.threshold, 255)
        stages["threshold"] = img
        img = morph_open(img, self._footprint)
        stages["open"] = img
        return img, (stages if keep_stages else {})

    def process(self, frame: Raster, v: float, keep_stages: bool = False,
                prior: LaneFit | None = None) -> VisionResult:
        binary, stages = self.binary_birdseye(frame, keep_stages)
        fit = fit_lanes(binary, v, self.cfg.windows, self.cfg.roi, prior)
        ref = lane_center_reference(fit, self.cfg.m_per_px, self.cfg.anchor, self.cfg.n_samples)
        return VisionResult(fit, ref, stages)
