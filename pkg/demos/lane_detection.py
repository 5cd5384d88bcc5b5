"""
Lane detection, stage by stage
==============================

Runs the vision pipeline on a rendered road with the vehicle 0.1 m right of
the lane center, saves every intermediate image and compares the detected
lane-center reference with the known answer.
"""
from pathlib import Path

import numpy as np

from lanempc import camera as cm
from lanempc.imaging import save_pnm
from lanempc.sim import default_camera
from lanempc.vision import VisionPipeline

cam = default_camera()
pipe = VisionPipeline(cam)
renderer = cm.RoadRenderer(cam, pipe.cfg.width, pipe.cfg.height)
frame = renderer.render(cm.straight_road(), (0.0, -0.1, 0.0))

res = pipe.process(frame, v=2.0, keep_stages=True)

out = Path(__file__).parent / "out" / "lane_detection"
out.mkdir(parents=True, exist_ok=True)
for i, (name, img) in enumerate(res.stages.items(), start=1):
    save_pnm(img, out / f"{i:02d}_{name}.{'ppm' if img.channels == 3 else 'pgm'}")
print(f"stage images in {out}")

# the fitted polynomials give columns as a function of bird's-eye rows
fit = res.fit
rows = np.arange(fit.valid_rows[0], fit.valid_rows[1] + 1)
print(f"rows used: {fit.valid_rows[0]}..{fit.valid_rows[1]}")
print(f"left line  column {fit.left_col(rows).mean():7.2f} px")
print(f"right line column {fit.right_col(rows).mean():7.2f} px")
print(f"lane width {np.mean(fit.right_col(rows) - fit.left_col(rows)) * pipe.cfg.m_per_px[0]:.3f} m")

# reference frame is right-positive, so a lane center to the left is negative
ref = res.reference
print(f"reference y_lat at {ref.s[0]:.2f} m ahead: {ref.y_lat[0]:+.4f} m (expected -0.1000)")
print(f"worst error over {len(ref.s)} stations: {np.max(np.abs(ref.y_lat + 0.1)):.4f} m")
