"""
A test frame for the detector
=============================

Renders the default camera's view of a straight lane, vehicle centered,
and writes it to demos/data/straight_road.ppm for ``lanempc detect``.
"""
from pathlib import Path

from lanempc import camera as cm
from lanempc.imaging import save_pnm
from lanempc.sim import default_camera

cam = default_camera()
renderer = cm.RoadRenderer(cam, 640, 480)
# pose is (x, y, heading) in the world frame, y to the left
frame = renderer.render(cm.straight_road(), (0.0, 0.0, 0.0))

out = Path(__file__).parent / "data" / "straight_road.ppm"
out.parent.mkdir(exist_ok=True)
save_pnm(frame, out)
print(f"wrote {out} ({frame.width}x{frame.height})")
