"""
Closing the loop through the camera
===================================

The same lane change, but the MPC now sees the road only through rendered
camera frames and the lane detector. The detected reference is compared with
the true one at every control step.
"""
import numpy as np

from lanempc.sim import default_scenario, rmse_crosstrack, run_closed_loop, yaw_rate_smoothness

truth = run_closed_loop(default_scenario(), "mpc")
scn = default_scenario(perception_mode="vision_in_loop")
seen = run_closed_loop(scn, "mpc")  # renders and processes 160 frames, allow ~40 s

err = seen["detect_err"]
print(f"detection error: mean {np.mean(err) * 1000:.2f} mm, worst {np.max(err) * 1000:.2f} mm")
print(f"frames without a usable detection: {int(seen.flagged.sum())}")
for name, tr in (("ground truth", truth), ("vision", seen)):
    tv, _ = yaw_rate_smoothness(tr)
    print(f"{name:>12}: rmse {rmse_crosstrack(tr, scn.road):.4f} m, yaw TV {tv:.3f}")
