"""
MPC against PID on a lane change
================================

Both controllers follow a 0.35 m lane change at 2 m/s using the true road
geometry. The MPC anticipates the maneuver over its horizon, while the PID
only reacts to the current offset, so the MPC turns the vehicle with a
smoother yaw rate.
"""
from pathlib import Path

from lanempc.plotting import line_plot
from lanempc.sim import compare_controllers, default_scenario

scn = default_scenario()
rep = compare_controllers(scn)
print(rep.to_text())

out = Path(__file__).parent / "out" / "lane_change"
out.mkdir(parents=True, exist_ok=True)
mpc, pid = rep.traces["mpc"], rep.traces["pid"]
(out / "trajectory.svg").write_text(line_plot(
    [("centerline", mpc["x"], scn.road.centerline(mpc["x"])), ("mpc", mpc["x"], mpc["y"]),
     ("pid", pid["x"], pid["y"])], "Trajectory", "x (m)", "y (m)"))
(out / "yawrate.svg").write_text(line_plot(
    [("mpc", mpc["t"], mpc["r"]), ("pid", pid["t"], pid["r"])], "Yaw rate", "t (s)", "r (rad/s)"))
(out / "steering.svg").write_text(line_plot(
    [("mpc", mpc["t"], mpc["delta"]), ("pid", pid["t"], pid["delta"])], "Steering", "t (s)", "delta (rad)"))
print(f"plots in {out}")
