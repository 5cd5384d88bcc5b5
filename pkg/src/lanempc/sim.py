"""Closed-loop harness: road, optional vision-in-the-loop perception, controller, plant.

The world is the ISO frame of the camera and dynamics modules. Roads are
described by a centerline ``y = g(x)``; references handed to the controllers are
expressed in the right-positive vehicle frame produced by the lane detector.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import camera as cam_mod
from .control.mpc import MpcConfig, MpcController, speed_command
from .control.pid import PidConfig, PidLateralController
from .dynamics import ControlInput, VehicleParams, VehicleState, integrate_rk4
from .lanes import FitError, MissingLaneError, ReferenceTrajectory
from .vision import VisionConfig, VisionPipeline

TRACE_COLUMNS = ("t", "x", "y", "psi", "vx", "vy", "r", "delta", "ax", "y_ref", "detect_err",
                 "qp_iters", "qp_cost")
CONTROLLERS = ("mpc", "pid")
PERCEPTION_MODES = ("ground_truth", "vision_in_loop")
MAX_FLAGGED_FRACTION = 0.2


class SimulationError(RuntimeError):
    """A run failed; ``controller`` names the arm that failed."""

    def __init__(self, message: str, controller: str = "", flagged_fraction: float = float("nan")):
        super().__init__(message)
        self.controller = controller
        self.flagged_fraction = flagged_fraction


def default_camera(fx=300.0, fy=300.0, cx=319.5, cy=239.5, dist=(-0.05, 0.01, 0.0005, -0.0005, 0.0),
                   height=0.3, pitch_deg=8.0, roll_deg=10.0, forward=0.15) -> cam_mod.CameraModel:
    """The forward-looking camera of the 1:10 car: pitched down, slightly rolled."""
    return cam_mod.mount_camera(fx, fy, cx, cy, dist, height=height, pitch_deg=pitch_deg,
                                roll_deg=roll_deg, forward=forward)


def make_lane_change_road(offset: float, start_s: float, ramp_len: float, lane_width: float = 0.35,
                          marking_width: float = 0.02, **colors) -> cam_mod.RoadModel:
    """Straight road whose centerline shifts by ``offset`` along a smoothstep ramp."""
    if not ramp_len > 0:
        raise ValueError(f"ramp_len must be positive, got {ramp_len}")
    breaks = [start_s - 1.0, start_s, start_s + ramp_len]
    coeffs = [[0.0, 0.0, 0.0, 0.0],
              [0.0, 0.0, 3.0 * offset / ramp_len ** 2, -2.0 * offset / ramp_len ** 3],
              [offset, 0.0, 0.0, 0.0]]
    return cam_mod.RoadModel(lane_width, marking_width, cam_mod.PiecewiseCubic(breaks, coeffs), **colors)


@dataclass(frozen=True)
class Scenario:
    name: str = "lane_change"
    road: cam_mod.RoadModel = field(default_factory=lambda: make_lane_change_road(0.35, 2.0, 2.0))
    target_speed: float = 2.0
    duration: float = 8.0
    plant_dt: float = 0.002
    control_dt: float = 0.05
    perception_mode: str = "ground_truth"
    noise_seed: int = 0
    # std of a Gaussian kick added to v_y (m/s) once per control step; 0 disables
    lateral_noise_std: float = 0.0
    initial_state: VehicleState | None = None

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not (self.plant_dt > 0 and self.control_dt > 0):
            raise ValueError("time steps must be positive")
        ratio = self.control_dt / self.plant_dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise ValueError(f"control_dt={self.control_dt} must be an integer multiple of plant_dt={self.plant_dt}")
        if self.perception_mode not in PERCEPTION_MODES:
            raise ValueError(f"perception_mode must be one of {PERCEPTION_MODES}")
        if self.lateral_noise_std < 0:
            raise ValueError("lateral_noise_std must be non-negative")

    @property
    def substeps(self) -> int:
        return int(round(self.control_dt / self.plant_dt))

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.control_dt))

    @property
    def target_offset(self) -> float:
        """Centerline offset far down the road, where the maneuver has completed."""
        return float(self.road.centerline(1e6))


def default_scenario(**overrides) -> Scenario:
    return replace(Scenario(), **overrides)


# ---------------------------------------------------------------------------
# ground-truth reference

def ground_truth_reference(road: cam_mod.RoadModel, pose, stations) -> ReferenceTrajectory:
    """Exact road centerline seen from ``pose = (x, y, psi)`` in the right-positive vehicle frame."""
    x, y, psi = pose
    c, s = math.cos(psi), math.sin(psi)
    st = np.asarray(stations, dtype=float)
    px, py = x + st * c, y + st * s
    g = road.centerline
    lat = py - g(px)  # initial guess: offset along world y
    for _ in range(30):
        # point to the right of the vehicle axis by lat: (px + lat*s, py - lat*c)
        qx = px + lat * s
        h = py - lat * c - g(qx)
        dh = -c - g(qx, 1) * s
        step = h / dh
        lat = lat - step
        if np.max(np.abs(step)) < 1e-13:
            break
    qx = px + lat * s
    d1, d2 = g(qx, 1), g(qx, 2)
    psi_ref = np.array([-(math.atan(d) - psi) for d in np.atleast_1d(d1)])
    kappa = -np.asarray(d2) / (1.0 + np.asarray(d1) ** 2) ** 1.5
    return ReferenceTrajectory(st, np.asarray(lat, dtype=float), psi_ref, np.broadcast_to(kappa, st.shape).copy())


def reference_stations(mpc: MpcConfig, speed: float, margin: float = 0.5, min_len: float = 3.0,
                       n: int = 61) -> np.ndarray:
    return np.linspace(0.0, max(mpc.N * mpc.Ts * speed + margin, min_len), n)


# ---------------------------------------------------------------------------
# traces and metrics

@dataclass
class RunTrace:
    controller: str
    columns: dict
    flagged: np.ndarray

    def __len__(self) -> int:
        return len(self.columns["t"])

    def __getitem__(self, name) -> np.ndarray:
        return self.columns[name]

    @property
    def flagged_fraction(self) -> float:
        return float(np.mean(self.flagged)) if len(self.flagged) else 0.0

    @property
    def failed(self) -> bool:
        return self.flagged_fraction > MAX_FLAGGED_FRACTION

    def to_csv(self) -> str:
        buf = io.StringIO()
        data = np.column_stack([self.columns[c] for c in TRACE_COLUMNS])
        np.savetxt(buf, data, fmt="%.9g", delimiter=",", header=",".join(TRACE_COLUMNS), comments="")
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_csv())


def rmse_crosstrack(trace: RunTrace, road: cam_mod.RoadModel) -> float:
    if len(trace) == 0:
        raise ValueError("empty trace")
    err = trace["y"] - road.centerline(trace["x"])
    return float(np.sqrt(np.mean(np.square(err))))


def yaw_rate_smoothness(trace_or_r) -> tuple[float, float]:
    """(total variation, population standard deviation) of the yaw rate."""
    r = np.asarray(trace_or_r["r"] if isinstance(trace_or_r, RunTrace) else trace_or_r, dtype=float)
    if len(r) < 2:
        raise ValueError("need at least two yaw-rate samples")
    return float(np.sum(np.abs(np.diff(r)))), float(np.std(r))


# ---------------------------------------------------------------------------
# closed loop

@dataclass(frozen=True)
class ControllerConfigs:
    mpc: MpcConfig = field(default_factory=MpcConfig)
    pid: PidConfig = field(default_factory=lambda: PidConfig(kp=1.1, ki=0.6, kd=0.25, i_limit=0.5))
    vision: VisionConfig = field(default_factory=VisionConfig)
    camera: cam_mod.CameraModel = field(default_factory=default_camera)


def run_closed_loop(scn: Scenario, controller: str = "mpc", cfgs: ControllerConfigs = ControllerConfigs(),
                    p: VehicleParams = VehicleParams()) -> RunTrace:
    if controller not in CONTROLLERS:
        raise ValueError(f"controller must be one of {CONTROLLERS}, got {controller!r}")
    rng = np.random.default_rng(scn.noise_seed)
    mpc = MpcController(cfgs.mpc, p, scn.target_speed) if controller == "mpc" else None
    pid = PidLateralController(cfgs.pid, p.delta_max) if controller == "pid" else None
    vision = renderer = None
    if scn.perception_mode == "vision_in_loop":
        vision = VisionPipeline(cfgs.camera, cfgs.vision)
        renderer = cam_mod.RoadRenderer(cfgs.camera, cfgs.vision.width, cfgs.vision.height)
    stations = reference_stations(cfgs.mpc, scn.target_speed)

    state = scn.initial_state or VehicleState(vx=scn.target_speed)
    u = ControlInput()
    prior_fit = None
    n = scn.n_steps
    cols = {c: np.zeros(n) for c in TRACE_COLUMNS}
    flagged = np.zeros(n, dtype=bool)
    for k in range(n):
        pose = (state.x, state.y, state.psi)
        truth = ground_truth_reference(scn.road, pose, stations)
        ref, detect_err, ok = truth, math.nan, True
        if vision is not None:
            try:
                det = vision.process(renderer.render(scn.road, pose), state.vx, prior=prior_fit)
                ref, prior_fit = det.reference, det.fit
                # error at the nearest detected station
                s0 = ref.s[0]
                detect_err = abs(float(ref.y_lat[0]) - float(ground_truth_reference(scn.road, pose, [s0]).y_lat[0]))
            except (MissingLaneError, FitError):
                ok, prior_fit = False, None
        iters, cost = 0, math.nan
        if not ok:
            flagged[k] = True  # hold the previous command
        elif mpc is not None:
            u, bad = mpc.step(state, ref)
            flagged[k] = bad
            if mpc.last is not None:
                iters, cost = mpc.last.result.iterations, mpc.last.result.objective
        else:
            delta = pid.step(float(ref.sample([0.0])[0][0]), scn.control_dt)
            u = ControlInput(delta, speed_command(state.vx, scn.target_speed, cfgs.mpc))
        row = (k * scn.control_dt, state.x, state.y, state.psi, state.vx, state.vy, state.r, u.delta, u.ax,
               float(ref.sample([0.0])[0][0]), detect_err, iters, cost)
        for c, v in zip(TRACE_COLUMNS, row):
            cols[c][k] = v
        for _ in range(scn.substeps):
            state = integrate_rk4(state, u, scn.plant_dt, p)
        if scn.lateral_noise_std > 0:
            state = replace(state, vy=state.vy + float(rng.normal(0.0, scn.lateral_noise_std)))
    return RunTrace(controller, cols, flagged)


def run_checked(scn: Scenario, controller: str, cfgs: ControllerConfigs, p: VehicleParams) -> RunTrace:
    """Run and raise :class:`SimulationError` when too many steps were flagged."""
    trace = run_closed_loop(scn, controller, cfgs, p)
    if trace.failed:
        raise SimulationError(f"{controller} run failed: {trace.flagged_fraction:.1%} of steps flagged",
                              controller, trace.flagged_fraction)
    return trace


@dataclass
class ComparisonReport:
    rmse: dict
    yaw_tv: dict
    yaw_std: dict
    final_offset_error: dict
    rmse_threshold: float
    traces: dict = field(repr=False, default_factory=dict)

    @staticmethod
    def _rel(a, b) -> float:
        return 0.0 if a == b else (a - b) / abs(b) if b else math.inf

    @property
    def rel_rmse(self) -> float:
        return self._rel(self.rmse["mpc"], self.rmse["pid"])

    @property
    def rel_yaw_tv(self) -> float:
        return self._rel(self.yaw_tv["mpc"], self.yaw_tv["pid"])

    @property
    def rel_yaw_std(self) -> float:
        return self._rel(self.yaw_std["mpc"], self.yaw_std["pid"])

    @property
    def smoother(self) -> bool:
        return self.yaw_tv["mpc"] < self.yaw_tv["pid"]

    @property
    def passed(self) -> bool:
        return self.smoother and all(v < self.rmse_threshold for v in self.rmse.values())

    def to_text(self) -> str:
        lines = []
        for c in CONTROLLERS:
            lines += [f"rmse_{c}: {self.rmse[c]:.6f}", f"yaw_tv_{c}: {self.yaw_tv[c]:.6f}",
                      f"yaw_std_{c}: {self.yaw_std[c]:.6f}", f"final_offset_error_{c}: {self.final_offset_error[c]:.6f}"]
        lines += [f"rel_rmse: {self.rel_rmse:.6f}", f"rel_yaw_tv: {self.rel_yaw_tv:.6f}",
                  f"rel_yaw_std: {self.rel_yaw_std:.6f}", f"rmse_threshold: {self.rmse_threshold:.6f}",
                  f"yaw_tv_mpc < yaw_tv_pid: {'true' if self.smoother else 'false'}",
                  f"pass: {'true' if self.passed else 'false'}"]
        return "\n".join(lines) + "\n"


def compare_controllers(scn: Scenario, cfgs: ControllerConfigs = ControllerConfigs(),
                        p: VehicleParams = VehicleParams(), rmse_threshold: float = 0.10,
                        arms=("mpc", "pid")) -> ComparisonReport:
    """Run two arms on the same scenario and seed. ``arms`` maps report slots (mpc, pid) to controllers."""
    traces = {slot: run_checked(scn, ctrl, cfgs, p) for slot, ctrl in zip(CONTROLLERS, arms)}
    rmse, tv, sd, fin = {}, {}, {}, {}
    for slot, tr in traces.items():
        rmse[slot] = rmse_crosstrack(tr, scn.road)
        tv[slot], sd[slot] = yaw_rate_smoothness(tr)
        fin[slot] = final_offset_error(tr, scn)
    return ComparisonReport(rmse, tv, sd, fin, rmse_threshold, traces)


def final_offset_error(trace: RunTrace, scn: Scenario) -> float:
    return abs(float(trace["y"][-1]) - scn.target_offset)
