"""Command-line entry point.

Exit codes: 0 success, 1 usage or IO error, 2 lane detection failure,
3 simulation failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import camera as cam_mod
from .config import Config, ConfigError, load_config
from .imaging import PnmFormatError, load_pnm, save_pnm
from .lanes import FitError, MissingLaneError, fit_lanes
from .plotting import line_plot
from .sim import (SimulationError, compare_controllers, rmse_crosstrack, run_checked, yaw_rate_smoothness)
from .vision import STAGES, VisionPipeline

EXIT_OK, EXIT_USAGE, EXIT_DETECT, EXIT_SIM = 0, 1, 2, 3
CONFIG_ENV = "LANE_MPC_CONFIG"
BOARD_COLS, BOARD_ROWS, BOARD_SQUARE = 9, 7, 0.05


def _load(path) -> Config:
    path = path or os.environ.get(CONFIG_ENV)
    return load_config(path) if path else Config().validate()


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8", newline="\n")


def cmd_detect(image, cfg: Config, out: Path) -> int:
    try:
        frame = load_pnm(image)
    except (OSError, PnmFormatError) as exc:
        print(f"error: cannot read {image}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    vcfg = cfg.vision()
    pipe = VisionPipeline(cfg.camera(), vcfg)
    binary, stages = pipe.binary_birdseye(frame, keep_stages=True)
    for i, name in enumerate(STAGES, start=1):
        img = stages[name]
        save_pnm(img, out / f"{i:02d}_{name}.{'ppm' if img.channels == 3 else 'pgm'}")
    try:
        fit = fit_lanes(binary, cfg["scenario"]["target_speed"], vcfg.windows, vcfg.roi)
    except (MissingLaneError, FitError) as exc:
        print(f"lane detection failed: {exc}", file=sys.stderr)
        return EXIT_DETECT
    rows = np.arange(fit.valid_rows[0], fit.valid_rows[1] + 1)
    data = np.column_stack([rows, fit.left_col(rows), fit.right_col(rows), fit.center_col(rows)])
    lines = ["row,left,right,center"] + [f"{int(r)},{a:.6f},{b:.6f},{c:.6f}" for r, a, b, c in data]
    _write(out / "lanes.csv", "\n".join(lines) + "\n")
    coeffs = [f"{side}_c{k} {v:.12e}" for side, poly in (("left", fit.left), ("right", fit.right))
              for k, v in enumerate(poly)]
    _write(out / "fit.txt", "\n".join(coeffs) + "\n")
    print(f"lanes detected; rows {fit.valid_rows[0]}..{fit.valid_rows[1]}; outputs in {out}")
    return EXIT_OK


def _trajectory_svg(traces, road) -> str:
    first = next(iter(traces.values()))
    xs = first["x"]
    series = [("centerline", xs, road.centerline(xs))]
    series += [(name, tr["x"], tr["y"]) for name, tr in traces.items()]
    return line_plot(series, "Trajectory", "x (m)", "y (m)")


def _yawrate_svg(traces) -> str:
    series = [(name, tr["t"], tr["r"]) for name, tr in traces.items()]
    return line_plot(series, "Yaw rate vs time", "t (s)", "yaw rate (rad/s)")


def _debug_frame(cfg: Config, scn, out: Path):
    cam, vcfg = cfg.camera(), cfg.vision()
    frame = cam_mod.RoadRenderer(cam, vcfg.width, vcfg.height).render(scn.road, (0.0, 0.0, 0.0))
    d = out / "frames"
    d.mkdir(exist_ok=True)
    save_pnm(frame, d / "00_camera.ppm")
    _, stages = VisionPipeline(cam, vcfg).binary_birdseye(frame, keep_stages=True)
    for i, name in enumerate(STAGES, start=1):
        img = stages[name]
        save_pnm(img, d / f"{i:02d}_{name}.{'ppm' if img.channels == 3 else 'pgm'}")


def cmd_simulate(cfg: Config, controller: str, out: Path, seed=None, debug=False) -> int:
    scn = cfg.scenario(seed)
    try:
        trace = run_checked(scn, controller, cfg.controller_configs(), cfg.vehicle())
    except SimulationError as exc:
        print(f"simulation failed: {exc} (flagged fraction {exc.flagged_fraction:.3f})", file=sys.stderr)
        return EXIT_SIM
    trace.write_csv(out / "trace.csv")
    tv, sd = yaw_rate_smoothness(trace)
    _write(out / "metrics.txt", f"rmse_crosstrack: {rmse_crosstrack(trace, scn.road):.9g}\n"
                                f"yaw_rate_total_variation: {tv:.9g}\nyaw_rate_std: {sd:.9g}\n")
    _write(out / "trajectory.svg", _trajectory_svg({controller: trace}, scn.road))
    _write(out / "yawrate.svg", _yawrate_svg({controller: trace}))
    if debug:
        _debug_frame(cfg, scn, out)
    print(f"{controller} run complete; outputs in {out}")
    return EXIT_OK


def cmd_compare(cfg: Config, out: Path, seed=None) -> int:
    scn = cfg.scenario(seed)
    try:
        rep = compare_controllers(scn, cfg.controller_configs(), cfg.vehicle(),
                                  cfg["scenario"]["rmse_threshold"])
    except SimulationError as exc:
        print(f"comparison failed in the {exc.controller} arm: {exc}", file=sys.stderr)
        return EXIT_SIM
    _write(out / "report.txt", rep.to_text())
    for name, tr in rep.traces.items():
        tr.write_csv(out / f"trace_{name}.csv")
    _write(out / "trajectory.svg", _trajectory_svg(rep.traces, scn.road))
    _write(out / "yawrate.svg", _yawrate_svg(rep.traces))
    sys.stdout.write(rep.to_text())
    return EXIT_OK


def calibration_error(cam: cam_mod.CameraModel, cols: int = BOARD_COLS, rows: int = BOARD_ROWS,
                      square: float = BOARD_SQUARE) -> tuple[int, float]:
    """Project a ground checkerboard, undistort, fit the homography; max reprojection error (px)."""
    board = cam_mod.checkerboard_grid(cols, rows, square)
    # lay the board flat on the road, centered laterally about 0.8 m ahead
    ground = np.column_stack([0.6 + board[:, 1], board[:, 0] - board[:, 0].mean(), np.zeros(len(board))])
    px = cam_mod.project_points(cam, ground)
    xd, yd = cam.pixel_to_normalized(px[:, 0], px[:, 1])
    xu, yu, _ = cam_mod.undistort_points(cam.dist, xd, yd, tol=1e-14)
    und = np.column_stack(cam.normalized_to_pixel(xu, yu))
    H = cam_mod.estimate_homography(ground[:, :2], und)
    err = np.linalg.norm(H.apply(ground[:, :2]) - und, axis=1)
    return len(board), float(err.max())


def cmd_calibrate_check(cfg: Config) -> int:
    try:
        n, err = calibration_error(cfg.camera())
    except (cam_mod.CameraError, cam_mod.DegenerateConfigurationError, cam_mod.NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"{n} vertices")
    print(f"max reprojection error: {err:.3e} px")
    return EXIT_OK if err < 1e-6 else EXIT_USAGE


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lanempc", description="Lane detection and MPC lateral control.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", help=f"INI config file (falls back to ${CONFIG_ENV}, then defaults)")
        if out:
            p.add_argument("--out", default=".", help="output directory (created if missing)")
        p.add_argument("--seed", type=int, help="noise seed, overrides [scenario] seed")
        p.add_argument("--debug-dumps", action="store_true", help="write intermediate images")
        return p

    det = common(sub.add_parser("detect", help="run the lane detector on a PPM image"))
    det.add_argument("image")
    sim = common(sub.add_parser("simulate", help="closed-loop lane change"))
    sim.add_argument("--controller", choices=("mpc", "pid"), default="mpc")
    common(sub.add_parser("compare", help="MPC vs PID on the same scenario"))
    common(sub.add_parser("calibrate-check", help="synthetic checkerboard homography check"), out=False)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = _load(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "calibrate-check":
        return cmd_calibrate_check(cfg)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create {out}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "detect":
        return cmd_detect(args.image, cfg, out)
    if args.command == "simulate":
        return cmd_simulate(cfg, args.controller, out, args.seed, args.debug_dumps)
    return cmd_compare(cfg, out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
