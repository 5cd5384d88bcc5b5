import math

import numpy as np
import pytest

from lanempc.dynamics import VehicleParams, VehicleState
from lanempc.sim import (TRACE_COLUMNS, ControllerConfigs, RunTrace, Scenario, SimulationError,
                         compare_controllers, default_scenario, final_offset_error, ground_truth_reference,
                         make_lane_change_road, rmse_crosstrack, run_checked, run_closed_loop,
                         yaw_rate_smoothness)

P = VehicleParams()
CFGS = ControllerConfigs()


def fake_trace(**cols):
    n = len(next(iter(cols.values())))
    full = {c: np.zeros(n) for c in TRACE_COLUMNS}
    full.update({k: np.asarray(v, dtype=float) for k, v in cols.items()})
    return RunTrace("mpc", full, np.zeros(n, dtype=bool))


@pytest.fixture(scope="module")
def gt_mpc():
    return run_closed_loop(default_scenario(), "mpc", CFGS, P)


@pytest.fixture(scope="module")
def vision_mpc():
    return run_closed_loop(default_scenario(perception_mode="vision_in_loop"), "mpc", CFGS, P)


# -- road ---------------------------------------------------------------------------

def test_lane_change_endpoints_and_midpoint():
    g = make_lane_change_road(0.35, 2.0, 2.0).centerline
    assert g(2.0) == 0.0
    assert g(4.0) == pytest.approx(0.35, abs=1e-15)
    assert g(3.0) == pytest.approx(0.175, abs=1e-15)
    assert g(-5.0) == 0.0 and g(50.0) == pytest.approx(0.35, abs=1e-15)


def test_lane_change_peak_slope():
    g = make_lane_change_road(0.35, 2.0, 2.0).centerline
    s = np.linspace(2.0, 4.0, 2001)
    slope = g(s, 1)
    assert slope.max() == pytest.approx(1.5 * 0.35 / 2.0, abs=1e-12)
    assert s[np.argmax(slope)] == pytest.approx(3.0, abs=1e-3)


def test_lane_change_is_c1():
    g = make_lane_change_road(0.35, 2.0, 2.0).centerline
    for b in (2.0, 4.0):
        for d in (0, 1):
            assert g(b - 1e-9, d) == pytest.approx(g(b + 1e-9, d), abs=1e-7)


def test_lane_change_rejects_empty_ramp():
    with pytest.raises(ValueError):
        make_lane_change_road(0.35, 2.0, 0.0)


# -- scenario ---------------------------------------------------------------------------

def test_scenario_defaults():
    scn = default_scenario()
    assert (scn.target_speed, scn.duration, scn.plant_dt, scn.control_dt) == (2.0, 8.0, 0.002, 0.05)
    assert (scn.substeps, scn.n_steps) == (25, 160)
    assert scn.target_offset == pytest.approx(0.35)


@pytest.mark.parametrize("kw", [dict(duration=0.0), dict(control_dt=0.005, plant_dt=0.002),
                                dict(perception_mode="lidar"), dict(lateral_noise_std=-1.0)])
def test_scenario_validation(kw):
    with pytest.raises(ValueError):
        default_scenario(**kw)


# -- ground-truth reference -----------------------------------------------------------

def test_reference_of_offset_road_is_to_the_left():
    road = make_lane_change_road(0.35, -10.0, 1.0)  # already shifted 0.35 m left
    ref = ground_truth_reference(road, (0.0, 0.0, 0.0), np.linspace(0, 2, 5))
    assert np.allclose(ref.y_lat, -0.35, atol=1e-12)
    assert np.allclose(ref.psi, 0.0) and np.allclose(ref.kappa, 0.0)


def test_reference_for_rotated_vehicle():
    road = make_lane_change_road(0.0, 100.0, 1.0)
    psi = 0.1
    ref = ground_truth_reference(road, (0.0, 0.2, psi), [0.0, 1.0])
    # perpendicular distance to the x axis measured along the vehicle's right-hand direction
    assert ref.y_lat[0] == pytest.approx(0.2 / math.cos(psi), abs=1e-12)
    assert ref.y_lat[1] == pytest.approx((0.2 + math.sin(psi)) / math.cos(psi), abs=1e-12)
    assert np.allclose(ref.psi, psi)


# -- metrics --------------------------------------------------------------------------

def test_rmse_examples():
    road = make_lane_change_road(0.0, 100.0, 1.0)
    assert rmse_crosstrack(fake_trace(x=[0, 1, 2], y=[0, 0, 0]), road) == 0.0
    assert rmse_crosstrack(fake_trace(x=[0, 1, 2], y=[0.05] * 3), road) == pytest.approx(0.05)
    assert rmse_crosstrack(fake_trace(x=[0, 1], y=[0.3, -0.4]), road) == pytest.approx(math.sqrt(0.125))
    with pytest.raises(ValueError):
        rmse_crosstrack(fake_trace(x=[], y=[]), road)


def test_smoothness_examples():
    assert yaw_rate_smoothness([0.2] * 5) == (0.0, 0.0)
    assert yaw_rate_smoothness([0.0, 0.1, 0.0])[0] == pytest.approx(0.2)
    c, n = 0.3, 7
    alt = [c * (-1) ** k for k in range(n)]
    assert yaw_rate_smoothness(alt)[0] == pytest.approx(2 * c * (n - 1))
    assert yaw_rate_smoothness(fake_trace(r=[0.0, 0.1, 0.0])) == pytest.approx((0.2, np.std([0, 0.1, 0])))
    with pytest.raises(ValueError):
        yaw_rate_smoothness([1.0])


# -- closed loop ---------------------------------------------------------------------------

@pytest.mark.parametrize("controller", ["mpc", "pid"])
def test_straight_road_is_an_equilibrium(controller):
    scn = default_scenario(road=make_lane_change_road(0.0, 2.0, 2.0), duration=3.0)
    tr = run_closed_loop(scn, controller, CFGS, P)
    assert np.max(np.abs(tr["y"])) < 1e-6


def test_trace_timing_and_actuation(gt_mpc):
    assert np.allclose(np.diff(gt_mpc["t"]), 0.05)
    assert np.all(np.diff(gt_mpc["t"]) > 0)
    assert np.max(np.abs(gt_mpc["delta"])) <= P.delta_max
    assert not gt_mpc.flagged.any()


def test_default_lane_change_is_tracked(gt_mpc):
    scn = default_scenario()
    assert rmse_crosstrack(gt_mpc, scn.road) < 0.05
    assert final_offset_error(gt_mpc, scn) < 0.02


def test_same_seed_same_trace():
    scn = default_scenario(duration=2.0, lateral_noise_std=0.01, noise_seed=7)
    a = run_closed_loop(scn, "mpc", CFGS, P).to_csv()
    assert a == run_closed_loop(scn, "mpc", CFGS, P).to_csv()
    assert a != run_closed_loop(default_scenario(duration=2.0, lateral_noise_std=0.01, noise_seed=8),
                                "mpc", CFGS, P).to_csv()


def test_csv_layout(gt_mpc):
    lines = gt_mpc.to_csv().splitlines()
    assert lines[0] == "t,x,y,psi,vx,vy,r,delta,ax,y_ref,detect_err,qp_iters,qp_cost"
    assert len(lines) == 1 + 160
    assert all(len(line.split(",")) == 13 for line in lines[1:])


def test_halving_plant_step_barely_moves_result(gt_mpc):
    fine = run_closed_loop(default_scenario(plant_dt=0.001), "mpc", CFGS, P)
    end = lambda tr: np.array([tr["x"][-1], tr["y"][-1]])
    assert np.linalg.norm(end(fine) - end(gt_mpc)) < 1e-4


def test_initial_state_is_used():
    scn = default_scenario(duration=0.1, initial_state=VehicleState(y=0.05, vx=2.0))
    assert run_closed_loop(scn, "pid", CFGS, P)["y"][0] == 0.05


def test_unknown_controller_rejected():
    with pytest.raises(ValueError):
        run_closed_loop(default_scenario(duration=0.1), "lqr", CFGS, P)


def test_invisible_markings_fail_the_run():
    road = make_lane_change_road(0.35, 2.0, 2.0, marking_color=(80, 80, 80))
    scn = default_scenario(road=road, duration=0.5, perception_mode="vision_in_loop")
    with pytest.raises(SimulationError) as exc:
        run_checked(scn, "pid", CFGS, P)
    assert exc.value.controller == "pid" and exc.value.flagged_fraction == 1.0


# -- vision in the loop -----------------------------------------------------------------------

def test_vision_loop_detection_error(vision_mpc):
    err = vision_mpc["detect_err"]
    assert np.all(np.isfinite(err))
    assert err.max() < 0.02
    assert not vision_mpc.flagged.any()


def test_vision_and_ground_truth_track_alike(vision_mpc, gt_mpc):
    road = default_scenario().road
    assert abs(rmse_crosstrack(vision_mpc, road) - rmse_crosstrack(gt_mpc, road)) < 0.03


# -- comparison ---------------------------------------------------------------------------

def test_self_comparison_has_no_differences():
    rep = compare_controllers(default_scenario(duration=3.0), CFGS, P, arms=("mpc", "mpc"))
    assert (rep.rel_rmse, rep.rel_yaw_tv, rep.rel_yaw_std) == (0.0, 0.0, 0.0)


def test_default_comparison_verdict_and_determinism():
    a = compare_controllers(default_scenario(), CFGS, P)
    assert a.smoother and a.passed
    assert "yaw_tv_mpc < yaw_tv_pid: true" in a.to_text()
    assert a.to_text() == compare_controllers(default_scenario(), CFGS, P).to_text()
