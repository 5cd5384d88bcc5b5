import numpy as np
import pytest

from lanempc.control import PidConfig, PidLateralController, PidState, pid_step


def test_zero_error_gives_zero_output():
    cfg, state = PidConfig(2.0, 0.5, 0.01), PidState()
    for _ in range(50):
        u, state = pid_step(state, cfg, 0.0, 0.05)
        assert u == 0.0


def test_first_step_hand_evaluation():
    u, state = pid_step(PidState(), PidConfig(2.0, 0.5, 0.01), 1.0, 0.1)
    # 2*1 + 0.5*0.1 + 0.01*(1 - 0)/0.1
    assert u == pytest.approx(2.15, abs=1e-12)
    assert state == PidState(pytest.approx(0.1), 1.0)


def test_integral_clamp_engages():
    cfg, state = PidConfig(0.0, 1.5, 0.0, i_limit=0.3), PidState()
    for _ in range(10):
        u, state = pid_step(state, cfg, 1.0, 0.1)
    assert state.integral == 0.3
    assert u == pytest.approx(1.5 * 0.3, abs=1e-15)


def test_integral_bounded_for_any_sequence(rng):
    cfg, state = PidConfig(1.0, 2.0, 0.1, i_limit=0.25), PidState()
    for e in rng.normal(0, 5, 2000):
        _, state = pid_step(state, cfg, float(e), 0.05)
        assert abs(state.integral) <= 0.25


def test_derivative_uses_previous_error():
    cfg = PidConfig(0.0, 0.0, 1.0)
    _, s = pid_step(PidState(), cfg, 0.2, 0.1)
    u, _ = pid_step(s, cfg, 0.5, 0.1)
    assert u == pytest.approx(3.0)


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        pid_step(PidState(), PidConfig(1, 0, 0), 1.0, 0.0)
    with pytest.raises(ValueError):
        PidConfig(1, 0, 0, i_limit=0.0)


def test_lateral_controller_steers_toward_path_and_saturates():
    ctl = PidLateralController(PidConfig(1.1, 0.6, 0.25, 0.5), delta_max=0.4)
    # path 0.1 m to the left of the vehicle (negative in the right-positive frame) -> steer left
    assert ctl.step(-0.1, 0.05) > 0
    ctl.reset()
    assert ctl.state == PidState()
    assert ctl.step(5.0, 0.05) == -0.4


def test_pinned_gains_are_the_documented_tuning():
    from lanempc.sim import ControllerConfigs
    pid = ControllerConfigs().pid
    assert (pid.kp, pid.ki, pid.kd, pid.i_limit) == (1.1, 0.6, 0.25, 0.5)
    # integral clamp stays in force over a long one-sided error
    ctl, out = PidLateralController(pid, 0.4), []
    for _ in range(400):
        out.append(ctl.step(-0.1, 0.05))
    assert np.isclose(ctl.state.integral, 0.5)
