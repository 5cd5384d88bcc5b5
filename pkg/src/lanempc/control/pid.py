from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class PidConfig:
    kp: float
    ki: float
    kd: float
    i_limit: float = 1.0

    def __post_init__(self):
        if not self.i_limit > 0:
            raise ValueError(f"i_limit must be positive, got {self.i_limit}")


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: float = 0.0


def pid_step(state: PidState, cfg: PidConfig, e: float, dt: float) -> tuple[float, PidState]:
    """One PID update with derivative-on-error and a clamped integral (anti-windup)."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    integral = min(max(state.integral + e * dt, -cfg.i_limit), cfg.i_limit)
    de = (e - state.prev_error) / dt
    u = cfg.kp * e + cfg.ki * integral + cfg.kd * de
    return u, PidState(integral, e)


class PidLateralController:
    """Steers on the cross-track error at the vehicle station.

    The error is the reference's lateral offset in the right-positive vehicle
    frame; a path to the left (negative offset) asks for positive (left) steering.
    """

    def __init__(self, cfg: PidConfig, delta_max: float):
        self.cfg = cfg
        self.delta_max = delta_max
        self.state = PidState()

    def reset(self):
        self.state = PidState()

    def step(self, cross_track_right: float, dt: float) -> float:
        u, self.state = pid_step(self.state, self.cfg, -cross_track_right, dt)
        return min(max(u, -self.delta_max), self.delta_max)
