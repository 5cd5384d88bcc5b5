"""Ackermann geometry and the single-track (bicycle) vehicle model.

Sign conventions follow ISO 8855: x forward, y left, yaw counter-clockwise,
positive steering turns left. State vectors are ordered
``(x, y, psi, v_x, v_y, r)`` and inputs ``(delta, a_x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

STATE_NAMES = ("x", "y", "psi", "vx", "vy", "r")
INPUT_NAMES = ("delta", "ax")


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class VehicleParams:
    m: float = 3.2
    I_z: float = 0.05
    a: float = 0.15
    b: float = 0.15
    C_f: float = 50.0
    C_r: float = 50.0
    W: float = 0.2
    delta_max: float = 0.4
    v_min_slip: float = 0.3
    L: float | None = None

    def __post_init__(self):
        for name in ("m", "I_z", "C_f", "C_r", "a", "b"):
            if not getattr(self, name) > 0:
                raise ValueError(f"vehicle parameter {name} must be positive, got {getattr(self, name)}")
        if self.W < 0:
            raise ValueError(f"track width W must be non-negative, got {self.W}")
        if not 0 < self.delta_max < math.pi / 2:
            raise ValueError(f"delta_max must lie in (0, pi/2), got {self.delta_max}")
        if not self.v_min_slip > 0:
            raise ValueError("v_min_slip must be positive")
        if self.L is None:
            object.__setattr__(self, "L", self.a + self.b)
        elif abs(self.a + self.b - self.L) > 1e-9:
            raise ValueError(f"wheelbase L={self.L} must equal a + b = {self.a + self.b}")


@dataclass(frozen=True)
class VehicleState:
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    r: float = 0.0

    @property
    def beta(self) -> float:
        """Sideslip angle at the center of gravity."""
        return math.atan2(self.vy, self.vx)

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi, self.vx, self.vy, self.r])

    @classmethod
    def from_array(cls, a) -> "VehicleState":
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class ControlInput:
    delta: float = 0.0
    ax: float = 0.0

    def to_array(self) -> np.ndarray:
        return np.array([self.delta, self.ax])


@dataclass(frozen=True)
class LinearModel:
    """Discrete model x+ = A_d x + B_d u, y = C x + D u around (x_nom, u_nom)."""

    A_d: np.ndarray
    B_d: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Ts: float
    x_nom: np.ndarray
    u_nom: np.ndarray

    def __post_init__(self):
        n = self.A_d.shape[0]
        if self.A_d.shape != (n, n) or self.B_d.shape[0] != n or self.C.shape[1] != n:
            raise ValueError("inconsistent linear model dimensions")
        if self.D.shape != (self.C.shape[0], self.B_d.shape[1]):
            raise ValueError("D must be p x m")
        if not self.Ts > 0:
            raise ValueError("Ts must be positive")

    @property
    def n(self) -> int:
        return self.A_d.shape[0]

    @property
    def m(self) -> int:
        return self.B_d.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


# ---------------------------------------------------------------------------
# Ackermann geometry

def ackermann_angles(delta_center: float, p: VehicleParams) -> tuple[float, float]:
    """Split a central steering angle into (inner, outer) wheel angles.

    The central angle is the one whose cotangent is the mean of the two wheel
    cotangents. Both wheel angles carry the sign of the turn, and the inner
    wheel steers more: ``cot|th_out| - cot|th_in| = W / L``.
    """
    if abs(delta_center) >= math.pi / 2:
        raise ValueError(f"central steering angle must satisfy |delta| < pi/2, got {delta_center}")
    if delta_center == 0:
        return 0.0, 0.0
    sign = math.copysign(1.0, delta_center)
    cot_c = 1.0 / math.tan(abs(delta_center))
    half = 0.5 * p.W / p.L
    th_in = math.atan2(1.0, cot_c - half)
    th_out = math.atan2(1.0, cot_c + half)
    return sign * th_in, sign * th_out


def turn_radii(theta_in: float, theta_out: float, p: VehicleParams) -> tuple[float, float]:
    """Rear-axle-referenced turn radii of the inner and outer front wheel tracks."""
    if theta_in == 0 or theta_out == 0:
        raise ValueError("zero steering angle: the vehicle drives straight (infinite radius)")
    R_in = p.L / math.tan(abs(theta_in))
    R_out = p.L / math.tan(abs(theta_out))
    return R_in, R_out


# ---------------------------------------------------------------------------
# bicycle model

def slip_angles(s: VehicleState, delta: float, p: VehicleParams) -> tuple[float, float]:
    v = max(s.vx, p.v_min_slip)
    alpha_f = delta - (s.vy + p.a * s.r) / v
    alpha_r = -(s.vy - p.b * s.r) / v
    return alpha_f, alpha_r


def tire_forces(alpha_f: float, alpha_r: float, p: VehicleParams) -> tuple[float, float]:
    return p.C_f * alpha_f, p.C_r * alpha_r


def _f(x: np.ndarray, u: np.ndarray, p: VehicleParams) -> np.ndarray:
    _, _, psi, vx, vy, r = x
    delta, ax = u
    v = vx if vx > p.v_min_slip else p.v_min_slip
    F_yf = p.C_f * (delta - (vy + p.a * r) / v)
    F_yr = p.C_r * (-(vy - p.b * r) / v)
    c, s = math.cos(psi), math.sin(psi)
    return np.array([
        vx * c - vy * s,
        vx * s + vy * c,
        r,
        ax,
        (F_yf + F_yr) / p.m - vx * r,
        (p.a * F_yf - p.b * F_yr) / p.I_z,
    ])


def derivatives(s: VehicleState, u: ControlInput, p: VehicleParams) -> np.ndarray:
    """Time derivative of the state vector, ordered like :data:`STATE_NAMES`."""
    return _f(s.to_array(), u.to_array(), p)


def _rk4(x: np.ndarray, u: np.ndarray, dt: float, p: VehicleParams) -> np.ndarray:
    k1 = _f(x, u, p)
    k2 = _f(x + 0.5 * dt * k1, u, p)
    k3 = _f(x + 0.5 * dt * k2, u, p)
    k4 = _f(x + dt * k3, u, p)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_rk4(s: VehicleState, u: ControlInput, dt: float, p: VehicleParams) -> VehicleState:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = _rk4(s.to_array(), u.to_array(), dt, p)
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite state after RK4 step: {x}")
    x[2] = wrap_angle(x[2])
    return VehicleState.from_array(x)


def jacobians(x: np.ndarray, u: np.ndarray, p: VehicleParams) -> tuple[np.ndarray, np.ndarray]:
    """Analytic continuous-time Jacobians (df/dx, df/du) of the bicycle model."""
    _, _, psi, vx, vy, r = x
    c, s = math.cos(psi), math.sin(psi)
    guarded = vx <= p.v_min_slip
    v = p.v_min_slip if guarded else vx
    # slip angle partials w.r.t. v_x vanish where the low-speed guard is active
    dafdvx = 0.0 if guarded else (vy + p.a * r) / (v * v)
    dardvx = 0.0 if guarded else (vy - p.b * r) / (v * v)
    A = np.zeros((6, 6))
    A[0, 2] = -vx * s - vy * c
    A[0, 3] = c
    A[0, 4] = -s
    A[1, 2] = vx * c - vy * s
    A[1, 3] = s
    A[1, 4] = c
    A[2, 5] = 1.0
    A[4, 3] = (p.C_f * dafdvx + p.C_r * dardvx) / p.m - r
    A[4, 4] = -(p.C_f + p.C_r) / (p.m * v)
    A[4, 5] = (p.b * p.C_r - p.a * p.C_f) / (p.m * v) - vx
    A[5, 3] = (p.a * p.C_f * dafdvx - p.b * p.C_r * dardvx) / p.I_z
    A[5, 4] = (p.b * p.C_r - p.a * p.C_f) / (p.I_z * v)
    A[5, 5] = -(p.a * p.a * p.C_f + p.b * p.b * p.C_r) / (p.I_z * v)
    B = np.zeros((6, 2))
    B[3, 1] = 1.0
    B[4, 0] = p.C_f / p.m
    B[5, 0] = p.a * p.C_f / p.I_z
    return A, B


# tracked outputs: lateral position and heading
OUTPUT_SELECT = np.array([[0.0, 1.0, 0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0, 0.0, 0.0]])


def linearize(s_nom: VehicleState, u_nom: ControlInput, p: VehicleParams, Ts: float) -> LinearModel:
    """Forward-Euler discretization of the Jacobians at (s_nom, u_nom)."""
    if not Ts > 0:
        raise ValueError(f"Ts must be positive, got {Ts}")
    x0, u0 = s_nom.to_array(), u_nom.to_array()
    A, B = jacobians(x0, u0, p)
    return LinearModel(np.eye(6) + A * Ts, B * Ts, OUTPUT_SELECT.copy(), np.zeros((2, 2)), Ts, x0, u0)
