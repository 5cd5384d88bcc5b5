"""Linear time-varying MPC for lateral control of the bicycle model.

Each control step re-linearizes the plant at the current state and the
previously applied steering, expresses the (affine) prediction model in a frame
attached to the vehicle, and solves a condensed box-constrained QP over the
steering corrections. A kinematic curvature feedforward is added to the
optimized correction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..dynamics import ControlInput, LinearModel, VehicleParams, VehicleState, _f, linearize
from ..lanes import ReferenceTrajectory
from .qp import QpConvergenceError, QpProblem, QpResult, solve_box_qp


class ConfigError(ValueError):
    pass


def _check_psd(name, M, strict=False):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1] or np.max(np.abs(M - M.T), initial=0.0) > 1e-12:
        raise ConfigError(f"{name} must be a symmetric square matrix")
    w = np.linalg.eigvalsh(M)
    if strict and w.min() <= 0:
        raise ConfigError(f"{name} must be positive definite")
    if w.min() < -1e-12:
        raise ConfigError(f"{name} must be positive semidefinite")
    return M


@dataclass(frozen=True)
class MpcConfig:
    N: int = 20
    N_u: int = 5
    N_c: int = 20
    Ts: float = 0.05
    Q: np.ndarray = field(default_factory=lambda: np.diag([10.0, 1.0]))
    R: np.ndarray = field(default_factory=lambda: np.array([[1.0]]))
    P: np.ndarray = field(default_factory=lambda: np.diag([10.0, 1.0]))
    u_min: np.ndarray = field(default_factory=lambda: np.array([-0.4]))
    u_max: np.ndarray = field(default_factory=lambda: np.array([0.4]))
    # optional soft bounds on outputs (lateral, heading) and states; inf disables
    y_min: np.ndarray = field(default_factory=lambda: np.full(2, -np.inf))
    y_max: np.ndarray = field(default_factory=lambda: np.full(2, np.inf))
    x_min: np.ndarray = field(default_factory=lambda: np.full(6, -np.inf))
    x_max: np.ndarray = field(default_factory=lambda: np.full(6, np.inf))
    soft_weight: float = 0.0
    tol: float = 1e-8
    max_iter: int = 5000
    speed_gain: float = 1.0
    a_max: float = 2.0

    def __post_init__(self):
        if not 1 <= self.N_u <= self.N:
            raise ConfigError(f"need 1 <= N_u <= N, got N_u={self.N_u}, N={self.N}")
        if not 1 <= self.N_c <= self.N:
            raise ConfigError(f"need 1 <= N_c <= N, got N_c={self.N_c}, N={self.N}")
        if not self.Ts > 0:
            raise ConfigError("Ts must be positive")
        object.__setattr__(self, "Q", _check_psd("Q", self.Q))
        object.__setattr__(self, "P", _check_psd("P", self.P))
        object.__setattr__(self, "R", _check_psd("R", self.R, strict=True))
        for name in ("u_min", "u_max", "y_min", "y_max", "x_min", "x_max"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if np.any(self.u_min >= self.u_max):
            raise ConfigError("u_min must be below u_max")
        if self.soft_weight < 0:
            raise ConfigError("soft_weight must be non-negative")


def build_prediction(model: LinearModel, N: int, N_u: int) -> tuple[np.ndarray, np.ndarray]:
    """Stacked output predictions Y = S_x x0 + S_u U over k = 1..N.

    Inputs after step N_u - 1 hold the last free input.
    """
    if not 1 <= N_u <= N:
        raise ValueError(f"need 1 <= N_u <= N, got N_u={N_u}, N={N}")
    A, B, C = model.A_d, model.B_d, model.C
    n, m, p = model.n, model.m, model.p
    if B.shape[0] != n or C.shape[1] != n:
        raise ValueError("model dimensions are inconsistent")
    S_x = np.zeros((N * p, n))
    S_u = np.zeros((N * p, N_u * m))
    # CA^i B for i = 0..N-1
    Apow = np.eye(n)
    CAB = []
    for k in range(1, N + 1):
        CAB.append(C @ Apow @ B)
        Apow = A @ Apow
        S_x[(k - 1) * p:k * p] = C @ Apow
    for k in range(1, N + 1):
        rows = slice((k - 1) * p, k * p)
        for i in range(k):  # input applied at step i reaches y(k) through CA^(k-1-i)B
            j = min(i, N_u - 1)
            S_u[rows, j * m:(j + 1) * m] += CAB[k - 1 - i]
    return S_x, S_u


def output_weights(cfg: MpcConfig) -> np.ndarray:
    """Block-diagonal output weight: Q on every predicted step, plus P on the last."""
    p = cfg.Q.shape[0]
    W = np.kron(np.eye(cfg.N), cfg.Q)
    W[-p:, -p:] += cfg.P
    return W


def assemble_qp(S_x, S_u, x0, ref, cfg: MpcConfig) -> QpProblem:
    m = cfg.R.shape[0]
    N_u = S_u.shape[1] // m
    W = output_weights(cfg)
    R_blk = np.kron(np.eye(N_u), cfg.R)
    H = 2.0 * (S_u.T @ W @ S_u + R_blk)
    H = 0.5 * (H + H.T)
    g = 2.0 * S_u.T @ W @ (S_x @ np.asarray(x0, dtype=float) - np.asarray(ref, dtype=float))
    lb = np.tile(cfg.u_min, N_u)
    ub = np.tile(cfg.u_max, N_u)
    return QpProblem(H, g, lb, ub)


def feedforward_delta(kappa: float, p: VehicleParams) -> tuple[float, bool]:
    """Kinematic steering for path curvature ``kappa``; returns (delta, saturated)."""
    delta = math.atan(p.L * kappa)
    if abs(delta) > p.delta_max:
        return math.copysign(p.delta_max, delta), True
    return delta, False


@dataclass
class MpcSolution:
    delta: float
    ax: float
    U: np.ndarray
    feedforward: np.ndarray
    S_x: np.ndarray
    S_u: np.ndarray
    x0: np.ndarray
    ref: np.ndarray
    ref_eff: np.ndarray
    qp: QpProblem
    result: QpResult
    flagged: bool = False


def _augment(model: LinearModel, s_nom: np.ndarray, u_nom: np.ndarray, p: VehicleParams) -> LinearModel:
    """Append a constant state carrying the affine drift of the linearization.

    Only the steering column of B is kept; the longitudinal command is held at
    its nominal value over the horizon.
    """
    A, B = (model.A_d - np.eye(model.n)) / model.Ts, model.B_d / model.Ts
    c = model.Ts * (_f(s_nom, u_nom, p) - A @ s_nom - B[:, 0] * u_nom[0])
    n = model.n
    A_aug = np.eye(n + 1)
    A_aug[:n, :n] = model.A_d
    A_aug[:n, n] = c
    B_aug = np.zeros((n + 1, 1))
    B_aug[:n, 0] = model.B_d[:, 0]
    C_aug = np.hstack([model.C, np.zeros((model.p, 1))])
    return LinearModel(A_aug, B_aug, C_aug, np.zeros((model.p, 1)), model.Ts,
                       np.append(model.x_nom, 1.0), model.u_nom[:1])


def euler_substeps(s: VehicleState, u: ControlInput, p: VehicleParams, Ts: float) -> int:
    """Forward-Euler sub-steps per control interval that keep every mode well resolved.

    At low speed the lateral modes get fast enough that one Euler step of
    length Ts overshoots (|lambda * Ts| > 2 makes the discrete model unstable);
    splitting the interval keeps |lambda * Ts / n| <= 1.
    """
    A = (linearize(s, u, p, Ts).A_d - np.eye(6)) / Ts
    return max(1, math.ceil(Ts * float(np.max(np.abs(np.linalg.eigvals(A))))))


def _compose(model: LinearModel, n: int, Ts: float) -> LinearModel:
    """n repeated steps of a discrete model with the input held constant."""
    if n == 1:
        return model
    A = np.linalg.matrix_power(model.A_d, n)
    B = sum(np.linalg.matrix_power(model.A_d, i) for i in range(n)) @ model.B_d
    return LinearModel(A, B, model.C, model.D, Ts, model.x_nom, model.u_nom)


def speed_command(vx: float, target_speed: float, cfg: MpcConfig) -> float:
    return min(max(cfg.speed_gain * (target_speed - vx), -cfg.a_max), cfg.a_max)


def _soft_penalty(H, g, S_rows, base, bound, w):
    # quadratic pull of the violating predictions back onto their bound
    H = H + 2.0 * w * S_rows.T @ S_rows
    g = g + 2.0 * w * S_rows.T @ (base - bound)
    return H, g


def mpc_solve(s: VehicleState, traj: ReferenceTrajectory, cfg: MpcConfig, p: VehicleParams,
              prev_delta: float = 0.0, target_speed: float | None = None) -> MpcSolution:
    """Assemble and solve one MPC problem; ``traj`` is in the right-positive vehicle frame."""
    target = s.vx if target_speed is None else target_speed
    ax = speed_command(s.vx, target, cfg)
    # vehicle-attached frame: the car sits at the origin with zero heading
    local = VehicleState(0.0, 0.0, 0.0, s.vx, s.vy, s.r)
    u_nom = np.array([prev_delta, ax])
    n_sub = euler_substeps(local, ControlInput(prev_delta, ax), p, cfg.Ts)
    model = linearize(local, ControlInput(prev_delta, ax), p, cfg.Ts / n_sub)
    aug = _compose(_augment(model, local.to_array(), u_nom, p), n_sub, cfg.Ts)
    S_x, S_u = build_prediction(aug, cfg.N, cfg.N_u)
    _, S_full = build_prediction(aug, cfg.N, cfg.N)
    x0 = np.append(local.to_array(), 1.0)

    k = np.arange(1, cfg.N + 1)
    t = k * cfg.Ts
    stations = np.maximum(s.vx, 0.0) * t + 0.5 * ax * t * t
    y_r, psi_r, _ = traj.sample(stations)
    # reference is right-positive; the model is left-positive
    ref = np.column_stack([-y_r, -psi_r]).ravel()
    st_in = np.maximum(s.vx, 0.0) * (k - 1) * cfg.Ts
    _, _, kap = traj.sample(st_in)
    ff = np.array([feedforward_delta(-kk, p)[0] for kk in kap])
    ref_eff = ref - S_full @ ff

    qp = assemble_qp(S_x, S_u, x0, ref_eff, cfg)
    ff_blocks = ff[:cfg.N_u]
    qp = QpProblem(qp.H, qp.g, qp.lb - ff_blocks, qp.ub - ff_blocks)
    result = solve_box_qp(qp, cfg.tol, cfg.max_iter)

    if cfg.soft_weight > 0:
        qp, result = _apply_soft_bounds(qp, result, aug, S_x, S_u, S_full, x0, ff, cfg)

    U = result.x
    delta = min(max(U[0] + ff[0], -p.delta_max), p.delta_max)
    return MpcSolution(delta, ax, U, ff, S_x, S_u, x0, ref, ref_eff, qp, result)


def _apply_soft_bounds(qp, result, aug, S_x, S_u, S_full, x0, ff, cfg, passes=5):
    p_out = aug.p
    n_c = cfg.N_c * p_out
    base_y = (S_x @ x0 + S_full @ ff)[:n_c]
    Su_y = S_u[:n_c]
    lo_y = np.tile(cfg.y_min, cfg.N_c)
    hi_y = np.tile(cfg.y_max, cfg.N_c)
    state_model = LinearModel(aug.A_d, aug.B_d, np.eye(aug.n)[:-1], np.zeros((aug.n - 1, 1)), aug.Ts,
                              aug.x_nom, aug.u_nom)
    Sx_s, Su_s = build_prediction(state_model, cfg.N, cfg.N_u)
    _, Sf_s = build_prediction(state_model, cfg.N, cfg.N)
    n_s = cfg.N_c * state_model.p
    base_s = (Sx_s @ x0 + Sf_s @ ff)[:n_s]
    Su_s = Su_s[:n_s]
    lo_s = np.tile(cfg.x_min, cfg.N_c)
    hi_s = np.tile(cfg.x_max, cfg.N_c)
    active = [set(), set(), set(), set()]
    for _ in range(passes):
        U = result.x
        y = base_y + Su_y @ U
        xs = base_s + Su_s @ U
        new = [set(np.flatnonzero(y < lo_y - 1e-9)), set(np.flatnonzero(y > hi_y + 1e-9)),
               set(np.flatnonzero(xs < lo_s - 1e-9)), set(np.flatnonzero(xs > hi_s + 1e-9))]
        if all(n <= a for n, a in zip(new, active)):
            break
        active = [a | n for a, n in zip(active, new)]
        H, g = qp.H, qp.g
        for idx, S_rows, base, bound in ((active[0], Su_y, base_y, lo_y), (active[1], Su_y, base_y, hi_y),
                                         (active[2], Su_s, base_s, lo_s), (active[3], Su_s, base_s, hi_s)):
            if idx:
                i = np.array(sorted(idx))
                H, g = _soft_penalty(H, g, S_rows[i], base[i], bound[i], cfg.soft_weight)
        H = 0.5 * (H + H.T)
        qp_new = QpProblem(H, g, qp.lb, qp.ub)
        result = solve_box_qp(qp_new, cfg.tol, cfg.max_iter, x0=result.x)
        qp_out = qp_new
    else:
        return qp_out, result
    return (qp_out if any(active) else qp), result


def mpc_step(s: VehicleState, traj: ReferenceTrajectory, cfg: MpcConfig, p: VehicleParams,
             prev_delta: float = 0.0, target_speed: float | None = None) -> ControlInput:
    sol = mpc_solve(s, traj, cfg, p, prev_delta, target_speed)
    return ControlInput(sol.delta, sol.ax)


class MpcController:
    """Receding-horizon controller that remembers its last command."""

    def __init__(self, cfg: MpcConfig, params: VehicleParams, target_speed: float):
        self.cfg = cfg
        self.params = params
        self.target_speed = target_speed
        self.prev = ControlInput()
        self.last: MpcSolution | None = None

    def reset(self):
        self.prev = ControlInput()
        self.last = None

    def step(self, s: VehicleState, traj: ReferenceTrajectory) -> tuple[ControlInput, bool]:
        """Returns the command and whether the step was flagged (solver failure)."""
        try:
            sol = mpc_solve(s, traj, self.cfg, self.params, self.prev.delta, self.target_speed)
        except QpConvergenceError:
            self.last = None
            return self.prev, True
        self.last = sol
        self.prev = ControlInput(sol.delta, sol.ax)
        return self.prev, False
