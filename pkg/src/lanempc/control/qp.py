"""Box-constrained convex QP: minimize 0.5 x'Hx + g'x subject to lb <= x <= ub."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class QpConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"QP solver stopped after {iterations} iterations with residual {residual:.3e}")


@dataclass(frozen=True)
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        g = np.asarray(self.g, dtype=float).ravel()
        lb = np.asarray(self.lb, dtype=float).ravel()
        ub = np.asarray(self.ub, dtype=float).ravel()
        d = len(g)
        if H.shape != (d, d) or lb.shape != (d,) or ub.shape != (d,):
            raise ValueError("QP dimensions are inconsistent")
        if np.max(np.abs(H - H.T), initial=0.0) > 1e-10:
            raise ValueError("H must be symmetric")
        if np.any(lb > ub):
            raise ValueError("lower bounds exceed upper bounds")
        for name, v in (("H", H), ("g", g), ("lb", lb), ("ub", ub)):
            object.__setattr__(self, name, v)

    @property
    def dim(self) -> int:
        return len(self.g)

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.H @ x + self.g @ x)


@dataclass
class QpResult:
    x: np.ndarray
    objective: float
    iterations: int
    residual: float
    history: list = field(default_factory=list)


def power_iteration(H: np.ndarray, iters: int = 200, rtol: float = 1e-10) -> float:
    """Largest eigenvalue of a symmetric positive semidefinite matrix."""
    d = H.shape[0]
    v = np.ones(d) + 0.01 * np.arange(d)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = H @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        new = float(v @ w)
        v = w / nw
        if abs(new - lam) <= rtol * abs(new):
            lam = new
            break
        lam = new
    return max(lam, float(v @ H @ v))


def solve_box_qp(qp: QpProblem, tol: float = 1e-8, max_iter: int = 5000,
                 x0=None, record: bool = False) -> QpResult:
    """Accelerated projected gradient with a monotone safeguard (MFISTA).

    Step size is 1/L with L the largest eigenvalue of H. The objective is
    non-increasing across iterates: an accelerated candidate is only accepted
    when it does not raise the cost, and momentum is reset whenever the
    candidate step opposes the previous one (adaptive restart). Stops when the projected-gradient residual
    ``||x - P(x - grad f(x))||`` drops below ``tol``.
    """
    H, g, lb, ub = qp.H, qp.g, qp.lb, qp.ub
    L = power_iteration(H) * 1.01
    if L <= 0:
        raise ValueError("H must be positive definite")
    x = np.clip(np.zeros(qp.dim) if x0 is None else np.asarray(x0, dtype=float), lb, ub)
    fx = qp.objective(x)
    y = x.copy()
    t = 1.0
    history = [fx] if record else []

    def residual(z):
        return float(np.linalg.norm(z - np.clip(z - (H @ z + g), lb, ub)))

    res = residual(x)
    it = 0
    while res >= tol and it < max_iter:
        it += 1
        z = np.clip(y - (H @ y + g) / L, lb, ub)
        # cost change in difference form; comparing raw objectives fails near the optimum
        dz = z - x
        decrease = float(dz @ (0.5 * (H @ (z + x)) + g))
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if decrease <= 0.0:
            x_new, f_new = z, fx + decrease
        else:
            x_new, f_new = x, fx
        if decrease > 0.0 or float((y - z) @ dz) > 0.0:
            # restart: drop momentum and continue from the best point
            y, t_next = x_new.copy(), 1.0
        else:
            y = x_new + (t / t_next) * (z - x_new) + ((t - 1.0) / t_next) * (x_new - x)
        x, fx, t = x_new, f_new, t_next
        if record:
            history.append(fx)
        res = residual(x)
    if res > 100.0 * tol:
        raise QpConvergenceError(res, it)
    return QpResult(x, qp.objective(x), it, res, history)
