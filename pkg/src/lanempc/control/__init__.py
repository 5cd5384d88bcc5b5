"""Lateral controllers: a PID baseline and a linear time-varying MPC."""
from .mpc import (ConfigError, MpcConfig, MpcController, MpcSolution, assemble_qp, build_prediction,
                  euler_substeps, feedforward_delta, mpc_solve, mpc_step, output_weights)
from .pid import PidConfig, PidLateralController, PidState, pid_step
from .qp import QpConvergenceError, QpProblem, QpResult, power_iteration, solve_box_qp

__all__ = [
    "ConfigError", "MpcConfig", "MpcController", "MpcSolution", "assemble_qp", "build_prediction",
    "euler_substeps", "feedforward_delta", "mpc_solve", "mpc_step", "output_weights",
    "PidConfig", "PidLateralController", "PidState", "pid_step",
    "QpConvergenceError", "QpProblem", "QpResult", "power_iteration", "solve_box_qp",
]
