import itertools

import numpy as np
import pytest

from lanempc.control import QpConvergenceError, QpProblem, power_iteration, solve_box_qp


def random_qp(rng, d):
    A = rng.standard_normal((d, d))
    H = A @ A.T + 0.1 * np.eye(d)
    g = rng.standard_normal(d) * 3
    lo = rng.uniform(-2, 0, d)
    hi = lo + rng.uniform(0.1, 3, d)
    return QpProblem(H, g, lo, hi)


def grid_best(qp, n=41):
    axes = [np.linspace(lo, hi, n) for lo, hi in zip(qp.lb, qp.ub)]
    X = np.array(list(itertools.product(*axes)))
    f = 0.5 * np.einsum("ij,jk,ik->i", X, qp.H, X) + X @ qp.g
    return float(f.min())


def test_zero_gradient_gives_origin():
    qp = QpProblem(np.diag([2.0, 3.0]), [0.0, 0.0], [-1, -1], [1, 1])
    res = solve_box_qp(qp)
    assert np.array_equal(res.x, [0.0, 0.0]) and res.iterations == 0


def test_scalar_clamped_optimum():
    res = solve_box_qp(QpProblem([[4.0]], [-4.0], [-0.25], [0.25]))
    assert res.x[0] == 0.25


def test_scalar_interior_optimum():
    res = solve_box_qp(QpProblem([[4.0]], [-4.0], [-5.0], [5.0]))
    assert res.x[0] == pytest.approx(1.0, abs=1e-9)
    assert res.objective == pytest.approx(-2.0, abs=1e-12)


def test_solver_beats_grid(rng):
    for _ in range(40):
        d = int(rng.integers(1, 4))
        qp = random_qp(rng, d)
        res = solve_box_qp(qp)
        assert np.all(res.x >= qp.lb) and np.all(res.x <= qp.ub)
        assert res.objective <= grid_best(qp) + 1e-9


def test_objective_never_increases(rng):
    for _ in range(20):
        qp = random_qp(rng, 6)
        hist = solve_box_qp(qp, record=True).history
        assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))
        assert all(b <= a + 1e-12 for a, b in zip(hist[::100], hist[100::100]))


def test_unconstrained_matches_linear_solve(rng):
    qp = random_qp(rng, 5)
    wide = QpProblem(qp.H, qp.g, np.full(5, -1e6), np.full(5, 1e6))
    res = solve_box_qp(wide, tol=1e-10, max_iter=100000)
    assert np.allclose(res.x, np.linalg.solve(qp.H, -qp.g), atol=1e-8)


def test_convergence_error_carries_residual(rng):
    H = np.diag([1e4, 1e-4])
    qp = QpProblem(H, [1.0, 1.0], [-1e6, -1e6], [1e6, 1e6])
    with pytest.raises(QpConvergenceError) as exc:
        solve_box_qp(qp, max_iter=5)
    assert exc.value.residual > 1e-6 and exc.value.iterations == 5


def test_problem_validation():
    with pytest.raises(ValueError):
        QpProblem([[1.0, 2.0], [0.0, 1.0]], [0, 0], [0, 0], [1, 1])
    with pytest.raises(ValueError):
        QpProblem([[1.0]], [0], [1.0], [0.0])
    with pytest.raises(ValueError):
        QpProblem(np.eye(2), [0, 0, 0], [0, 0], [1, 1])


def test_power_iteration_largest_eigenvalue(rng):
    A = rng.standard_normal((6, 6))
    H = A @ A.T
    assert power_iteration(H) == pytest.approx(np.linalg.eigvalsh(H)[-1], rel=1e-6)
