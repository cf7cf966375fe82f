from __future__ import annotations

import numpy as np
import pytest
from scipy.optimize import minimize

from suctiongrasp.qp import QPError, feasible_point, solve_qp


def test_unconstrained_minimum():
    H = np.diag([2.0, 4.0])
    g = np.array([-2.0, -4.0])
    res = solve_qp(H, g, np.zeros((0, 2)), np.zeros(0), x0=np.zeros(2))
    assert res.converged
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-12)
    assert res.objective == pytest.approx(-3.0)


def test_box_constrained_minimum():
    H = np.eye(2) * 2
    g = np.array([-4.0, 4.0])             # unconstrained optimum (2, -2)
    A = np.vstack([np.eye(2), -np.eye(2)])
    b = np.ones(4)
    res = solve_qp(H, g, A, b)
    np.testing.assert_allclose(res.x, [1.0, -1.0], atol=1e-12)
    assert set(res.active) == {0, 3}


def test_matches_scipy_on_random_instances(rng):
    for _ in range(40):
        n, m = rng.integers(2, 7), rng.integers(1, 12)
        M = rng.standard_normal((n + 2, n))
        H = M.T @ M + 1e-3 * np.eye(n)
        g = rng.standard_normal(n) * 5
        A = rng.standard_normal((m, n))
        b = rng.uniform(0.1, 2.0, m)          # x = 0 strictly feasible
        res = solve_qp(H, g, A, b, x0=np.zeros(n))
        ref = minimize(lambda x: 0.5 * x @ H @ x + g @ x, np.zeros(n),
                       jac=lambda x: H @ x + g, method="SLSQP",
                       constraints=[{"type": "ineq", "fun": lambda x: b - A @ x,
                                     "jac": lambda x: -A}],
                       options={"ftol": 1e-14, "maxiter": 500})
        assert res.converged
        assert np.all(A @ res.x <= b + 1e-9)
        assert res.objective <= ref.fun + 1e-7 * (1 + abs(ref.fun))


def test_singular_hessian_path(rng):
    # rank-one objective (x0 + x1 - 3)^2 over a box: many minimizers, value 0
    H = 2 * np.ones((2, 2))
    g = np.array([-6.0, -6.0])
    A = np.vstack([np.eye(2), -np.eye(2)])
    b = np.array([2.0, 2.0, 0.0, 0.0])
    res = solve_qp(H, g, A, b, x0=np.zeros(2))
    assert res.converged
    assert res.x.sum() == pytest.approx(3.0, abs=1e-10)
    assert np.all(A @ res.x <= b + 1e-12)


def test_infeasible_start_is_repaired():
    H = np.eye(2)
    g = np.zeros(2)
    A = np.array([[-1.0, 0.0]])
    b = np.array([-1.0])                  # x0 >= 1
    res = solve_qp(H, g, A, b, x0=np.zeros(2))
    np.testing.assert_allclose(res.x, [1.0, 0.0], atol=1e-12)


def test_empty_constraint_set_raises():
    A = np.array([[1.0], [-1.0]])
    b = np.array([-1.0, -1.0])            # x <= -1 and x >= 1
    with pytest.raises(QPError):
        feasible_point(A, b)
    with pytest.raises(QPError):
        solve_qp(np.eye(1), np.zeros(1), A, b)


def test_unbounded_raises():
    H = np.zeros((2, 2))
    g = np.array([-1.0, 0.0])
    A = np.array([[0.0, 1.0]])
    b = np.array([1.0])
    with pytest.raises(QPError):
        solve_qp(H, g, A, b, x0=np.zeros(2))


def test_degenerate_vertex_terminates():
    # three constraints active at the optimum in 2D
    H = np.eye(2)
    g = np.array([-5.0, -5.0])
    A = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    b = np.array([1.0, 1.0, 2.0])
    res = solve_qp(H, g, A, b, x0=np.zeros(2))
    assert res.converged
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-12)
