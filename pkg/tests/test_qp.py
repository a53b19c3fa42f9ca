import itertools

import numpy as np
import pytest

from app.control.qp import (
    DualActiveSetSolver,
    QpProblem,
    QpSolverError,
    QpStatus,
    kkt_residual,
    solve_qp,
)


def enumeration_oracle(h, f, a, b) -> float:
    """Best objective over the equality-constrained minimizers of every feasible active set."""
    n, m = h.shape[0], a.shape[0]
    best = np.inf
    for size in range(0, min(n, m) + 1):
        for subset in itertools.combinations(range(m), size):
            rows = list(subset)
            a_s = a[rows]
            if size and np.linalg.matrix_rank(a_s) < size:
                continue
            kkt = np.zeros((n + size, n + size))
            kkt[:n, :n] = h
            kkt[:n, n:] = a_s.T
            kkt[n:, :n] = a_s
            rhs = np.concatenate([-f, b[rows]])
            x = np.linalg.solve(kkt, rhs)[:n]
            if np.all(a @ x - b <= 1e-9 * (1 + np.abs(b))):
                best = min(best, float(0.5 * x @ h @ x + f @ x))
    return best


def random_problem(rng) -> QpProblem:
    n = int(rng.integers(1, 7))
    m = int(rng.integers(0, 9))
    g = rng.normal(size=(n, n))
    h = g @ g.T + np.eye(n)
    f = rng.normal(size=n) * 3.0
    a = rng.normal(size=(m, n))
    x_feasible = rng.normal(size=n)
    b = a @ x_feasible + rng.uniform(0.0, 1.0, size=m)
    return QpProblem(h=h, f=f, a=a, b=b)


def test_unconstrained_minimum():
    p = QpProblem(h=np.eye(2), f=np.array([-1.0, -1.0]), a=np.zeros((0, 2)), b=np.zeros(0))
    sol = solve_qp(p)
    assert sol.status is QpStatus.OPTIMAL
    np.testing.assert_allclose(sol.u_star, [1.0, 1.0])
    assert sol.active_set == ()


def test_symmetric_clipping():
    p = QpProblem(h=np.eye(2), f=np.array([-1.0, -1.0]), a=np.eye(2), b=np.array([0.5, 0.5]))
    sol = solve_qp(p)
    assert sol.optimal
    np.testing.assert_allclose(sol.u_star, [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(sol.lam, [0.5, 0.5], atol=1e-12)
    assert sol.active_set == (0, 1)


def test_matches_enumeration_oracle(rng):
    for _ in range(500):
        p = random_problem(rng)
        sol = solve_qp(p)
        assert sol.status is QpStatus.OPTIMAL
        oracle = enumeration_oracle(p.h, p.f, p.a, p.b)
        assert p.objective(sol.u_star) == pytest.approx(oracle, rel=1e-7, abs=1e-7)
        assert sol.kkt_residual <= 1e-8
        assert np.all(sol.lam >= 0.0)


def test_kkt_residual_is_recomputable(rng):
    p = random_problem(rng)
    sol = solve_qp(p)
    assert kkt_residual(p, sol.u_star, sol.lam) == pytest.approx(sol.kkt_residual)


def test_infeasible_rows_are_reported():
    # x <= -1 and x >= 1
    p = QpProblem(h=np.eye(1), f=np.zeros(1), a=np.array([[1.0], [-1.0]]), b=np.array([-1.0, -1.0]))
    sol = solve_qp(p)
    assert sol.status is QpStatus.INFEASIBLE
    assert not sol.optimal


def test_non_spd_hessian_raises():
    p = QpProblem(h=np.diag([1.0, -1.0]), f=np.zeros(2), a=np.zeros((0, 2)), b=np.zeros(0))
    with pytest.raises(QpSolverError):
        solve_qp(p)


def test_iteration_limit_is_reported():
    n = 4
    p = QpProblem(h=np.eye(n), f=-10.0 * np.ones(n), a=np.eye(n), b=np.zeros(n))
    sol = DualActiveSetSolver(max_iter=2).solve(p)
    assert sol.status is QpStatus.MAX_ITER


def test_warm_start_reaches_same_optimum(rng):
    for _ in range(100):
        p = random_problem(rng)
        cold = solve_qp(p)
        warm = solve_qp(p, warm_start=cold.u_star)
        guess = solve_qp(p, warm_start=rng.normal(size=p.n))
        assert warm.optimal and guess.optimal
        np.testing.assert_allclose(warm.u_star, cold.u_star, atol=1e-7)
        np.testing.assert_allclose(guess.u_star, cold.u_star, atol=1e-7)


def test_deterministic_output(rng):
    p = random_problem(rng)
    first = solve_qp(p)
    second = solve_qp(p)
    assert np.array_equal(first.u_star, second.u_star)
    assert np.array_equal(first.lam, second.lam)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"h": np.eye(2), "f": np.zeros(3), "a": np.zeros((0, 3)), "b": np.zeros(0)},
        {"h": np.array([[1.0, 2.0], [0.0, 1.0]]), "f": np.zeros(2), "a": np.zeros((0, 2)), "b": np.zeros(0)},
        {"h": np.eye(2), "f": np.zeros(2), "a": np.zeros((1, 3)), "b": np.zeros(1)},
        {"h": np.eye(2), "f": np.zeros(2), "a": np.zeros((1, 2)), "b": np.zeros(2)},
    ],
)
def test_inconsistent_dimensions_raise(kwargs):
    with pytest.raises(ValueError):
        QpProblem(**kwargs)


def test_solver_parameter_validation():
    with pytest.raises(ValueError):
        DualActiveSetSolver(tol=0.0)
    with pytest.raises(ValueError):
        DualActiveSetSolver(max_iter=0)
