import numpy as np
import pytest
from scipy.linalg import expm

from app.control.dynamics import (
    AgentState,
    continuous_matrices,
    discretize_zoh,
    predict_states,
    prediction_matrices,
    simulate_continuous,
    step,
)


def zoh_oracle(t_ax: float, ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Block-matrix exponential of [[A, B], [0, 0]]."""
    a = np.array([[-1.0 / t_ax, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    b = np.array([1.0 / t_ax, 0.0, 0.0])
    block = np.zeros((4, 4))
    block[:3, :3] = a
    block[:3, 3] = b
    e = expm(block * ts)
    return e[:3, :3], e[:3, 3]


def rk4_oracle(t_ax: float, x: np.ndarray, u: float, duration: float, steps: int) -> np.ndarray:
    def f(z):
        return np.array([(u - z[0]) / t_ax, z[0], z[1]])

    h = duration / steps
    z = x.astype(float).copy()
    for _ in range(steps):
        k1 = f(z)
        k2 = f(z + 0.5 * h * k1)
        k3 = f(z + 0.5 * h * k2)
        k4 = f(z + h * k3)
        z = z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return z


@pytest.mark.parametrize("t_ax,ts", [(0.4, 0.2), (0.1, 0.2), (1.5, 0.05), (0.4, 1e-4)])
def test_zoh_matches_matrix_exponential(t_ax, ts):
    model = discretize_zoh(t_ax, ts)
    a_d, b_d = zoh_oracle(t_ax, ts)
    np.testing.assert_allclose(model.a_d, a_d, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(model.b_d, b_d, rtol=1e-9, atol=1e-14)


def test_continuous_matrices_shape():
    a, b = continuous_matrices(0.4)
    assert a.shape == (3, 3)
    assert b.shape == (3,)
    assert a[0, 0] == pytest.approx(-2.5)
    assert b[0] == pytest.approx(2.5)


def test_zero_input_from_rest_stays_at_rest():
    model = discretize_zoh(0.4, 0.2)
    x = AgentState(ax=0.0, v=0.0, s=-50.0)
    for _ in range(10):
        x = step(model, x, 0.0)
    assert x == AgentState(ax=0.0, v=0.0, s=-50.0)


def test_constant_speed_advances_position():
    model = discretize_zoh(0.4, 0.2)
    x = step(model, AgentState(ax=0.0, v=10.0, s=0.0), 0.0)
    assert x.v == pytest.approx(10.0, abs=1e-12)
    assert x.s == pytest.approx(2.0, abs=1e-12)


def test_held_input_converges_to_commanded_acceleration():
    model = discretize_zoh(0.4, 0.2)
    x = AgentState(ax=0.0, v=10.0, s=0.0)
    for _ in range(50):
        x = step(model, x, 1.0)
    assert x.ax == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("bad", [(0.0, 0.2), (-0.4, 0.2), (0.4, 0.0)])
def test_invalid_parameters_raise(bad):
    with pytest.raises(ValueError):
        discretize_zoh(*bad)


def test_non_finite_state_rejected():
    with pytest.raises(ValueError):
        AgentState(ax=0.0, v=float("nan"), s=0.0)


def test_rk4_plant_matches_discrete_step(rng):
    model = discretize_zoh(0.4, 0.2)
    for _ in range(20):
        x0 = AgentState(
            ax=float(rng.uniform(-3, 2)), v=float(rng.uniform(0, 15)), s=float(rng.uniform(-80, 20))
        )
        u = float(rng.uniform(-5, 2))
        plant = simulate_continuous(0.4, x0, u, 0.2, 200)
        expected = step(model, x0, u)
        np.testing.assert_allclose(plant.as_array(), expected.as_array(), atol=1e-6)

        reference = rk4_oracle(0.4, x0.as_array(), u, 0.2, 200)
        np.testing.assert_allclose(plant.as_array(), reference, atol=1e-12)


def test_simulate_continuous_with_zero_duration_returns_input():
    x = AgentState(ax=1.0, v=5.0, s=-3.0)
    assert simulate_continuous(0.4, x, 2.0, 0.0, 10) is x


def test_prediction_matrices_match_recursion(rng):
    for _ in range(100):
        t_ax = float(rng.uniform(0.1, 1.5))
        model = discretize_zoh(t_ax, 0.2)
        n = int(rng.integers(1, 25))
        x0 = rng.normal(size=3)
        u = rng.normal(size=n)

        phi, gamma = prediction_matrices(model, n)
        x = x0.copy()
        for j in range(n):
            x = model.a_d @ x + model.b_d * u[j]
            condensed = phi[j] @ x0 + gamma[j] @ u
            np.testing.assert_allclose(condensed, x, rtol=1e-8, atol=1e-9)


def test_predict_states_extension_holds_last_input():
    model = discretize_zoh(0.4, 0.2)
    x0 = AgentState(ax=0.0, v=10.0, s=-40.0)
    u = np.array([1.0, -2.0, 0.5])
    extended = predict_states(model, x0, u, extend=2)
    held = predict_states(model, x0, np.array([1.0, -2.0, 0.5, 0.5, 0.5]))
    assert extended.shape == (5, 3)
    np.testing.assert_allclose(extended, held, atol=1e-12)

    x = x0
    for u_j in [1.0, -2.0, 0.5]:
        x = step(model, x, u_j)
    np.testing.assert_allclose(extended[2], x.as_array(), atol=1e-10)


@pytest.mark.parametrize("extend", [0, 1, 3])
def test_predict_states_superposition(rng, extend):
    model = discretize_zoh(0.4, 0.2)
    for _ in range(20):
        x1, x2 = rng.normal(size=3), rng.normal(size=3)
        u1, u2 = rng.normal(size=20), rng.normal(size=20)
        alpha, beta = rng.normal(size=2)

        combined = predict_states(
            model, AgentState.from_array(alpha * x1 + beta * x2), alpha * u1 + beta * u2, extend
        )
        separate = alpha * predict_states(
            model, AgentState.from_array(x1), u1, extend
        ) + beta * predict_states(model, AgentState.from_array(x2), u2, extend)
        assert combined.shape == (20 + extend, 3)
        np.testing.assert_allclose(combined, separate, rtol=1e-9, atol=1e-9)


def test_predict_states_rejects_empty_sequence():
    model = discretize_zoh(0.4, 0.2)
    with pytest.raises(ValueError):
        predict_states(model, AgentState(0.0, 0.0, 0.0), np.array([]))
