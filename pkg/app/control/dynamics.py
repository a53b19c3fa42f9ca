"""Longitudinal agent model: first-order drivetrain lag feeding a double integrator.

State ordering is ``(ax, v, s)``; the single input is the commanded acceleration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgentState:
    """Longitudinal state of one agent.

    ``s`` is the signed path coordinate, zero at the nearest collision point.
    """

    ax: float
    v: float
    s: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.ax, self.v, self.s])):
            raise ValueError(f"AgentState must be finite, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.ax, self.v, self.s], dtype=float)

    @classmethod
    def from_array(cls, x: np.ndarray) -> AgentState:
        return cls(ax=float(x[0]), v=float(x[1]), s=float(x[2]))


@dataclass(frozen=True)
class AgentModel:
    """Exact zero-order-hold discretization of the continuous agent model."""

    t_ax: float
    ts: float
    a_d: np.ndarray = field(repr=False)
    b_d: np.ndarray = field(repr=False)


def continuous_matrices(t_ax: float) -> tuple[np.ndarray, np.ndarray]:
    """Return the continuous-time (A, B) pair for a drivetrain time constant."""
    a = np.array(
        [
            [-1.0 / t_ax, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
        ]
    )
    b = np.array([1.0 / t_ax, 0.0, 0.0])
    return a, b


def discretize_zoh(t_ax: float, ts: float) -> AgentModel:
    """
    Discretize the agent model under a zero-order hold.

    A is block lower-triangular, so e^{A ts} and its input integral have closed
    forms in alpha = e^{-ts/t_ax}. ``expm1`` keeps the small-ts entries accurate.

    Args:
        t_ax: Drivetrain time constant in seconds
        ts: Sample time in seconds

    Returns:
        AgentModel: Model carrying the discrete (a_d, b_d) pair
    """
    if not t_ax > 0:
        raise ValueError(f"t_ax must be positive, got {t_ax}")
    if not ts > 0:
        raise ValueError(f"ts must be positive, got {ts}")

    x = ts / t_ax
    alpha = np.exp(-x)
    # 1 - alpha without cancellation
    one_minus_alpha = -np.expm1(-x)
    # ts - t_ax (1 - alpha) = t_ax (x - (1 - alpha))
    lag_v = t_ax * (x + np.expm1(-x))
    # ts^2/2 - t_ax ts + t_ax^2 (1 - alpha) = t_ax^2 (x^2/2 - x + 1 - alpha)
    lag_s = t_ax**2 * (0.5 * x * x - x - np.expm1(-x))

    a_d = np.array(
        [
            [alpha, 0.0, 0.0],
            [t_ax * one_minus_alpha, 1.0, 0.0],
            [t_ax * lag_v, ts, 1.0],
        ]
    )
    b_d = np.array([one_minus_alpha, lag_v, lag_s])
    return AgentModel(t_ax=t_ax, ts=ts, a_d=a_d, b_d=b_d)


def step(model: AgentModel, x: AgentState, u: float) -> AgentState:
    """Advance one sample: x+ = A_d x + B_d u."""
    return AgentState.from_array(model.a_d @ x.as_array() + model.b_d * u)


def prediction_matrices(model: AgentModel, n: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Build the condensed prediction map.

    Returns ``phi`` with shape (n, 3, 3) and ``gamma`` with shape (n, 3, n) such
    that x_{k+j|k} = phi[j-1] @ x_k + gamma[j-1] @ u for j = 1..n.
    """
    if n < 1:
        raise ValueError(f"Horizon must be at least 1, got {n}")

    phi = np.empty((n, 3, 3))
    gamma = np.zeros((n, 3, n))
    a_pow = np.eye(3)
    for j in range(n):
        a_pow = model.a_d @ a_pow
        phi[j] = a_pow
        if j > 0:
            gamma[j, :, :j] = model.a_d @ gamma[j - 1, :, :j]
        gamma[j, :, j] = model.b_d
    return phi, gamma


def predict_states(
    model: AgentModel,
    x0: AgentState,
    u_seq: np.ndarray,
    extend: int = 0,
) -> np.ndarray:
    """
    Predict the state trajectory for an input sequence.

    Args:
        model: Discrete agent model
        x0: State at the current step
        u_seq: Inputs u_{k|k} .. u_{k+N-1|k}
        extend: Extra steps appended with the last input held

    Returns:
        np.ndarray: Array of shape (N + extend, 3) with x_{k+1|k} onwards
    """
    u_seq = np.asarray(u_seq, dtype=float).ravel()
    if u_seq.size < 1:
        raise ValueError("u_seq must contain at least one input")
    if extend > 0:
        u_seq = np.concatenate([u_seq, np.full(extend, u_seq[-1])])

    phi, gamma = prediction_matrices(model, u_seq.size)
    return phi @ x0.as_array() + gamma @ u_seq


def _rhs(t_ax: float, x: np.ndarray, u: float) -> np.ndarray:
    return np.array([(u - x[0]) / t_ax, x[0], x[1]])


def simulate_continuous(
    t_ax: float,
    x: AgentState,
    u: float,
    duration: float,
    substeps: int,
) -> AgentState:
    """Integrate the continuous model with fixed-step RK4 under a held input."""
    if substeps < 1:
        raise ValueError(f"substeps must be at least 1, got {substeps}")
    if duration <= 0:
        return x

    h = duration / substeps
    state = x.as_array()
    for _ in range(substeps):
        k1 = _rhs(t_ax, state, u)
        k2 = _rhs(t_ax, state + 0.5 * h * k1, u)
        k3 = _rhs(t_ax, state + 0.5 * h * k2, u)
        k4 = _rhs(t_ax, state + h * k3, u)
        state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return AgentState.from_array(state)
