"""Condensed distributed optimal control problem for one agent.

Everything is expressed in the control sequence u = (u_{k|k}, ..., u_{k+N-1|k}).
Quadratic collision constraints use the convention ``u' P u + q' u + r <= 0``.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

from app.control.dynamics import AgentModel, AgentState, prediction_matrices

logger = logging.getLogger(__name__)

# state indices inside the prediction map
_V = 1
_S = 2


@dataclass(frozen=True)
class OcpWeights:
    """Cost weights of the tracking objective and the state-slack penalty."""

    q: float = 1.0
    q_n: float = 1.0
    r: float = 5.0
    s_w: float = 5.0
    rho_x: float = 1e3

    def __post_init__(self):
        for name in ("q", "q_n", "r", "s_w"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ValueError(f"Weight {name} must be finite and >= 0, got {value}")
        if self.r + self.s_w <= 0:
            raise ValueError("At least one of r, s_w must be positive")
        if not self.rho_x > 0:
            raise ValueError(f"rho_x must be positive, got {self.rho_x}")


@dataclass(frozen=True)
class OcpLimits:
    u_min: float
    u_max: float
    v_max_seq: np.ndarray = field(repr=False)
    v_ref_seq: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.u_min < self.u_max:
            raise ValueError(
                f"u_min must be below u_max, got ({self.u_min}, {self.u_max})"
            )
        if np.any(np.asarray(self.v_max_seq) < 0):
            raise ValueError("v_max_seq must be nonnegative")
        if np.shape(self.v_max_seq) != np.shape(self.v_ref_seq):
            raise ValueError("v_max_seq and v_ref_seq must have the same length")

    @classmethod
    def constant(
        cls, u_min: float, u_max: float, v_max: float, v_ref: float, n: int
    ) -> OcpLimits:
        return cls(
            u_min=u_min,
            u_max=u_max,
            v_max_seq=np.full(n, float(v_max)),
            v_ref_seq=np.full(n, float(v_ref)),
        )


@dataclass(frozen=True)
class CriticalRegion:
    """Entry/exit path coordinates of the critical region and the brake safe distance."""

    s_in: float
    s_out: float
    d_brake: float = 40.0

    def __post_init__(self):
        if not self.s_in < self.s_out:
            raise ValueError(
                f"Critical region needs s_in < s_out, got ({self.s_in}, {self.s_out})"
            )
        if not self.d_brake > 0:
            raise ValueError(f"d_brake must be positive, got {self.d_brake}")


@dataclass(frozen=True)
class NeighborParam:
    """Distances of a neighbor to the joint collision point, for j = 1..N."""

    neighbor_id: int
    d_seq: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class LinearConstraints:
    """Rows ``a @ u <= b``; ``soft`` marks rows that receive the state slack."""

    a: np.ndarray
    b: np.ndarray
    soft: np.ndarray

    def residual(self, u: np.ndarray) -> np.ndarray:
        return self.a @ u - self.b


@dataclass(frozen=True)
class QuadConstraint:
    p: np.ndarray = field(repr=False)
    q: np.ndarray = field(repr=False)
    r: float
    step_index: int
    neighbor_id: int

    def residual(self, u: np.ndarray) -> float:
        return float(u @ self.p @ u + self.q @ u + self.r)


@dataclass(frozen=True)
class CondensedDocp:
    """One agent's parameterized nonconvex QCQP in the control sequence."""

    h: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)
    c: float
    lin_cons: LinearConstraints
    quad_cons: list[QuadConstraint]
    n: int

    def cost(self, u: np.ndarray) -> float:
        return float(0.5 * u @ self.h @ u + self.f @ u + self.c)


def _difference_matrix(n: int) -> np.ndarray:
    return np.eye(n) - np.eye(n, k=-1)


def build_cost(
    model: AgentModel,
    x0: AgentState,
    u_prev: float,
    weights: OcpWeights,
    v_ref_seq: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, float]:
    """
    Condense the tracking cost into ``0.5 u' H u + f' u + c``.

    Args:
        model: Discrete agent model
        x0: Current state
        u_prev: Input applied at the previous step, enters the first step change
        weights: Cost weights
        v_ref_seq: Reference speeds for j = 1..N

    Returns:
        tuple: (H, f, c)
    """
    v_ref_seq = np.asarray(v_ref_seq, dtype=float)
    n = v_ref_seq.size
    phi, gamma = prediction_matrices(model, n)
    sv = gamma[:, _V, :]
    err0 = phi[:, _V, :] @ x0.as_array() - v_ref_seq

    w = np.full(n, weights.q)
    w[-1] = weights.q_n
    d = _difference_matrix(n)
    d0 = np.zeros(n)
    d0[0] = u_prev

    m = sv.T @ (w[:, None] * sv) + weights.r * d.T @ d + weights.s_w * np.eye(n)
    h = 2.0 * m
    h = 0.5 * (h + h.T)
    f = 2.0 * (sv.T @ (w * err0) - weights.r * d.T @ d0)
    c = float(err0 @ (w * err0) + weights.r * d0 @ d0)
    return h, f, c


def build_agent_constraints(
    model: AgentModel,
    x0: AgentState,
    limits: OcpLimits,
    critical: CriticalRegion | None,
    terminal_active: bool,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Stack the linear agent constraints.

    Row order is u <= u_max, -u <= -u_min, v <= v_max, -v <= 0 and, when the
    terminal constraint is active, -s_N <= -s_out. Velocity rows are soft.

    Returns:
        tuple: (A, b, soft_mask)
    """
    n = np.asarray(limits.v_max_seq).size
    phi, gamma = prediction_matrices(model, n)
    x = x0.as_array()
    sv = gamma[:, _V, :]
    cv = phi[:, _V, :] @ x

    eye = np.eye(n)
    blocks = [eye, -eye, sv, -sv]
    rhs = [
        np.full(n, limits.u_max),
        np.full(n, -limits.u_min),
        np.asarray(limits.v_max_seq, dtype=float) - cv,
        cv,
    ]
    soft = [np.zeros(n, bool), np.zeros(n, bool), np.ones(n, bool), np.ones(n, bool)]

    if terminal_active:
        if critical is None:
            raise ValueError("Terminal constraint requires a critical region")
        s_n_row = gamma[-1, _S, :]
        s_n_free = float(phi[-1, _S, :] @ x)
        blocks.append(-s_n_row[None, :])
        rhs.append(np.array([s_n_free - critical.s_out]))
        soft.append(np.zeros(1, bool))

    return np.vstack(blocks), np.concatenate(rhs), np.concatenate(soft)


def terminal_constraint_active(
    s_k: float,
    critical: CriticalRegion | None,
    higher_priority_conflicts_present: bool,
) -> bool:
    """Whether the agent must commit to leaving the critical region within the horizon."""
    if critical is None or not higher_priority_conflicts_present:
        return False
    return critical.s_in - critical.d_brake <= s_k <= critical.s_out


def critical_region_from_cps(
    s_c_values: Iterable[float],
    d_safe: float,
    d_brake: float = 40.0,
    in_margin: float | None = None,
    out_margin: float | None = None,
) -> CriticalRegion | None:
    """Region spanning the known collision points, padded by d_safe unless overridden."""
    finite = [s for s in s_c_values if np.isfinite(s)]
    if not finite:
        return None
    in_margin = d_safe if in_margin is None else in_margin
    out_margin = d_safe if out_margin is None else out_margin
    return CriticalRegion(
        s_in=min(finite) - in_margin,
        s_out=max(finite) + out_margin,
        d_brake=d_brake,
    )


def build_collision_constraints(
    model: AgentModel,
    x0: AgentState,
    neighbors: Iterable[NeighborParam],
    s_c: Mapping[int, float],
    d_safe: float,
) -> list[QuadConstraint]:
    """
    Quadratic collision constraints for every step where a neighbor is inside d_safe.

    For step j the constraint reads -(s_{k+j|k} - s_c)^2 + (d_safe - d_j)^2 <= 0 and
    is only generated when d_safe - d_j > 0.
    """
    neighbors = list(neighbors)
    if not neighbors:
        return []

    n = np.asarray(neighbors[0].d_seq).size
    phi, gamma = prediction_matrices(model, n)
    ss = gamma[:, _S, :]
    cs = phi[:, _S, :] @ x0.as_array()

    constraints: list[QuadConstraint] = []
    for nb in neighbors:
        d_seq = np.asarray(nb.d_seq, dtype=float)
        if d_seq.size != n:
            raise ValueError(
                f"Neighbor {nb.neighbor_id} has {d_seq.size} distances, expected {n}"
            )
        s_cp = s_c[nb.neighbor_id]
        if not np.isfinite(s_cp):
            continue
        for j in np.flatnonzero(d_safe - d_seq > 0):
            g = ss[j]
            offset = cs[j] - s_cp
            gap = d_safe - d_seq[j]
            constraints.append(
                QuadConstraint(
                    p=-np.outer(g, g),
                    q=-2.0 * offset * g,
                    r=float(gap * gap - offset * offset),
                    step_index=int(j) + 1,
                    neighbor_id=nb.neighbor_id,
                )
            )
    return constraints


def assemble_docp(
    model: AgentModel,
    x0: AgentState,
    u_prev: float,
    weights: OcpWeights,
    limits: OcpLimits,
    critical: CriticalRegion | None,
    terminal_active: bool,
    neighbors: Iterable[NeighborParam],
    s_c: Mapping[int, float],
    d_safe: float,
) -> CondensedDocp:
    """Assemble cost, linear agent constraints and collision constraints."""
    h, f, c = build_cost(model, x0, u_prev, weights, limits.v_ref_seq)
    a, b, soft = build_agent_constraints(model, x0, limits, critical, terminal_active)
    quad_cons = build_collision_constraints(model, x0, neighbors, s_c, d_safe)
    logger.debug(
        f"Assembled DOCP: n={f.size}, linear rows={a.shape[0]}, "
        f"collision rows={len(quad_cons)}, terminal={terminal_active}"
    )
    return CondensedDocp(
        h=h,
        f=f,
        c=c,
        lin_cons=LinearConstraints(a=a, b=b, soft=soft),
        quad_cons=quad_cons,
        n=f.size,
    )
