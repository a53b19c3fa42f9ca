"""Penalty convex-concave procedure for the agent's nonconvex QCQP.

Each iteration linearizes the concave collision constraints around the current
iterate, softens them with one penalized slack per time step and solves the
resulting QP. The penalty weight grows geometrically up to a cap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from app.control.dynamics import AgentState
from app.control.ocp import CondensedDocp, QuadConstraint
from app.control.qp import (
    DualActiveSetSolver,
    QpInfeasibleError,
    QpProblem,
    QpSolverError,
    QpStatus,
)

logger = logging.getLogger(__name__)


@dataclass(kw_only=True)
class CcpConfig:
    """Penalty schedule, stopping thresholds and inner solver settings."""

    rho_c0: float = 1.0
    rho_c_max: float = 1e4
    mu: float = 3.0
    rho_x: float = 1e3
    obj_tol: float = 1e-3
    viol_tol: float = 1e-3
    max_iter: int = 20
    qp_tol: float = 1e-8
    qp_max_iter: int = 500
    # keeps the QP Hessian positive definite in the slack directions
    slack_reg: float = 1e-3

    def __post_init__(self):
        if not self.rho_c0 > 0:
            raise ValueError(f"rho_c0 must be positive, got {self.rho_c0}")
        if not self.rho_c_max >= self.rho_c0:
            raise ValueError("rho_c_max must be at least rho_c0")
        if not self.mu > 1:
            raise ValueError(f"mu must exceed 1, got {self.mu}")
        if not self.rho_x > 0:
            raise ValueError(f"rho_x must be positive, got {self.rho_x}")
        if self.obj_tol < 0 or self.viol_tol < 0:
            raise ValueError("obj_tol and viol_tol must be nonnegative")
        if self.max_iter < 1 or self.qp_max_iter < 1:
            raise ValueError("max_iter and qp_max_iter must be at least 1")
        if not self.slack_reg > 0:
            raise ValueError(f"slack_reg must be positive, got {self.slack_reg}")


@dataclass
class CcpResult:
    u_star: np.ndarray
    eps_c: np.ndarray
    eps_x: float
    iterations: int
    converged: bool
    final_cost: float
    objective: float = 0.0
    rho_c: float = 0.0
    rho_history: list[float] = field(default_factory=list)
    qp_iterations: int = 0


def convexify_constraint(
    quad_con: QuadConstraint, u_nu: np.ndarray
) -> tuple[np.ndarray, float]:
    """
    Linearize ``u' P u + q' u + r`` around ``u_nu``.

    Since P is negative semidefinite the linearization upper-bounds the quadratic
    and is tight at ``u_nu``.

    Returns:
        tuple: (g, h) of the row ``g' u + h <= 0``
    """
    pu = quad_con.p @ u_nu
    g = 2.0 * pu + quad_con.q
    h = float(quad_con.r - u_nu @ pu)
    return g, h


def _build_subproblem(
    docp: CondensedDocp,
    u_nu: np.ndarray,
    rho_c: float,
    cfg: CcpConfig,
    collision_steps: list[int],
) -> QpProblem:
    n = docp.n
    n_c = len(collision_steps)
    n_z = n + 1 + n_c
    col_of_step = {step: n + 1 + k for k, step in enumerate(collision_steps)}

    h = np.zeros((n_z, n_z))
    h[:n, :n] = docp.h
    h[n:, n:] = cfg.slack_reg * np.eye(1 + n_c)
    f = np.concatenate([docp.f, [cfg.rho_x], np.full(n_c, rho_c)])

    lin = docp.lin_cons
    m_lin = lin.a.shape[0]
    rows = np.zeros((m_lin + len(docp.quad_cons) + 1 + n_c, n_z))
    rhs = np.zeros(rows.shape[0])

    rows[:m_lin, :n] = lin.a
    rows[:m_lin, n] = np.where(lin.soft, -1.0, 0.0)
    rhs[:m_lin] = lin.b

    offset = m_lin
    for k, con in enumerate(docp.quad_cons):
        g, h_lin = convexify_constraint(con, u_nu)
        rows[offset + k, :n] = g
        rows[offset + k, col_of_step[con.step_index]] = -1.0
        rhs[offset + k] = -h_lin

    # slacks are nonnegative
    offset += len(docp.quad_cons)
    rows[offset:, n:] = -np.eye(1 + n_c)

    return QpProblem(h=h, f=f, a=rows, b=rhs)


def solve_penalty_ccp(
    docp: CondensedDocp,
    u0: np.ndarray,
    cfg: CcpConfig,
    qp: DualActiveSetSolver | None = None,
) -> CcpResult:
    """
    Run the penalty CCP on one agent's DOCP.

    Args:
        docp: Condensed problem with its quadratic collision constraints
        u0: Initial control sequence
        cfg: Penalty schedule and tolerances
        qp: Inner QP solver; a fresh one is created when omitted

    Returns:
        CcpResult: Last iterate with slacks and diagnostics

    Raises:
        QpInfeasibleError: The hard rows (input bounds, terminal row) are inconsistent
        QpSolverError: The inner solver failed
    """
    n = docp.n
    u_nu = np.asarray(u0, dtype=float).copy()
    if u_nu.size != n:
        raise ValueError(f"u0 has {u_nu.size} entries, expected {n}")
    if qp is None:
        qp = DualActiveSetSolver(tol=cfg.qp_tol, max_iter=cfg.qp_max_iter)

    collision_steps = sorted({con.step_index for con in docp.quad_cons})
    rho_c = cfg.rho_c0
    rho_history: list[float] = []
    prev_obj: float | None = None
    warm: np.ndarray | None = None
    qp_iterations = 0
    converged = False

    u_star = u_nu
    eps_x = 0.0
    eps_c_active = np.zeros(len(collision_steps))
    obj = docp.cost(u_nu)

    for iteration in range(1, cfg.max_iter + 1):
        rho_history.append(rho_c)
        sub = _build_subproblem(docp, u_nu, rho_c, cfg, collision_steps)
        sol = qp.solve(sub, warm)
        qp_iterations += sol.iterations

        if sol.status is QpStatus.INFEASIBLE:
            raise QpInfeasibleError(
                f"Convex subproblem infeasible at CCP iteration {iteration}"
            )
        if sol.status is not QpStatus.OPTIMAL:
            raise QpSolverError(f"Inner QP returned {sol.status.value}")

        z = sol.u_star
        warm = z
        u_star = z[:n]
        eps_x = max(float(z[n]), 0.0)
        eps_c_active = np.maximum(z[n + 1 :], 0.0)
        obj = docp.cost(u_star) + cfg.rho_x * eps_x + rho_c * float(eps_c_active.sum())

        weighted_violation = rho_c * float(eps_c_active.sum())
        logger.debug(
            f"CCP iter {iteration}: obj={obj:.6g}, rho_c={rho_c:g}, "
            f"viol={weighted_violation:.3g}, qp_iters={sol.iterations}"
        )

        if rho_c >= cfg.rho_c_max:
            converged = True
            break
        if (
            prev_obj is not None
            and prev_obj - obj < cfg.obj_tol
            and weighted_violation < cfg.viol_tol
        ):
            converged = True
            break

        prev_obj = obj
        u_nu = u_star
        rho_c = min(cfg.mu * rho_c, cfg.rho_c_max)
    else:
        logger.warning(f"CCP reached max_iter={cfg.max_iter} without converging")

    eps_c = np.zeros(n)
    for k, step in enumerate(collision_steps):
        eps_c[step - 1] = eps_c_active[k]

    return CcpResult(
        u_star=u_star,
        eps_c=eps_c,
        eps_x=eps_x,
        iterations=len(rho_history),
        converged=converged,
        final_cost=obj,
        objective=docp.cost(u_star),
        rho_c=rho_history[-1],
        rho_history=rho_history,
        qp_iterations=qp_iterations,
    )


def warm_start_shift(u_prev_star: np.ndarray | None, n: int | None = None) -> np.ndarray:
    """Shift the previous solution by one step, repeating its last input.

    Without a previous solution the coasting sequence of length ``n`` is returned.
    """
    if u_prev_star is None:
        if n is None:
            raise ValueError("Horizon length is required without a previous solution")
        return np.zeros(n)
    u_prev_star = np.asarray(u_prev_star, dtype=float)
    return np.concatenate([u_prev_star[1:], u_prev_star[-1:]])


def fallback_brake(x_k: AgentState, u_min: float, s_in: float, n: int) -> np.ndarray:
    """Constant deceleration that stops the agent at ``s_in``, saturated at ``u_min``.

    An agent already at or past ``s_in`` coasts.
    """
    distance = s_in - x_k.s
    if x_k.v <= 0.0 or distance <= 0.0:
        return np.zeros(n)
    needed = -(x_k.v**2) / (2.0 * distance)
    return np.full(n, max(u_min, needed))
