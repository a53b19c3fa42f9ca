import logging
import time

import numpy as np

from app.agents.controller.configuration import AgentConfig
from app.agents.controller.graph import graph as controller_graph
from app.agents.controller.state import ControlDiagnostics, ControlOutput, State
from app.agents.controller.utils import GatheredNeighbors
from app.control.dynamics import AgentState
from app.localization.collision import CollisionPointEstimate

logger = logging.getLogger(__name__)

# slack allowed on the input bounds for round-off of the QP solution
BOUND_TOLERANCE = 1e-7


class ControllerError(RuntimeError):
    """Raised when the controller produces an input outside its bounds."""


def run_mpc_step(
    cfg: AgentConfig,
    x_k: AgentState,
    neighbors: GatheredNeighbors,
    cps: list[CollisionPointEstimate],
    u_prev_star: np.ndarray | None = None,
    u_prev: float = 0.0,
    step_index: int = 0,
    t_stamp: float = 0.0,
) -> ControlOutput:
    """
    Run one MPC step of one agent through the controller graph.

    Args:
        cfg: Static controller parameters
        x_k: Initial condition, s_k relative to the closest collision point
        neighbors: Gated neighbor parameters from the received CCMs
        cps: Collision point estimates against all neighbors
        u_prev_star: Optimal sequence of the previous step, None at the first step
        u_prev: Input applied at the previous step
        step_index: Synchronized step counter
        t_stamp: Seconds within the hour stamped on the outgoing CCM

    Returns:
        ControlOutput: Input to apply, outgoing CCM and diagnostics

    Raises:
        QpSolverError: The inner QP solver failed
        ControllerError: The first input violates the input bounds
    """
    config = {
        "configurable": {
            "agent": cfg,
            "step_index": step_index,
            "t_stamp": t_stamp,
        }
    }
    initial_state = State(
        x_k=x_k,
        cps=list(cps),
        neighbors=list(neighbors.params),
        higher_priority_ids=neighbors.higher_priority_ids,
        u_prev=u_prev,
        u_prev_star=u_prev_star,
    )

    started = time.perf_counter()
    result = controller_graph.invoke(initial_state, config=config)
    solve_time = time.perf_counter() - started

    u_star = np.asarray(result["u_star"], dtype=float)
    u_apply = float(u_star[0])
    limits = cfg.limits
    if not limits.u_min - BOUND_TOLERANCE <= u_apply <= limits.u_max + BOUND_TOLERANCE:
        raise ControllerError(
            f"Agent {cfg.agent_id} step {step_index}: u={u_apply} outside "
            f"[{limits.u_min}, {limits.u_max}]"
        )

    docp = result.get("docp")
    diagnostics = ControlDiagnostics(
        ccp=result.get("ccp_result"),
        solve_time_s=solve_time,
        fallback=bool(result.get("fallback", False)),
        terminal_active=bool(result.get("terminal_active", False)),
        n_collision_cons=len(docp.quad_cons) if docp is not None else 0,
        critical=result.get("critical"),
        d_constraint=float(result.get("d_constraint", cfg.d_constraint)),
        stale=neighbors.stale,
        missing=neighbors.missing,
    )
    logger.debug(
        f"Agent {cfg.agent_id} step {step_index}: u={u_apply:.3f}, "
        f"solve={solve_time * 1e3:.1f} ms, collision rows={diagnostics.n_collision_cons}"
    )
    return ControlOutput(
        u_apply=u_apply,
        u_star=u_star,
        ccm_out=result["ccm_out"],
        diagnostics=diagnostics,
    )
