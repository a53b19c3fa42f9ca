import logging
import math
from typing import Any

import numpy as np
from langchain_core.runnables import RunnableConfig

from app.control import ccp, ocp
from app.control.dynamics import predict_states
from app.control.qp import QpInfeasibleError
from app.schemas.ccm import CcmConflict, CcmMessage, CcmTimestamp

from .configuration import Configuration
from .state import State
from .utils import collision_coordinates

logger = logging.getLogger(__name__)


def _terminal_conflicts_present(state: State, d_safe: float) -> bool:
    # a higher-priority neighbor counts until it has left the region behind its CP
    return any(
        cp.exists
        and cp.neighbor_id in state.higher_priority_ids
        and cp.rv_signed_distance > -d_safe
        for cp in state.cps
    )


def assemble_docp(state: State, config: RunnableConfig) -> dict[str, Any]:
    """Build the agent's condensed OCP for this step."""
    configuration = Configuration.from_runnable_config(config)
    agent = configuration.agent

    s_c = collision_coordinates(state.x_k.s, state.cps)
    critical = agent.critical
    if critical is None:
        critical = ocp.critical_region_from_cps(
            [s for nb, s in s_c.items() if nb in state.higher_priority_ids],
            agent.d_constraint,
            d_brake=agent.d_brake,
            in_margin=agent.critical_in_margin,
            out_margin=agent.critical_out_margin,
        )
    terminal_active = ocp.terminal_constraint_active(
        state.x_k.s, critical, _terminal_conflicts_present(state, agent.d_safe)
    )
    d_constraint = agent.d_constraint + agent.uncertainty_gain * max(
        (cp.sigma for cp in state.cps if cp.exists), default=0.0
    )

    docp = ocp.assemble_docp(
        agent.model,
        state.x_k,
        state.u_prev,
        agent.weights,
        agent.limits,
        critical,
        terminal_active,
        state.neighbors,
        s_c,
        d_constraint,
    )
    return {
        "critical": critical,
        "terminal_active": terminal_active,
        "d_constraint": d_constraint,
        "docp": docp,
    }


def solve_penalty_ccp(state: State, config: RunnableConfig) -> dict[str, Any]:
    """Run the penalty CCP, warm started from the shifted previous solution."""
    configuration = Configuration.from_runnable_config(config)
    agent = configuration.agent

    u0 = ccp.warm_start_shift(state.u_prev_star, agent.horizon)
    try:
        result = ccp.solve_penalty_ccp(state.docp, u0, agent.ccp_cfg)
    except QpInfeasibleError as e:
        logger.warning(
            f"⚠️ Agent {agent.agent_id} step {configuration.step_index}: {e}; braking"
        )
        return {"fallback": True, "ccp_result": None}

    logger.debug(
        f"Agent {agent.agent_id} step {configuration.step_index}: "
        f"{result.iterations} CCP iterations, rho_c={result.rho_c:g}, "
        f"eps_c={float(result.eps_c.sum()):.3g}, eps_x={result.eps_x:.3g}"
    )
    return {"fallback": False, "ccp_result": result, "u_star": result.u_star}


def route_after_solve(state: State) -> str:
    return "fallback_brake" if state.fallback else "emit_ccm"


def fallback_brake(state: State, config: RunnableConfig) -> dict[str, Any]:
    """Brake to a stop before the critical region entry."""
    configuration = Configuration.from_runnable_config(config)
    agent = configuration.agent

    u_star = ccp.fallback_brake(
        state.x_k, agent.limits.u_min, state.critical.s_in, agent.horizon
    )
    return {"u_star": u_star}


def emit_ccm(state: State, config: RunnableConfig) -> dict[str, Any]:
    """
    Derive the outgoing CCM from the optimized input sequence.

    Distances cover k+2 .. k+N+1 with the last input held for the extra step,
    so they line up with the receiver's horizon one step later.
    """
    configuration = Configuration.from_runnable_config(config)
    agent = configuration.agent
    n = agent.horizon

    s_pred = predict_states(agent.model, state.x_k, state.u_star, extend=1)[1 : n + 1, 2]
    s_c = collision_coordinates(state.x_k.s, state.cps)
    conflicts = [
        CcmConflict(neighbor_id=nb, d_seq=np.abs(s_pred - s_c[nb]).tolist())
        for nb in sorted(s_c)
        if math.isfinite(s_c[nb])
    ]
    ccm_out = CcmMessage(
        t_stamp=CcmTimestamp.from_seconds(configuration.t_stamp),
        ego_id=agent.agent_id,
        conflicts=conflicts,
    )
    return {"ccm_out": ccm_out}
