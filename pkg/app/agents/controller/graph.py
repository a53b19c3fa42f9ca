from langgraph.graph import StateGraph

from .configuration import Configuration
from .nodes import (
    assemble_docp,
    emit_ccm,
    fallback_brake,
    route_after_solve,
    solve_penalty_ccp,
)
from .state import State


def build_graph():
    """
    Build and return the per-agent MPC workflow.

    The workflow follows one path per step:
    1. Assemble the condensed OCP from the initial condition and neighbor parameters
    2. Solve it with the penalty CCP
    3. Brake instead when the hard rows of the first subproblem are inconsistent
    4. Emit the outgoing CCM from the applied input sequence

    Returns:
        A compiled LangGraph workflow
    """
    workflow = StateGraph(State, config_schema=Configuration)

    workflow.add_node("assemble_docp", assemble_docp)
    workflow.add_node("solve_penalty_ccp", solve_penalty_ccp)
    workflow.add_node("fallback_brake", fallback_brake)
    workflow.add_node("emit_ccm", emit_ccm)

    workflow.add_edge("__start__", "assemble_docp")
    workflow.add_edge("assemble_docp", "solve_penalty_ccp")
    workflow.add_conditional_edges(
        "solve_penalty_ccp",
        route_after_solve,
        {"fallback_brake": "fallback_brake", "emit_ccm": "emit_ccm"},
    )
    workflow.add_edge("fallback_brake", "emit_ccm")
    workflow.add_edge("emit_ccm", "__end__")

    graph = workflow.compile()
    graph.name = "DMPC Controller"

    return graph


# Compile the graph once when the module is loaded
graph = build_graph()
