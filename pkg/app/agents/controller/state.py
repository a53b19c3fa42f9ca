"""Define the state structures for the controller."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from app.control.ccp import CcpResult
from app.control.dynamics import AgentState
from app.control.ocp import CondensedDocp, CriticalRegion, NeighborParam
from app.localization.collision import CollisionPointEstimate
from app.schemas.ccm import CcmMessage


@dataclass
class State:
    """Inputs and intermediate results of one MPC step of one agent."""

    x_k: AgentState
    cps: list[CollisionPointEstimate]
    # already gated to higher-priority neighbors
    neighbors: list[NeighborParam]
    higher_priority_ids: frozenset[int] = frozenset()
    u_prev: float = 0.0
    u_prev_star: np.ndarray | None = None

    critical: CriticalRegion | None = None
    terminal_active: bool = False
    # d_safe plus the error budget and the pose-uncertainty allowance
    d_constraint: float = 0.0
    docp: CondensedDocp | None = None
    ccp_result: CcpResult | None = None
    fallback: bool = False
    u_star: np.ndarray | None = None
    ccm_out: CcmMessage | None = None


@dataclass(frozen=True)
class ControlDiagnostics:
    ccp: CcpResult | None
    solve_time_s: float
    fallback: bool
    terminal_active: bool
    n_collision_cons: int
    critical: CriticalRegion | None = None
    d_constraint: float = 0.0
    stale: tuple[int, ...] = ()
    missing: tuple[int, ...] = ()


@dataclass(frozen=True)
class ControlOutput:
    """First optimal input, the outgoing CCM and what it took to get them."""

    u_apply: float
    u_star: np.ndarray = field(repr=False)
    ccm_out: CcmMessage
    diagnostics: ControlDiagnostics
