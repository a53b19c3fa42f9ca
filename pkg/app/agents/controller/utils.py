import logging
import math
from collections.abc import Iterable, Mapping
from typing import NamedTuple

import numpy as np

from app.control.dynamics import AgentState
from app.control.ocp import NeighborParam
from app.localization.collision import CollisionPointEstimate
from app.schemas.ccm import CcmMessage, CcmTimestamp

logger = logging.getLogger(__name__)


class GatheredNeighbors(NamedTuple):
    """Neighbor parameters entering the collision constraints of one step."""

    params: list[NeighborParam]
    higher_priority_ids: frozenset[int]
    stale: tuple[int, ...]
    missing: tuple[int, ...]


def build_initial_condition(
    ax_k: float, v_k: float, cps: Iterable[CollisionPointEstimate]
) -> AgentState:
    """Odometry state with s_k the negative distance to the closest collision point."""
    distances = [cp.signed_distance for cp in cps if cp.exists and math.isfinite(cp.signed_distance)]
    s_k = -min(distances) if distances else 0.0
    return AgentState(ax=float(ax_k), v=float(v_k), s=float(s_k))


def collision_coordinates(s_k: float, cps: Iterable[CollisionPointEstimate]) -> dict[int, float]:
    """Path coordinate of every existing collision point, +inf where paths do not cross."""
    return {
        cp.neighbor_id: (s_k + cp.signed_distance if cp.exists else math.inf)
        for cp in cps
    }


def gather_neighbor_params(
    rx: Iterable[CcmMessage],
    ego_id: int,
    ego_priority: int,
    conflict_priorities: Mapping[int, int],
    n: int,
    expected_stamp: CcmTimestamp | None = None,
) -> GatheredNeighbors:
    """
    Extract the distance trajectories addressed to the ego.

    Only conflicting neighbors of higher priority (lower value) are kept. A
    neighbor whose CCM is missing, has no entry for the ego, has the wrong
    length or carries an unexpected time stamp gets the worst case d_seq = 0.

    Args:
        rx: CCMs received at this step
        ego_id: Id of the receiving agent
        ego_priority: Priority of the receiving agent
        conflict_priorities: Priority of every neighbor the ego has a collision point with
        n: Horizon length
        expected_stamp: Time stamp of the previous step, staleness is not checked when None

    Returns:
        GatheredNeighbors: Parameters sorted by neighbor id plus stale/missing ids
    """
    by_sender = {m.ego_id: m for m in rx}

    params: list[NeighborParam] = []
    higher: set[int] = set()
    stale: list[int] = []
    missing: list[int] = []
    for neighbor_id in sorted(conflict_priorities):
        if conflict_priorities[neighbor_id] >= ego_priority:
            continue
        higher.add(neighbor_id)

        msg = by_sender.get(neighbor_id)
        d_seq = msg.d_seq_for(ego_id) if msg is not None else None
        if msg is not None and expected_stamp is not None and (
            msg.t_stamp.to_ms_of_hour() != expected_stamp.to_ms_of_hour()
        ):
            logger.warning(
                f"Agent {ego_id}: stale CCM from {neighbor_id} "
                f"({msg.t_stamp.to_ms_of_hour()} ms != {expected_stamp.to_ms_of_hour()} ms)"
            )
            stale.append(neighbor_id)
            d_seq = None
        elif d_seq is not None and len(d_seq) != n:
            logger.warning(
                f"Agent {ego_id}: CCM from {neighbor_id} has {len(d_seq)} distances, expected {n}"
            )
            missing.append(neighbor_id)
            d_seq = None
        elif d_seq is None:
            missing.append(neighbor_id)

        params.append(
            NeighborParam(
                neighbor_id=neighbor_id,
                d_seq=np.zeros(n) if d_seq is None else np.asarray(d_seq, dtype=float),
            )
        )

    if missing:
        logger.debug(f"Agent {ego_id}: assuming worst case for neighbors {missing}")
    return GatheredNeighbors(
        params=params,
        higher_priority_ids=frozenset(higher),
        stale=tuple(stale),
        missing=tuple(missing),
    )
