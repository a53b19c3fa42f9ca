"""Collision point estimation between straight-moving agents.

Each agent's future path is a straight segment from its current position along
its heading. If the forward segments miss each other, the start of one or both
segments is moved back to a point of the path history, so that a collision
point that was already passed can still be found.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from app.schemas.pose import ManeuverPose

logger = logging.getLogger(__name__)

_PARALLEL_EPS = 1e-12
# floor on the crossing-angle sine used to scale lateral pose errors
MIN_CROSSING_SIN = 0.2
# ray length used when an agent stands still
STATIONARY_RAY = 1.0


@dataclass(frozen=True)
class PathSegment:
    p0: np.ndarray
    p1: np.ndarray

    def __post_init__(self):
        if np.allclose(self.p0, self.p1, rtol=0.0, atol=0.0):
            raise ValueError("PathSegment endpoints must differ")


@dataclass(frozen=True)
class AgentTrack:
    """Current pose, speed and path history of one agent in a common frame.

    ``history`` holds (t, x, y) samples, oldest first.
    """

    agent_id: int
    pose: ManeuverPose
    speed: float
    t: float
    history: Sequence[tuple[float, float, float]] = field(default_factory=tuple)
    pos_sigma: float = 0.0
    heading_sigma: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.pose.x, self.pose.y])

    @property
    def heading(self) -> np.ndarray:
        return np.array([math.cos(self.pose.psi), math.sin(self.pose.psi)])


@dataclass(frozen=True)
class CollisionPointEstimate:
    """Joint collision point with one neighbor.

    ``signed_distance`` is positive while the ego has not reached the point and
    negative after passing it; ``rv_signed_distance`` is the same for the neighbor.
    Both are +inf when the paths do not cross.
    ``sigma`` is the one-sigma error of their sum due to pose uncertainty.
    """

    exists: bool
    point: np.ndarray | None
    signed_distance: float
    neighbor_id: int
    rv_signed_distance: float = math.inf
    sigma: float = 0.0

    @classmethod
    def none(cls, neighbor_id: int) -> CollisionPointEstimate:
        return cls(
            exists=False,
            point=None,
            signed_distance=math.inf,
            neighbor_id=neighbor_id,
            rv_signed_distance=math.inf,
        )


def _cross(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def project_segment(pose: ManeuverPose, v: float, t_k: float, t_f: float) -> PathSegment:
    """Straight segment covered until ``t_f`` at constant speed and heading."""
    if not t_f > t_k:
        raise ValueError(f"t_f must be after t_k, got t_k={t_k}, t_f={t_f}")
    if v < 0:
        raise ValueError(f"Speed must be nonnegative, got {v}")

    p0 = np.array([pose.x, pose.y])
    length = (t_f - t_k) * v
    if length <= 0.0:
        length = STATIONARY_RAY
    direction = np.array([math.cos(pose.psi), math.sin(pose.psi)])
    return PathSegment(p0=p0, p1=p0 + length * direction)


def segment_intersection(a: PathSegment, b: PathSegment) -> np.ndarray | None:
    """Intersection point of two closed segments; None if they miss, are parallel or collinear."""
    r = a.p1 - a.p0
    s = b.p1 - b.p0
    denom = _cross(r, s)
    if abs(denom) <= _PARALLEL_EPS * np.linalg.norm(r) * np.linalg.norm(s):
        return None

    offset = b.p0 - a.p0
    t = _cross(offset, s) / denom
    u = _cross(offset, r) / denom
    if 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0:
        return a.p0 + t * r
    return None


def _history_point(track: AgentTrack, t_h: float) -> np.ndarray | None:
    """Sample nearest to ``t - t_h``, or the oldest one if the history is shorter."""
    if not track.history:
        return None
    target = track.t - t_h
    times = np.array([sample[0] for sample in track.history])
    idx = int(np.argmin(np.abs(times - target)))
    _, x, y = track.history[idx]
    return np.array([x, y])


def _signed_distance(track: AgentTrack, point: np.ndarray) -> float:
    delta = point - track.position
    dist = float(np.linalg.norm(delta))
    return dist if float(delta @ track.heading) >= 0.0 else -dist


def _with_history_start(segment: PathSegment, start: np.ndarray | None) -> PathSegment | None:
    if start is None or np.allclose(start, segment.p0) or np.allclose(start, segment.p1):
        return None
    return PathSegment(p0=start, p1=segment.p1)


def estimate_collision_point(
    ego: AgentTrack,
    rv: AgentTrack,
    horizon: float = 30.0,
    t_h: float = 10.0,
) -> CollisionPointEstimate:
    """
    Estimate the joint collision point of the ego and a remote vehicle.

    Tries the forward segments first, then replaces the start of the ego
    segment, then of the remote segment, then of both with the history point
    about ``t_h`` seconds back. The first intersection found wins.

    Args:
        ego: Ego track
        rv: Remote vehicle track, in the ego's frame
        horizon: Projection time t_f - t_k (s)
        t_h: Look-back time into the path history (s)

    Returns:
        CollisionPointEstimate: Estimate with signed distances of both agents
    """
    if not t_h > 0:
        raise ValueError(f"t_h must be positive, got {t_h}")

    ego_fwd = project_segment(ego.pose, ego.speed, ego.t, ego.t + horizon)
    rv_fwd = project_segment(rv.pose, rv.speed, rv.t, rv.t + horizon)
    ego_hist = _with_history_start(ego_fwd, _history_point(ego, t_h))
    rv_hist = _with_history_start(rv_fwd, _history_point(rv, t_h))

    ladder = [
        (ego_fwd, rv_fwd),
        (ego_hist, rv_fwd),
        (ego_fwd, rv_hist),
        (ego_hist, rv_hist),
    ]
    for ego_seg, rv_seg in ladder:
        if ego_seg is None or rv_seg is None:
            continue
        point = segment_intersection(ego_seg, rv_seg)
        if point is not None:
            return CollisionPointEstimate(
                exists=True,
                point=point,
                signed_distance=_signed_distance(ego, point),
                neighbor_id=rv.agent_id,
                rv_signed_distance=_signed_distance(rv, point),
                sigma=pair_distance_sigma(ego, rv, point),
            )

    return CollisionPointEstimate.none(rv.agent_id)


def pair_distance(d_i: float, d_l: float) -> float:
    """Sum of both agents' distances to their joint collision point."""
    if d_i < 0 or d_l < 0:
        raise ValueError(f"Distances must be nonnegative, got ({d_i}, {d_l})")
    if math.isinf(d_i) or math.isinf(d_l):
        return math.inf
    return d_i + d_l


def pair_distance_sigma(ego: AgentTrack, rv: AgentTrack, point: np.ndarray) -> float:
    """
    One-sigma error of the summed distances to ``point`` from both agents' pose uncertainty.

    A heading error becomes a lateral offset that grows with the distance to the
    point. A lateral offset of one path moves the point along the other path,
    scaled by the inverse sine of the crossing angle.
    """
    sin_cross = max(abs(_cross(ego.heading, rv.heading)), MIN_CROSSING_SIN)
    d_ego = float(np.linalg.norm(point - ego.position))
    d_rv = float(np.linalg.norm(point - rv.position))
    lateral = (
        ego.pos_sigma**2
        + (d_ego * ego.heading_sigma) ** 2
        + rv.pos_sigma**2
        + (d_rv * rv.heading_sigma) ** 2
    )
    along = ego.pos_sigma**2 + rv.pos_sigma**2
    return math.sqrt(along + lateral / sin_cross**2)
