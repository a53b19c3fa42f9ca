"""Deterministic lock-step simulation of the intersection scenario.

Each MPC step runs the same sequence for every agent: exchange pose records,
consume the CCMs of the previous step, estimate collision points, solve the
local OCP and publish the outgoing CCM. The plant, odometry and GNSS then
advance to the next step boundary.
"""

import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from app.agents.controller.configuration import AgentConfig
from app.agents.controller.state import ControlOutput
from app.agents.controller.utils import build_initial_condition, gather_neighbor_params
from app.config import config as app_config
from app.config.solver import load_solver_config
from app.control.ccp import CcpConfig
from app.control.dynamics import AgentState, discretize_zoh, simulate_continuous
from app.control.ocp import OcpLimits, OcpWeights
from app.localization.collision import (
    AgentTrack,
    CollisionPointEstimate,
    estimate_collision_point,
)
from app.localization.frames import enu_to_wgs, wgs_to_maneuver
from app.schemas.ccm import CcmMessage, CcmTimestamp, RvPoseRecord
from app.schemas.pose import Wgs84Pose
from app.schemas.scenario import AgentSpec, Scenario
from app.schemas.trace import AgentTraceInfo, SimTrace, StepRecord
from app.services.ccm_codec_service import CcmDecodeError, decode_ccm, encode_ccm
from app.services.localization_service import LocalizationService
from app.services.rv_buffer_service import RvBufferService
from app.services.sensor_service import OdometrySample, SensorService
from app.services.v2v_bus_service import V2VBusService
from app.tasks.mpc_tasks import run_mpc_step

logger = logging.getLogger(__name__)

# extra seconds of pose history kept beyond the look-back time
HISTORY_SLACK = 2.0


@dataclass
class _AgentRuntime:
    """Everything the simulator tracks for one agent."""

    spec: AgentSpec
    cfg: AgentConfig
    lane_point: np.ndarray
    direction: np.ndarray
    heading: float
    plant: AgentState
    sensors: SensorService
    localization: LocalizationService
    rv_buffer: RvBufferService
    odometry: OdometrySample
    s_c_true: dict[int, float] = field(default_factory=dict)
    u_apply: float = 0.0
    u_prev_star: np.ndarray | None = None

    @property
    def agent_id(self) -> int:
        return self.spec.id

    def true_enu(self) -> np.ndarray:
        return self.lane_point + self.plant.s * self.direction


def load_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario JSON file."""
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    return Scenario.model_validate(raw)


def build_ccp_config(sc: Scenario, spec: AgentSpec) -> CcpConfig:
    """Solver settings: defaults, then environment, then scenario, then agent weights."""
    kwargs = load_solver_config()
    kwargs.update(sc.ccp.model_dump(exclude_none=True))
    if "rho_x" in spec.weights.model_fields_set:
        kwargs["rho_x"] = spec.weights.rho_x
    return CcpConfig(**kwargs)


def build_agent_config(sc: Scenario, agent_id: int) -> AgentConfig:
    """Translate one agent of a scenario into its controller parameters."""
    spec = sc.agent(agent_id)
    n = sc.sim.horizon
    ccp_cfg = build_ccp_config(sc, spec)
    return AgentConfig(
        agent_id=spec.id,
        priority=spec.priority,
        model=discretize_zoh(spec.t_ax, sc.sim.ts),
        weights=OcpWeights(
            q=spec.weights.q,
            q_n=spec.weights.q_n,
            r=spec.weights.r,
            s_w=spec.weights.s,
            rho_x=ccp_cfg.rho_x,
        ),
        limits=OcpLimits.constant(
            u_min=spec.u_min,
            u_max=spec.u_max,
            v_max=spec.v_max_effective,
            v_ref=spec.v_ref,
            n=n,
        ),
        d_safe=spec.d_safe,
        safety_margin=spec.safety_margin,
        d_brake=spec.d_brake,
        critical_in_margin=spec.critical_in_margin,
        critical_out_margin=spec.critical_out_margin,
        uncertainty_gain=spec.uncertainty_gain,
        ccp_cfg=ccp_cfg,
    )


def lane_direction(heading: float) -> np.ndarray:
    """Unit (east, north) vector of a heading measured clockwise from North."""
    return np.array([math.sin(heading), math.cos(heading)])


def lane_crossing(
    p_i: np.ndarray, d_i: np.ndarray, p_l: np.ndarray, d_l: np.ndarray
) -> tuple[float, float]:
    """Lane coordinates of the crossing of two straight lanes, +inf when parallel."""
    m = np.column_stack([d_i, -d_l])
    if abs(np.linalg.det(m)) < 1e-12:
        return math.inf, math.inf
    a, b = np.linalg.solve(m, p_l - p_i)
    return float(a), float(b)


def _true_pose(rt: _AgentRuntime, origin: Wgs84Pose) -> Wgs84Pose:
    east, north = rt.true_enu()
    lat, lon, alt = enu_to_wgs(float(east), float(north), 0.0, origin)
    return Wgs84Pose(lat=lat, lon=lon, alt=alt, heading=rt.heading)


def _build_runtimes(sc: Scenario) -> list[_AgentRuntime]:
    runtimes = []
    for agent_id in sorted(a.id for a in sc.agents):
        spec = sc.agent(agent_id)
        heading = math.radians(spec.approach_heading_deg)
        runtimes.append(
            _AgentRuntime(
                spec=spec,
                cfg=build_agent_config(sc, agent_id),
                lane_point=np.array([spec.lane_point.east, spec.lane_point.north]),
                direction=lane_direction(heading),
                heading=heading,
                plant=AgentState(ax=spec.ax0, v=spec.v0, s=spec.s0),
                sensors=SensorService(spec.id, sc.noise, sc.seed),
                localization=LocalizationService(
                    spec.id, sc.noise, history_window=sc.sim.t_h + HISTORY_SLACK
                ),
                rv_buffer=RvBufferService(retention=sc.sim.t_h + HISTORY_SLACK),
                odometry=OdometrySample(v=spec.v0, yaw_rate=0.0, ax=spec.ax0),
            )
        )

    for rt in runtimes:
        for other in runtimes:
            if other is rt:
                continue
            a, _ = lane_crossing(rt.lane_point, rt.direction, other.lane_point, other.direction)
            rt.s_c_true[other.agent_id] = a
    return runtimes


def _rv_track(
    ego: _AgentRuntime, rv_buffer: RvBufferService, sender_id: int, t: float
) -> AgentTrack | None:
    current = rv_buffer.nearest(sender_id, t)
    if current is None:
        return None
    origin = ego.localization.origin
    history = []
    for record in rv_buffer.records(sender_id):
        pose = wgs_to_maneuver(record.pose, origin)
        history.append((record.timestamp, pose.x, pose.y))
    return AgentTrack(
        agent_id=sender_id,
        pose=wgs_to_maneuver(current.pose, origin),
        speed=current.speed,
        t=t,
        history=tuple(history),
        pos_sigma=current.pos_sigma,
        heading_sigma=current.heading_sigma,
    )


def _estimate_cps(rt: _AgentRuntime, sc: Scenario, t: float) -> list[CollisionPointEstimate]:
    ego = AgentTrack(
        agent_id=rt.agent_id,
        pose=rt.localization.pose(),
        speed=rt.odometry.v,
        t=t,
        history=tuple(rt.localization.history_samples()),
        pos_sigma=rt.localization.position_sigma(),
        heading_sigma=rt.localization.heading_sigma(),
    )
    cps = []
    for sender_id in rt.rv_buffer.senders():
        rv = _rv_track(rt, rt.rv_buffer, sender_id, t)
        if rv is None:
            continue
        cps.append(estimate_collision_point(ego, rv, horizon=sc.sim.t_f, t_h=sc.sim.t_h))
    return cps


def _receive_ccms(rt: _AgentRuntime, bus: V2VBusService, step: int, n: int) -> tuple[list[CcmMessage], bool]:
    messages = []
    delay_ok = True
    for envelope in bus.deliver(step, rt.agent_id):
        delay_ok = delay_ok and envelope.step_sent == step - 1
        try:
            messages.append(decode_ccm(envelope.payload, n))
        except CcmDecodeError as e:
            logger.warning(
                f"Agent {rt.agent_id}: discarding CCM from {envelope.sender_id}: {e}"
            )
    return messages, delay_ok


def _advance_plant(rt: _AgentRuntime, sc: Scenario, origin: Wgs84Pose, t0: float) -> None:
    """Integrate plant and sensors from ``t0`` to the next MPC step boundary."""
    sim = sc.sim
    n_odo = round(sim.ts / sim.odometry_period)
    gnss_every = max(round(sim.gnss_period / sim.odometry_period), 1)
    substeps = math.ceil(sim.plant_substeps / n_odo)
    t_ax = rt.spec.t_ax * rt.spec.plant_t_ax_scale
    dt = sim.ts / n_odo
    tick0 = round(t0 / sim.odometry_period)

    for i in range(1, n_odo + 1):
        rt.plant = simulate_continuous(t_ax, rt.plant, rt.u_apply, dt, substeps)
        if rt.plant.v < 0.0:
            # service brakes hold the vehicle once it stands
            rt.plant = AgentState(ax=0.0, v=0.0, s=rt.plant.s)
        rt.odometry = rt.sensors.sample_odometry(rt.plant.v, 0.0, rt.plant.ax)
        rt.localization.predict(rt.odometry, dt)
        if (tick0 + i) % gnss_every == 0:
            t_fix = t0 + i * dt
            rt.localization.update(rt.sensors.sample_gnss(_true_pose(rt, origin)), t_fix)


def _origin(sc: Scenario) -> Wgs84Pose:
    return Wgs84Pose.from_degrees(sc.origin.lat_deg, sc.origin.lon_deg, sc.origin.alt_m)


def _pair_metrics(
    rt: _AgentRuntime, by_id: dict[int, _AgentRuntime], cps: list[CollisionPointEstimate]
) -> tuple[dict[int, float], dict[int, float], dict[int, float], dict[int, float]]:
    d_tilde, d_true, dist, dist_est = {}, {}, {}, {}
    for other_id, s_c in rt.s_c_true.items():
        other = by_id[other_id]
        d_true[other_id] = abs(s_c - rt.plant.s) if math.isfinite(s_c) else math.inf
        s_c_other = other.s_c_true[rt.agent_id]
        if math.isfinite(s_c) and math.isfinite(s_c_other):
            dist[other_id] = abs(s_c - rt.plant.s) + abs(s_c_other - other.plant.s)
        else:
            dist[other_id] = math.inf
    for cp in cps:
        d_tilde[cp.neighbor_id] = cp.signed_distance
        if cp.exists:
            dist_est[cp.neighbor_id] = abs(cp.signed_distance) + abs(cp.rv_signed_distance)
        else:
            dist_est[cp.neighbor_id] = math.inf
    return d_tilde, d_true, dist, dist_est


def _control_agent(
    rt: _AgentRuntime,
    sc: Scenario,
    bus: V2VBusService,
    priorities: dict[int, int],
    step: int,
    t: float,
) -> tuple[ControlOutput, AgentState, list[CollisionPointEstimate], int, bool]:
    n = sc.sim.horizon
    rx, delay_ok = _receive_ccms(rt, bus, step, n)
    cps = _estimate_cps(rt, sc, t)
    x_k = build_initial_condition(rt.odometry.ax, rt.odometry.v, cps)

    expected = (
        CcmTimestamp.from_seconds(sc.sim.start_time_s + (step - 1) * sc.sim.ts)
        if step > 0
        else None
    )
    neighbors = gather_neighbor_params(
        rx,
        ego_id=rt.agent_id,
        ego_priority=rt.spec.priority,
        conflict_priorities={cp.neighbor_id: priorities[cp.neighbor_id] for cp in cps if cp.exists},
        n=n,
        expected_stamp=expected,
    )
    out = run_mpc_step(
        rt.cfg,
        x_k,
        neighbors,
        cps,
        u_prev_star=rt.u_prev_star,
        u_prev=rt.u_apply,
        step_index=step,
        t_stamp=sc.sim.start_time_s + step * sc.sim.ts,
    )
    return out, x_k, cps, len(rx), delay_ok


def run_scenario(sc: Scenario) -> SimTrace:
    """
    Run a scenario to completion.

    Args:
        sc: Validated scenario

    Returns:
        SimTrace: One record per agent per MPC step

    Raises:
        QpSolverError: An agent's QP solver failed
        ControllerError: An agent produced an input outside its bounds
        BusSynchronyError: A CCM was not consumed exactly one step after sending
    """
    started = time.perf_counter()
    workers = sc.sim.workers if "workers" in sc.sim.model_fields_set else app_config.SIM_WORKERS
    logger.info(
        f"🚦 Running scenario '{sc.name}' with {len(sc.agents)} agents, "
        f"{sc.sim.n_steps} steps, seed {sc.seed}"
    )

    origin = _origin(sc)
    runtimes = _build_runtimes(sc)
    by_id = {rt.agent_id: rt for rt in runtimes}
    priorities = {rt.agent_id: rt.spec.priority for rt in runtimes}
    bus = V2VBusService(list(by_id), drop_prob=sc.drop_prob, seed=sc.seed)

    for rt in runtimes:
        rt.odometry = rt.sensors.sample_odometry(rt.plant.v, 0.0, rt.plant.ax)
        rt.localization.initialize(rt.sensors.sample_gnss(_true_pose(rt, origin)), 0.0)

    trace = SimTrace(
        scenario=sc.name,
        seed=sc.seed,
        ts=sc.sim.ts,
        agents=[
            AgentTraceInfo(
                agent_id=rt.agent_id,
                priority=rt.spec.priority,
                v_ref=rt.spec.v_ref,
                d_safe=rt.spec.d_safe,
                s_c=dict(rt.s_c_true),
            )
            for rt in runtimes
        ],
    )

    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for step in range(sc.sim.n_steps):
            t = step * sc.sim.ts
            bus.begin_step(step)

            # pose records are exchanged within the step
            for rt in runtimes:
                record = RvPoseRecord(
                    sender_id=rt.agent_id,
                    timestamp=t,
                    pose=rt.localization.wgs_pose(),
                    speed=rt.odometry.v,
                    pos_sigma=rt.localization.position_sigma(),
                    heading_sigma=rt.localization.heading_sigma(),
                )
                for other in runtimes:
                    if other is not rt:
                        other.rv_buffer.store(record)

            def solve(rt: _AgentRuntime, step=step, t=t):
                return _control_agent(rt, sc, bus, priorities, step, t)

            if executor is not None:
                results = list(executor.map(solve, runtimes))
            else:
                results = [solve(rt) for rt in runtimes]

            for rt, (out, x_k, cps, consumed, delay_ok) in zip(runtimes, results, strict=True):
                payload = encode_ccm(out.ccm_out, sc.sim.horizon)
                bus.publish(step, rt.agent_id, payload)

                d_tilde, d_true, dist, dist_est = _pair_metrics(rt, by_id, cps)
                diag = out.diagnostics
                ccp = diag.ccp
                trace.records.append(
                    StepRecord(
                        step=step,
                        t=t,
                        agent_id=rt.agent_id,
                        s=rt.plant.s,
                        v=rt.plant.v,
                        ax=rt.plant.ax,
                        s_est=x_k.s,
                        v_est=rt.odometry.v,
                        u=out.u_apply,
                        eps_c=float(ccp.eps_c.sum()) if ccp else 0.0,
                        eps_x=ccp.eps_x if ccp else 0.0,
                        ccp_iters=ccp.iterations if ccp else 0,
                        rho_c=ccp.rho_c if ccp else 0.0,
                        qp_iters=ccp.qp_iterations if ccp else 0,
                        converged=ccp.converged if ccp else False,
                        fallback=diag.fallback,
                        terminal_active=diag.terminal_active,
                        n_collision_cons=diag.n_collision_cons,
                        d_constraint=diag.d_constraint,
                        stale=list(diag.stale),
                        missing=list(diag.missing),
                        consumed_ccms=consumed,
                        bus_delay_ok=delay_ok,
                        ccm_bytes=len(payload),
                        ccm_hash=hashlib.sha256(payload).hexdigest()[:16],
                        d_tilde=d_tilde,
                        d_true=d_true,
                        dist=dist,
                        dist_est=dist_est,
                    )
                )
                if diag.fallback:
                    logger.warning(f"⚠️ {rt.spec.label} braking at t={t:.1f} s")
                rt.u_apply = out.u_apply
                rt.u_prev_star = out.u_star

            for rt in runtimes:
                _advance_plant(rt, sc, origin, t)
    finally:
        if executor is not None:
            executor.shutdown()

    trace.runtime_s = time.perf_counter() - started
    trace.dropped_ccms = bus.dropped
    if bus.dropped:
        logger.info(f"📉 Bus dropped {bus.dropped} CCMs")
    logger.info(
        f"✅ Scenario '{sc.name}' finished: {len(trace.records)} records in {trace.runtime_s:.2f} s"
    )
    return trace
