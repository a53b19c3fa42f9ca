import math
from dataclasses import replace

import numpy as np
import pytest

from app.agents.controller.configuration import AgentConfig, Configuration
from app.agents.controller.utils import (
    build_initial_condition,
    collision_coordinates,
    gather_neighbor_params,
)
from app.control.ccp import CcpConfig
from app.control.dynamics import AgentState, discretize_zoh
from app.control.ocp import OcpLimits, OcpWeights
from app.localization.collision import CollisionPointEstimate
from app.schemas.ccm import CcmConflict, CcmMessage, CcmTimestamp
from app.tasks.mpc_tasks import run_mpc_step

N = 20
STAMP = CcmTimestamp(minute_of_hour=0, ms_of_minute=0)


def agent_config(agent_id=1, priority=2, v_ref=12.0, d_brake=5.0, safety_margin=0.0) -> AgentConfig:
    return AgentConfig(
        agent_id=agent_id,
        priority=priority,
        model=discretize_zoh(0.4, 0.2),
        weights=OcpWeights(q=1.0, q_n=1.0, r=5.0, s_w=5.0),
        limits=OcpLimits.constant(-5.0, 2.0, 1.1 * v_ref, v_ref, N),
        d_safe=15.0,
        safety_margin=safety_margin,
        d_brake=d_brake,
        ccp_cfg=CcpConfig(),
    )


def cp(neighbor_id, d, rv_d=50.0) -> CollisionPointEstimate:
    return CollisionPointEstimate(
        exists=True,
        point=np.zeros(2),
        signed_distance=d,
        neighbor_id=neighbor_id,
        rv_signed_distance=rv_d,
    )


def ccm(sender, receiver, d_seq, stamp=STAMP) -> CcmMessage:
    return CcmMessage(
        t_stamp=stamp,
        ego_id=sender,
        conflicts=[CcmConflict(neighbor_id=receiver, d_seq=list(d_seq))],
    )


def predict_positions(cfg: AgentConfig, x0: AgentState, u: np.ndarray, steps: int) -> np.ndarray:
    x = x0.as_array()
    out = []
    for j in range(steps):
        x = cfg.model.a_d @ x + cfg.model.b_d * u[min(j, len(u) - 1)]
        out.append(x[2])
    return np.array(out)


@pytest.mark.parametrize(
    "cps,expected",
    [
        ([cp(2, 40.0)], -40.0),
        ([], 0.0),
        ([cp(2, 40.0), cp(3, 30.0)], -30.0),
        ([CollisionPointEstimate.none(2)], 0.0),
        ([cp(2, -5.0), cp(3, 30.0)], 5.0),
    ],
)
def test_build_initial_condition(cps, expected):
    x = build_initial_condition(0.5, 10.0, cps)
    assert x == AgentState(ax=0.5, v=10.0, s=expected)


def test_collision_coordinates():
    coords = collision_coordinates(-30.0, [cp(2, 30.0), cp(3, 45.0), CollisionPointEstimate.none(4)])
    assert coords[2] == pytest.approx(0.0)
    assert coords[3] == pytest.approx(15.0)
    assert math.isinf(coords[4])


def test_gather_extracts_higher_priority_trajectories():
    d_seq = np.linspace(10.0, 30.0, N)
    out = gather_neighbor_params(
        [ccm(2, 1, d_seq), ccm(3, 1, np.ones(N))],
        ego_id=1,
        ego_priority=2,
        conflict_priorities={2: 1, 3: 3},
        n=N,
    )
    assert [p.neighbor_id for p in out.params] == [2]
    np.testing.assert_allclose(out.params[0].d_seq, d_seq)
    assert out.higher_priority_ids == frozenset({2})
    assert out.stale == ()
    assert out.missing == ()


def test_highest_priority_agent_gathers_nothing():
    out = gather_neighbor_params(
        [ccm(2, 1, np.zeros(N))], ego_id=1, ego_priority=1, conflict_priorities={2: 2}, n=N
    )
    assert out.params == []
    assert out.higher_priority_ids == frozenset()


def test_missing_ccm_is_worst_case():
    out = gather_neighbor_params([], ego_id=1, ego_priority=3, conflict_priorities={2: 1, 4: 2}, n=N)
    assert out.missing == (2, 4)
    for param in out.params:
        np.testing.assert_array_equal(param.d_seq, np.zeros(N))


def test_ccm_without_entry_for_ego_counts_as_missing():
    out = gather_neighbor_params(
        [ccm(2, 5, np.ones(N))], ego_id=1, ego_priority=2, conflict_priorities={2: 1}, n=N
    )
    assert out.missing == (2,)
    np.testing.assert_array_equal(out.params[0].d_seq, np.zeros(N))


def test_wrong_length_counts_as_missing():
    out = gather_neighbor_params(
        [ccm(2, 1, np.ones(N - 1))], ego_id=1, ego_priority=2, conflict_priorities={2: 1}, n=N
    )
    assert out.missing == (2,)
    np.testing.assert_array_equal(out.params[0].d_seq, np.zeros(N))


def test_stale_stamp_is_flagged():
    old = CcmTimestamp(minute_of_hour=0, ms_of_minute=400)
    expected = CcmTimestamp(minute_of_hour=0, ms_of_minute=600)
    out = gather_neighbor_params(
        [ccm(2, 1, np.ones(N) * 50.0, stamp=old)],
        ego_id=1,
        ego_priority=2,
        conflict_priorities={2: 1},
        n=N,
        expected_stamp=expected,
    )
    assert out.stale == (2,)
    np.testing.assert_array_equal(out.params[0].d_seq, np.zeros(N))


def test_agent_config_validation():
    with pytest.raises(ValueError):
        agent_config(priority=0)
    with pytest.raises(ValueError):
        agent_config(safety_margin=-1.0)
    cfg = agent_config(safety_margin=0.5)
    assert cfg.horizon == N
    assert cfg.d_constraint == 15.5


def test_configuration_from_runnable_config():
    cfg = agent_config()
    configuration = Configuration.from_runnable_config(
        {"configurable": {"agent": cfg, "step_index": 4, "t_stamp": 0.8, "unrelated": 1}}
    )
    assert configuration.agent is cfg
    assert configuration.step_index == 4
    assert configuration.t_stamp == 0.8


def test_free_road_holds_reference_speed():
    cfg = agent_config(v_ref=12.0)
    gathered = gather_neighbor_params([], ego_id=1, ego_priority=2, conflict_priorities={}, n=N)
    out = run_mpc_step(cfg, AgentState(ax=0.0, v=12.0, s=0.0), gathered, [])
    assert out.u_apply == pytest.approx(0.0, abs=1e-9)
    assert out.ccm_out.conflicts == []
    assert out.diagnostics.n_collision_cons == 0
    assert not out.diagnostics.fallback


def test_free_road_accelerates_towards_reference():
    cfg = agent_config(v_ref=12.0)
    gathered = gather_neighbor_params([], ego_id=1, ego_priority=2, conflict_priorities={}, n=N)
    out = run_mpc_step(cfg, AgentState(ax=0.0, v=8.0, s=0.0), gathered, [])
    assert 0.0 < out.u_apply <= 2.0
    assert out.diagnostics.ccp.converged


def test_single_agent_closed_loop_settles_at_reference():
    cfg = agent_config(v_ref=10.0)
    gathered = gather_neighbor_params([], ego_id=1, ego_priority=1, conflict_priorities={}, n=N)
    x = AgentState(ax=0.0, v=6.0, s=-100.0)
    u_prev, u_star = 0.0, None
    for step in range(250):
        out = run_mpc_step(cfg, x, gathered, [], u_prev_star=u_star, u_prev=u_prev, step_index=step)
        u_prev, u_star = out.u_apply, out.u_star
        x = AgentState.from_array(cfg.model.a_d @ x.as_array() + cfg.model.b_d * u_prev)
    assert x.v == pytest.approx(10.0, abs=0.05)


def test_outgoing_ccm_matches_prediction():
    cfg = agent_config(agent_id=2, priority=1, v_ref=10.0)
    cps = [cp(1, 40.0, rv_d=60.0), cp(3, 55.0), CollisionPointEstimate.none(4)]
    x_k = build_initial_condition(0.0, 10.0, cps)
    gathered = gather_neighbor_params(
        [], ego_id=2, ego_priority=1, conflict_priorities={1: 2, 3: 3}, n=N
    )
    out = run_mpc_step(cfg, x_k, gathered, cps, t_stamp=61.2)

    assert out.ccm_out.ego_id == 2
    assert out.ccm_out.t_stamp == CcmTimestamp(minute_of_hour=1, ms_of_minute=1200)
    assert [c.neighbor_id for c in out.ccm_out.conflicts] == [1, 3]
    s = predict_positions(cfg, x_k, out.u_star, N + 1)[1:]
    s_c = {1: x_k.s + 40.0, 3: x_k.s + 55.0}
    for conflict in out.ccm_out.conflicts:
        assert len(conflict.d_seq) == N
        np.testing.assert_allclose(conflict.d_seq, np.abs(s - s_c[conflict.neighbor_id]), atol=1e-9)


def test_missing_neighbor_activates_collision_constraints():
    cfg = agent_config(agent_id=1, priority=2)
    cps = [cp(2, 40.0, rv_d=30.0)]
    gathered = gather_neighbor_params([], ego_id=1, ego_priority=2, conflict_priorities={2: 1}, n=N)
    out = run_mpc_step(cfg, build_initial_condition(0.0, 12.0, cps), gathered, cps)
    assert out.diagnostics.missing == (2,)
    assert out.diagnostics.n_collision_cons == N
    assert out.u_apply < 0.0


def test_high_priority_agent_carries_no_collision_constraints():
    cfg = agent_config(agent_id=2, priority=1)
    cps = [cp(1, 30.0, rv_d=40.0)]
    gathered = gather_neighbor_params(
        [ccm(1, 2, np.zeros(N))], ego_id=2, ego_priority=1, conflict_priorities={1: 2}, n=N
    )
    out = run_mpc_step(cfg, build_initial_condition(0.0, 12.0, cps), gathered, cps)
    assert out.diagnostics.n_collision_cons == 0
    assert not out.diagnostics.terminal_active


def test_unreachable_terminal_constraint_falls_back_to_braking():
    cfg = agent_config(agent_id=1, priority=2, d_brake=50.0)
    cps = [cp(2, 60.0, rv_d=20.0)]
    gathered = gather_neighbor_params(
        [ccm(2, 1, np.full(N, 100.0))], ego_id=1, ego_priority=2, conflict_priorities={2: 1}, n=N
    )
    x_k = build_initial_condition(0.0, 0.0, cps)
    out = run_mpc_step(cfg, x_k, gathered, cps)
    assert out.diagnostics.terminal_active
    assert out.diagnostics.fallback
    assert out.diagnostics.ccp is None
    assert out.u_apply == 0.0
    assert [c.neighbor_id for c in out.ccm_out.conflicts] == [2]


def test_fallback_brakes_before_the_region():
    cfg = agent_config(agent_id=1, priority=2, d_brake=50.0)
    cps = [cp(2, 60.0, rv_d=20.0)]
    gathered = gather_neighbor_params(
        [ccm(2, 1, np.full(N, 100.0))], ego_id=1, ego_priority=2, conflict_priorities={2: 1}, n=N
    )
    x_k = build_initial_condition(0.0, 3.0, cps)
    out = run_mpc_step(cfg, x_k, gathered, cps)
    assert out.diagnostics.fallback
    # stop at s_in = -15 from s = -60
    assert out.u_apply == pytest.approx(-(3.0**2) / (2 * 45.0))


def test_pose_uncertainty_widens_the_collision_constraint():
    cfg = agent_config(agent_id=1, priority=2)
    gathered = gather_neighbor_params(
        [ccm(2, 1, np.full(N, 17.0))], ego_id=1, ego_priority=2, conflict_priorities={2: 1}, n=N
    )

    exact = [cp(2, 40.0)]
    out = run_mpc_step(cfg, build_initial_condition(0.0, 12.0, exact), gathered, exact)
    assert out.diagnostics.d_constraint == pytest.approx(15.0)
    assert out.diagnostics.n_collision_cons == 0

    uncertain = [replace(cp(2, 40.0), sigma=2.0)]
    out = run_mpc_step(cfg, build_initial_condition(0.0, 12.0, uncertain), gathered, uncertain)
    assert out.diagnostics.d_constraint == pytest.approx(15.0 + cfg.uncertainty_gain * 2.0)
    assert out.diagnostics.n_collision_cons == N
